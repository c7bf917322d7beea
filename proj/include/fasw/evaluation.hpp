#pragma once

#include <functional>
#include <vector>

#include "fasw/baselines.hpp"
#include "fasw/metrics.hpp"
#include "fasw/sre.hpp"
#include "fasw/wrapper.hpp"

namespace fasw {

/// Batch of N x 3 x H x W images -> N spoof scores.
using Scorer = std::function<std::vector<double>(const Tensor& images)>;

/// 1 - sigmoid(live logit), with the SRE coupling when an SRE is given.
Scorer model_scorer(const FasModel& model, const Sre* sre = nullptr);
/// Spoof-class probability of a binary head.
Scorer head_scorer(const FasModel& model, const BinaryHead& head);
Scorer inference_scorer(const InferenceModel& m);
/// Head scorer for head-based baselines, model scorer otherwise.
Scorer baseline_scorer(const BaselineResult& r);

/// Scores every sample of the manifest in order, in chunks.
ScoreSet score_manifest(const Scorer& scorer, const DatasetManifest& m, int chunk = 32);

}  // namespace fasw

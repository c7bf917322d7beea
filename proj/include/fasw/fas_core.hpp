#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fasw/autograd.hpp"
#include "fasw/data_synth.hpp"
#include "fasw/nn.hpp"
#include "fasw/training.hpp"

namespace fasw {

struct ModelConfig {
    int levels = 3;
    std::vector<int> channels{8, 16, 32};
    int height = 64;
    int width = 64;
    double leaky_slope = 0.2;
    std::uint64_t seed = 1;

    /// Depth map is predicted at a quarter of the input resolution.
    int depth_height() const { return height / 4; }
    int depth_width() const { return width / 4; }
};

/// Throws config errors for L < 2, channel-count mismatch, or sizes not divisible by 2^L.
void validate(const ModelConfig& cfg);

/// Level t has shape N x C_t x H/2^t x W/2^t.
using FeaturePyramid = std::vector<ad::Var>;

std::vector<Shape> pyramid_shapes(const ModelConfig& cfg, int batch);

struct SceOutputs {
    ad::Var depth;       // N x 1 x Hd x Wd in [0,1]
    ad::Var live_logit;  // N x 1
};

enum class ModelRole { source_teacher, target_teacher, student };
const char* to_string(ModelRole r);

/// Extractor f: one stride-2 3x3 convolution plus leaky rectifier per level.
/// SCE g: a depth head over all levels resized to the depth grid and a
/// logit head over the pooled levels.
class FasModel {
public:
    explicit FasModel(const ModelConfig& cfg, ModelRole role = ModelRole::student);

    const ModelConfig& config() const { return cfg_; }
    ModelRole role() const { return role_; }
    void set_role(ModelRole r) { role_ = r; }

    FeaturePyramid extract(const ad::Var& images) const;
    FeaturePyramid extract(const Tensor& images) const { return extract(ad::Var(images)); }
    SceOutputs sce(const FeaturePyramid& pyramid) const;

    /// Parameters named "extractor.*" and "sce.*".
    nn::ParamSet extractor_params() const;
    nn::ParamSet sce_params() const;
    nn::ParamSet params() const;

    /// Independent copy with its own parameter storage.
    FasModel clone() const;

private:
    ModelConfig cfg_;
    ModelRole role_;
    std::vector<nn::Conv2d> levels_;
    nn::Conv2d depth_conv_;
    nn::Linear logit_;
};

FasModel build_toy_fas_model(const ModelConfig& cfg);

/// Centered radial bump in [0,1] (1 x Hd x Wd) used as the live depth target.
Tensor live_depth_target(int height, int width);
/// N x 1 x Hd x Wd: the bump for live samples, zeros for spoof.
Tensor depth_targets(const std::vector<Label>& labels, int height, int width);

/// Mean squared depth error plus binary cross-entropy on the live logit.
ad::Var original_loss(const SceOutputs& out, const Tensor& depth_target, const Tensor& live_target);
ad::Var original_loss(const SceOutputs& out, const std::vector<Label>& labels);

/// Pooled last-level features -> affine -> 2-way softmax (column 0 live, 1 spoof).
class BinaryHead {
public:
    BinaryHead() = default;
    BinaryHead(int in_features, std::uint64_t seed);

    ad::Var logits(const FeaturePyramid& pyramid) const;
    ad::Var probabilities(const FeaturePyramid& pyramid) const;
    nn::ParamSet params() const;
    nn::Linear& fc() { return fc_; }
    BinaryHead clone() const;

private:
    nn::Linear fc_;
};

/// Creates the head and freezes the backbone (extractor and SCE).
BinaryHead attach_binary_head(FasModel& model, std::uint64_t seed);

/// Row-wise 2-class targets: 0 live, 1 spoof.
std::vector<int> class_indices(const std::vector<Label>& labels);
/// Mean cross-entropy of the 2-way head against class indices.
ad::Var head_cross_entropy(const ad::Var& logits, const std::vector<int>& classes);

/// Minimises L_Orig over batches from `next`; `epoch_size` sets the number
/// of batches per epoch when the schedule leaves it at 0.
LossHistory train_original(FasModel& model, const BatchSampler& next, std::size_t epoch_size,
                           const TrainSchedule& schedule);

/// Fresh model from `cfg` trained on the source manifest.
FasModel pretrain_source(const ModelConfig& cfg, const DatasetManifest& source_train, const TrainSchedule& schedule,
                         LossHistory* history = nullptr);

/// Trains only the head on frozen backbone features (cross-entropy).
LossHistory train_binary_head(const FasModel& backbone, BinaryHead& head, const DatasetManifest& train,
                              const TrainSchedule& schedule);

/// Spoof score = 1 - sigmoid(live logit), per sample.
std::vector<double> spoof_scores(const ad::Var& live_logit);

}  // namespace fasw

#include "fasw/evaluation.hpp"

#include "fasw/error.hpp"
#include "fasw/ops.hpp"

namespace fasw {

Scorer model_scorer(const FasModel& model, const Sre* sre) {
    return [&model, sre](const Tensor& images) {
        ad::NoGradGuard no_grad;
        return spoof_scores(scored_forward(model, sre, ad::Var(images)).sce.live_logit);
    };
}

Scorer head_scorer(const FasModel& model, const BinaryHead& head) {
    return [&model, &head](const Tensor& images) {
        ad::NoGradGuard no_grad;
        const Tensor p = head.probabilities(model.extract(images)).value();
        std::vector<double> out;
        for (int i = 0; i < p.dim(0); ++i) out.push_back(p[static_cast<std::size_t>(i) * 2 + 1]);
        return out;
    };
}

Scorer inference_scorer(const InferenceModel& m) {
    return [&m](const Tensor& images) { return predict(m, images).scores; };
}

Scorer baseline_scorer(const BaselineResult& r) {
    return r.head ? head_scorer(r.model, *r.head) : model_scorer(r.model);
}

ScoreSet score_manifest(const Scorer& scorer, const DatasetManifest& m, int chunk) {
    require(chunk > 0, ErrorKind::config, "chunk must be positive");
    ScoreSet s;
    for (std::size_t b = 0; b < m.samples.size(); b += static_cast<std::size_t>(chunk)) {
        std::vector<std::size_t> rows;
        for (std::size_t i = b; i < std::min(m.samples.size(), b + static_cast<std::size_t>(chunk)); ++i) rows.push_back(i);
        const Batch batch = make_batch(m, rows);
        const std::vector<double> scores = scorer(batch.images);
        require(scores.size() == rows.size(), ErrorKind::pipeline, "scorer returned the wrong number of scores");
        for (std::size_t j = 0; j < rows.size(); ++j) {
            const ImageSample& smp = m.samples[rows[j]];
            s.scores.push_back(scores[j]);
            s.labels.push_back(smp.label);
            s.attack_types.push_back(smp.label == Label::spoof ? smp.spoof_micro : std::string());
        }
    }
    return s;
}

}  // namespace fasw

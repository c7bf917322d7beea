#pragma once

#include <memory>
#include <vector>

#include "fasw/data_synth.hpp"
#include "fasw/fas_core.hpp"
#include "fasw/training.hpp"

namespace fasw {

/// Spoof region estimator: every pyramid level is centred per channel over
/// space, upsampled to the input resolution, concatenated, then passed
/// through conv3x3 -> leaky -> conv3x3 -> sigmoid. A learnable scalar gate lets the mask feed the live logit
/// (live_logit += gate * mean(mask)), which is how L_Orig reaches the head
/// once mask supervision stops.
class Sre {
public:
    Sre() = default;
    Sre(const ModelConfig& model_cfg, int hidden, std::uint64_t seed);

    /// Soft mask N x 1 x H0 x W0 in [0,1].
    ad::Var forward(const FeaturePyramid& pyramid) const;
    /// Names "sre.conv1.*", "sre.conv2.*", "sre.gate".
    nn::ParamSet params() const;
    Sre clone() const;

    int hidden() const { return hidden_; }
    int out_height() const { return height_; }
    int out_width() const { return width_; }
    const std::vector<int>& level_channels() const { return channels_; }
    nn::Conv2d& conv1() { return conv1_; }
    nn::Conv2d& conv2() { return conv2_; }
    const ad::Var& gate() const { return gate_; }

private:
    std::vector<int> channels_;
    int height_ = 0, width_ = 0, hidden_ = 0;
    double slope_ = 0.2;
    nn::Conv2d conv1_, conv2_;
    ad::Var gate_;
};

/// Binary view of a soft mask (soft >= 0.5).
Tensor binary_view(const Tensor& soft);

/// live_logit + gate * per-sample mean of the mask; the plain logit when sre is null.
ad::Var coupled_live_logit(const SceOutputs& out, const Sre* sre, const ad::Var& mask);

/// Model forward used wherever a score is needed: SCE outputs with the live
/// logit coupled to the SRE mask when an SRE is attached.
struct ScoredForward {
    FeaturePyramid pyramid;
    SceOutputs sce;   // live_logit already coupled
    ad::Var mask;     // undefined without SRE
};
ScoredForward scored_forward(const FasModel& model, const Sre* sre, const ad::Var& images);

enum class MaskProvenance { oracle, reconstructor };

struct PreliminaryMask {
    Tensor mask;  // 1 x H0 x W0, binary
    double threshold_used = 0.0;
    MaskProvenance provenance = MaskProvenance::oracle;
};

class Reconstructor {
public:
    virtual ~Reconstructor() = default;
    /// Estimated live counterpart, same shape and range as the input.
    virtual Tensor reconstruct(const ImageSample& sample) const = 0;
    virtual MaskProvenance provenance() const = 0;
};

/// Returns the stored base live image of a synthetic sample.
class OracleReconstructor : public Reconstructor {
public:
    Tensor reconstruct(const ImageSample& sample) const override;
    MaskProvenance provenance() const override { return MaskProvenance::oracle; }
};

/// Projects the image onto the principal subspace of live training images.
class LiveSubspaceReconstructor : public Reconstructor {
public:
    LiveSubspaceReconstructor(const DatasetManifest& live_source, int components);
    Tensor reconstruct(const ImageSample& sample) const override;
    MaskProvenance provenance() const override { return MaskProvenance::reconstructor; }

private:
    Shape shape_;
    std::vector<double> mean_;
    std::vector<std::vector<double>> basis_;  // orthonormal rows
};

/// Channel-sum of |spoof - live|: 1 x H x W on the [0, C] scale.
Tensor difference_gray(const Tensor& spoof, const Tensor& live);
/// 1 where p >= threshold, else 0.
Tensor threshold_mask(const Tensor& gray, double threshold);

/// All-zero for live samples (the reconstructor is not called).
PreliminaryMask compute_preliminary_mask(const ImageSample& sample, const Reconstructor& rec, double threshold);

/// Nearest-neighbour resampling of an N x C x H x W (or C x H x W) tensor.
Tensor resample_nearest(const Tensor& t, int out_h, int out_w);

/// Mean |M - I_pre| with I_pre resampled to M's grid.
ad::Var mask_loss(const ad::Var& soft, const Tensor& preliminary);

/// Soft IoU: sum(m*g) / sum(m + g - m*g); 1 when both are empty.
double soft_iou(const Tensor& soft, const Tensor& gt);

struct Stage1Schedule {
    TrainSchedule train;
    int mask_epochs = 5;
    double threshold = 0.1;
    double mask_weight = 1.0;
};

struct Stage1Result {
    FasModel target;  // f^T
    Sre sre;
    LossHistory history;
};

/// Fine-tunes a copy of the source model together with the SRE on target
/// data. Mask supervision applies during the first `mask_epochs` epochs.
/// The source model is never modified.
Stage1Result finetune_stage1(const FasModel& source, const Sre& sre_init, const DatasetManifest& target_train,
                             const Reconstructor& rec, const Stage1Schedule& schedule);

/// Mean soft-mask IoU against ground truth over the spoof samples of a manifest.
double mean_spoof_iou(const FasModel& model, const Sre& sre, const DatasetManifest& m);

}  // namespace fasw

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fasw/fas_core.hpp"
#include "fasw/sre.hpp"
#include "fasw/training.hpp"

namespace fasw {

enum class DiscMode { chained, shared, single_concat };
const char* to_string(DiscMode m);
DiscMode parse_disc_mode(const std::string& s);

inline constexpr double kProbEpsilon = 1e-7;

struct DiscriminatorOutputs {
    std::vector<ad::Var> levels;  // per-level activation maps (before pooling)
    ad::Var final_prob;           // N x 1, clamped to [eps, 1 - eps]
};

/// Chain of per-level blocks (stride-2 3x3 conv + leaky). Level 1 sees f_1;
/// level l > 1 sees f_l concatenated with the previous block's activation map
/// resized to f_l's grid. The last activation is pooled, mapped to a scalar
/// and squashed. In single_concat mode one block sees all levels resized to
/// the level-1 grid.
class MultiScaleDiscriminator {
public:
    MultiScaleDiscriminator() = default;
    MultiScaleDiscriminator(std::vector<int> level_channels, int hidden, DiscMode mode, std::uint64_t seed,
                            double leaky_slope = 0.2);

    DiscriminatorOutputs forward(const FeaturePyramid& pyramid) const;
    /// Parameter names "<prefix>.level<l>.*" and "<prefix>.out.*".
    nn::ParamSet params(const std::string& prefix) const;

    int chain_length() const { return static_cast<int>(channels_.size()); }
    DiscMode mode() const { return mode_; }
    std::vector<nn::Conv2d>& blocks() { return blocks_; }
    nn::Linear& out() { return out_; }

private:
    std::vector<int> channels_;
    int hidden_ = 0;
    DiscMode mode_ = DiscMode::chained;
    double slope_ = 0.2;
    std::vector<nn::Conv2d> blocks_;
    nn::Linear out_;
};

/// Source and target discriminators. In shared mode both point at the same network.
struct DiscriminatorPair {
    std::shared_ptr<MultiScaleDiscriminator> source;
    std::shared_ptr<MultiScaleDiscriminator> target;

    /// Unique parameters: "disc_S.*" and "disc_T.*", or "disc_shared.*".
    nn::ParamSet params() const;
};

DiscriminatorPair make_discriminators(const ModelConfig& cfg, DiscMode mode, int hidden, std::uint64_t seed);

struct AdversarialLosses {
    ad::Var generator;      // -mean log d_teacher - mean log(1 - d_student)
    ad::Var discriminator;  // -mean log(1 - d_teacher) - mean log d_student
};

/// Probabilities must lie within [eps, 1 - eps]. The generator loss takes no
/// gradient through the teacher probabilities.
AdversarialLosses adversarial_losses(const ad::Var& d_teacher, const ad::Var& d_student);

/// Mean |M_new - M_src|; M_src is treated as a constant.
ad::Var spoof_consistency_loss(const ad::Var& mask_new, const ad::Var& mask_src);

struct LossWeights {
    double orig = 1.0;   // lambda1
    double spoof = 1.0;  // lambda2
    double src = 0.1;    // lambda3
    double tgt = 0.1;    // lambda4
};
void validate(const LossWeights& w);
LossWeights parse_lambdas(const std::string& csv);

/// lambda1 L_Orig + lambda2 L_Spoof + lambda3 L_S + lambda4 L_T. Terms with a
/// zero weight may be left undefined.
ad::Var total_loss(const ad::Var& l_orig, const ad::Var& l_spoof, const ad::Var& l_s, const ad::Var& l_t,
                   const LossWeights& w);

struct Stage2Options {
    TrainSchedule train;      // student optimiser settings
    double disc_lr = 1e-4;
};

struct Stage2Result {
    LossHistory history;
};

/// Trains the student against the two frozen teachers. Per batch, the
/// discriminators take one step on L_Ds + L_Dt with the student detached, then
/// the student takes one step on the weighted total with the discriminators
/// frozen. Teachers and SRE are never modified.
Stage2Result train_stage2(const FasModel& source, const FasModel& target, const Sre* sre, FasModel& student,
                          DiscriminatorPair& discs, const DatasetManifest& target_train, const LossWeights& w,
                          const Stage2Options& opt);

struct CrossDatasetOptions {
    TrainSchedule train;
    double disc_lr = 1e-4;
    double orig_weight = 1.0;  // lambda1
    double adv_weight = 0.1;   // weight of each teacher's generator loss
    bool allow_any_teacher_count = false;
};

/// Multi-teacher variant without SRE: one discriminator per teacher.
Stage2Result train_cross_dataset(const std::vector<const FasModel*>& teachers, FasModel& student,
                                 std::vector<MultiScaleDiscriminator*> discs, const DatasetManifest& mixed_train,
                                 const CrossDatasetOptions& opt);

/// Deployable model: student extractor + SCE, plus the SRE when present.
struct InferenceModel {
    FasModel model;
    std::optional<Sre> sre;

    nn::ParamSet params() const;
};

InferenceModel export_inference(const FasModel& student, const Sre* sre);
void save_inference(const std::filesystem::path& path, const InferenceModel& m);
InferenceModel load_inference(const std::filesystem::path& path);

struct Prediction {
    std::vector<double> scores;  // 1 - sigmoid(live logit)
    Tensor masks;                // N x 1 x H0 x W0; empty without SRE
};

Prediction predict(const InferenceModel& m, const Tensor& images);

}  // namespace fasw

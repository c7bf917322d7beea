#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fasw/data_synth.hpp"
#include "fasw/fas_core.hpp"
#include "fasw/sre.hpp"
#include "fasw/training.hpp"
#include "fasw/wrapper.hpp"

namespace fasw {

/// Everything that determines a run given its data. Serialised as flat
/// `key = value` text; every key has a default.
struct ExperimentConfig {
    std::string preset = "desk";
    std::uint64_t seed = 1;

    struct Data {
        int image_size = 64;
        int n_live = 300;
        int n_spoof = 300;
        int n_subjects = 20;
        double test_fraction = 0.3;
        std::vector<std::string> subsets{"A", "B", "C", "D", "E"};
        std::vector<std::string> source_types{"print", "replay", "full_mask", "obfuscation", "paper_glasses"};
        std::vector<std::string> holdout_types{"mannequin", "cosmetic", "funny_eyes"};
        /// Capture colour cast of the target subset B.
        std::array<double, 3> target_tint{0.06, 0.04, -0.04};
        double minority_share = 0.52;  // subset C
        int older_age_min = 50;        // subset D
        int older_age_max = 75;
        double older_blur = 0.8;
        double brightness_shift = 0.2;  // subset E
    } data;

    ModelConfig model;
    int sre_hidden = 8;
    DiscMode disc_mode = DiscMode::chained;
    int disc_hidden = 8;

    TrainSchedule pretrain;
    TrainSchedule stage1;
    int mask_epochs = 10;
    double threshold = 0.1;
    double mask_weight = 1.0;

    TrainSchedule stage2;
    double disc_lr = 3e-4;
    LossWeights lambdas;

    double lwf_temperature = 2.0;
    double lwf_distill_weight = 1.0;
    int head_epochs = 5;

    std::vector<double> fpr_targets{0.005, 0.01, 0.05};
    double operating_fpr = 0.005;

    void validate() const;
};

/// Named presets: "desk" (64x64 default), "quick" (32x32, used by the
/// acceptance suite), "full" (full-scale optimiser settings at 64x64).
ExperimentConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

std::map<std::string, std::string> to_key_values(const ExperimentConfig& cfg);
/// Starts from the preset named by `preset` (if given) and applies every other
/// key; an unknown key or malformed value is a config error.
ExperimentConfig from_key_values(const std::map<std::string, std::string>& kv);
/// Applies overrides on top of an existing config.
void apply_key_values(ExperimentConfig& cfg, const std::map<std::string, std::string>& kv);
ExperimentConfig load_config_file(const std::filesystem::path& path);
std::string config_text(const ExperimentConfig& cfg);

/// micro type -> SpoofType with its patch generator.
SpoofType spoof_type_for(const std::string& micro);

/// Subset specs A..E: A source spoof types; B held-out types under a capture
/// tint; C ethnicity shift; D older ages plus blur; E brightness shift.
std::map<std::string, SyntheticDomainSpec> synthetic_specs(const ExperimentConfig& cfg);

enum class Phase : std::uint64_t { data = 1, pretrain, sre_init, stage1, disc_init, stage2, baseline, protocol };
std::uint64_t phase_seed(const ExperimentConfig& cfg, Phase p);

/// Schedules with the phase seed filled in.
TrainSchedule pretrain_schedule(const ExperimentConfig& cfg);
Stage1Schedule stage1_schedule(const ExperimentConfig& cfg);
Stage2Options stage2_options(const ExperimentConfig& cfg);
TrainSchedule baseline_schedule(const ExperimentConfig& cfg);
ModelConfig model_config(const ExperimentConfig& cfg);

}  // namespace fasw

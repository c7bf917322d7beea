#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fasw/data_synth.hpp"
#include "fasw/nn.hpp"

namespace fasw {

struct TrainSchedule {
    int epochs = 10;
    double lr = 1e-3;
    double lr_decay = 1.0;  // multiplied into lr after every epoch
    int batch_size = 8;
    double live_fraction = 0.5;
    int batches_per_epoch = 0;  // 0: ceil(manifest size / batch_size)
    std::uint64_t seed = 1;
    /// Where a diagnostics checkpoint goes when a loss turns non-finite.
    std::optional<std::filesystem::path> diagnostics_dir;
};

void validate(const TrainSchedule& s);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    std::map<std::string, double> losses;  // per-epoch means
};
using LossHistory = std::vector<EpochRecord>;

/// Columns: epoch, lr, then one column per loss name (sorted).
void write_loss_csv(const std::filesystem::path& path, const LossHistory& history);
LossHistory read_loss_csv(const std::filesystem::path& path);

using BatchSampler = std::function<Batch(Rng&)>;

/// Class-balanced batches from one manifest.
BatchSampler manifest_sampler(const DatasetManifest& m, int batch_size, double live_fraction);
/// Batch split evenly across manifests (remainder to the first ones), each
/// part class-balanced. Empty manifests are skipped.
BatchSampler mixed_sampler(std::vector<const DatasetManifest*> parts, int batch_size, double live_fraction);

int batches_per_epoch(const TrainSchedule& s, std::size_t manifest_size);

/// Accumulates per-batch losses into epoch means.
class EpochMeter {
public:
    void add(const std::string& name, double value);
    EpochRecord finish(int epoch, double lr);

private:
    std::map<std::string, std::pair<double, int>> acc_;
};

/// Throws a numerical error naming `what` when `value` is not finite, after
/// writing the parameters to the diagnostics directory when one is set.
void guard_finite(double value, const std::string& what, const nn::ParamSet& state, const TrainSchedule& s);

}  // namespace fasw

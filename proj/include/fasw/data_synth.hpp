#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fasw/tensor.hpp"

namespace fasw {

enum class Label { live, spoof };
enum class SpoofMacro { none, print, replay, mask3d, makeup, partial };
enum class Split { train, test };

const char* to_string(Label l);
const char* to_string(SpoofMacro m);
const char* to_string(Split s);
Label parse_label(const std::string& s);
SpoofMacro parse_macro(const std::string& s);

struct ImageSample {
    std::string sample_id;
    Tensor image;  // 3 x H x W in [0,1]; empty until loaded
    Label label = Label::live;
    SpoofMacro spoof_macro = SpoofMacro::none;
    std::string spoof_micro;
    std::string ethnicity;
    int age = 0;
    std::optional<int> illum_cluster;
    std::optional<Tensor> gt_mask;  // 1 x H x W, binary
    std::string domain_id;

    // On-disk locations relative to the manifest directory; empty for in-memory samples.
    std::string path;
    std::string gt_mask_path;

    // Unperturbed face this sample was derived from (synthetic data only).
    std::optional<Tensor> base_live;

    std::string subject() const;
};

/// Subject id encoded as the sample_id prefix before the last '-'.
std::string subject_of(const std::string& sample_id);

struct DatasetManifest {
    std::vector<ImageSample> samples;
    Split split = Split::train;
    std::string subset_id;
    std::filesystem::path root;  // directory that relative paths resolve against

    std::size_t count(Label l) const;
};

/// Throws schema/data errors on any broken invariant (ids, labels, masks, ranges).
void validate_manifest(const DatasetManifest& m);
/// Throws protocol_violation when the two manifests share a subject.
void check_subject_disjoint(const DatasetManifest& a, const DatasetManifest& b);

struct SpoofType {
    SpoofMacro macro = SpoofMacro::print;
    std::string micro;
    std::string patch_generator_id;
};

struct SyntheticDomainSpec {
    int n_live = 0;
    int n_spoof = 0;
    std::vector<SpoofType> spoof_types;
    std::array<double, 3> tint{0.0, 0.0, 0.0};
    double blur_sigma = 0.0;
    double brightness = 0.0;
    int height = 64;
    int width = 64;
    std::uint64_t seed = 0;

    int n_subjects = 10;
    double test_fraction = 0.3;
    /// Ethnicity label -> sampling weight, drawn per subject.
    std::vector<std::pair<std::string, double>> ethnicity_mix{{"eth_a", 1.0}};
    int age_min = 18;
    int age_max = 40;
};

struct SubsetSplits {
    DatasetManifest train;
    DatasetManifest test;
};

using Benchmark = std::map<std::string, SubsetSplits>;

/// Known patch generators; spoof types name one of these.
const std::vector<std::string>& patch_generator_ids();
SpoofMacro default_macro_for(const std::string& micro);

/// Deterministic synthetic live/spoof benchmark. Subset "A" is required and
/// subset "B", when present, must not reuse any spoof_micro of "A".
Benchmark generate_synthetic_benchmark(const std::map<std::string, SyntheticDomainSpec>& specs);

/// Writes images, masks, base faces and train/test CSVs under `dir/<subset>/`.
void write_benchmark(const std::filesystem::path& dir, Benchmark& bench);

// Manifest CSV. Header:
// sample_id,path,label,spoof_macro,spoof_micro,ethnicity,age,illum_cluster,domain_id,gt_mask_path
extern const char* const kManifestHeader;
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Reads image (and mask) pixels for every sample whose pixels are not in memory.
void load_images(DatasetManifest& m);
/// Loads base faces written next to the synthetic images (base/<sample_id>.png).
void load_base_faces(DatasetManifest& m);

struct Batch {
    Tensor images;  // N x 3 x H x W
    Tensor masks;   // N x 1 x H x W ground truth (zeros when unknown)
    std::vector<Label> labels;
    std::vector<std::size_t> indices;  // rows in the source manifest
    std::vector<std::string> sample_ids;

    int size() const { return static_cast<int>(labels.size()); }
    Tensor live_targets() const;  // N x 1, 1 for live
};

using Rng = std::mt19937_64;

/// Balanced batch: exactly round(batch_size * live_fraction) live samples.
Batch sample_batch(const DatasetManifest& m, int batch_size, double live_fraction, Rng& rng);
/// Batch made of the given manifest rows, in order.
Batch make_batch(const DatasetManifest& m, const std::vector<std::size_t>& rows);

/// Row-wise concatenation; sample ids must stay unique.
DatasetManifest concat_manifests(const DatasetManifest& a, const DatasetManifest& b, std::string subset_id);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace fasw

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fasw/data_synth.hpp"

namespace fasw {

/// (mean luminance, luminance std, 8-bin luminance histogram as fractions).
/// Luminance = 0.299 R + 0.587 G + 0.114 B; bin = min(7, floor(8 * lum)).
std::vector<double> illumination_features(const ImageSample& sample);
inline constexpr int kIlluminationFeatureSize = 10;

struct KMeansResult {
    std::vector<std::vector<double>> centroids;
    std::vector<int> labels;
    double sse = 0.0;
};

/// Lloyd iterations from k-means++ seeds, best of `restarts`. When `warm` is
/// given, one extra start uses those centroids plus the point farthest from
/// them, so the result is never worse than the warm solution.
KMeansResult kmeans(const std::vector<std::vector<double>>& x, int k, int restarts, std::uint64_t seed,
                    const std::vector<std::vector<double>>* warm = nullptr);

/// Elbow of an SSE curve (index 0 is K = 1): argmax over K in [2, Kmax-1] of
/// S(K-1) - 2 S(K) + S(K+1). K = 1 when S(1) = 0; for Kmax = 2, K = 2 unless S(1) = 0.
int elbow_k(const std::vector<double>& sse);

struct IlluminationClustering {
    int k = 1;
    std::vector<std::vector<double>> centroids;
    std::vector<int> labels;
    std::vector<double> sse_curve;  // entry K-1 holds the SSE for K clusters
};

IlluminationClustering cluster_features(const std::vector<std::vector<double>>& features, int kmax,
                                        std::uint64_t seed, int restarts = 10);

/// Clusters illumination features of every sample and writes illum_cluster back.
IlluminationClustering assign_illumination_clusters(DatasetManifest& m, int kmax, std::uint64_t seed,
                                                    int restarts = 10);

/// Requested attribute marginal for one target subset.
struct AttributeTarget {
    std::string attribute;  // "ethnicity", "age_min" or "illum_cluster"
    std::string value;      // category, minimum age, or cluster id
    double fraction = 0.5;  // share of the subset's samples matching the value
    int size = 0;           // samples in the subset; 0 picks the largest feasible size
};

bool matches(const ImageSample& s, const AttributeTarget& t);

struct ProtocolConfig {
    std::vector<std::string> holdout_micro_types;
    std::map<std::string, AttributeTarget> targets;  // keyed by subset id, typically C, D, E
    double tolerance_pp = 2.0;
    double test_fraction = 0.3;
    std::uint64_t seed = 1;
};

struct ProtocolSpec {
    std::map<std::string, SubsetSplits> subsets;  // A, B and every configured target
    std::map<std::string, std::string> kinds;     // subset id -> role description
    std::map<std::string, double> achieved;       // target subset -> achieved marginal
};

/// Splits an annotated manifest into a source subset A, a spoof-type holdout
/// subset B, and attribute-shifted subsets. Every sample lands in exactly one
/// subset; train/test are subject-disjoint within each subset.
ProtocolSpec build_protocol_splits(const DatasetManifest& m, const ProtocolConfig& cfg);

/// Attribute marginals (fractions) of a manifest: ethnicity, age band,
/// illumination cluster, spoof_micro and label.
std::map<std::string, std::map<std::string, double>> attribute_marginals(const DatasetManifest& m);
std::string age_band(int age);

/// JSON text with per-subset, per-split counts and marginals.
std::string distribution_report_json(const ProtocolSpec& spec);

/// Writes <dir>/<subset>/{train,test}.csv, distribution_report.json and, when
/// a clustering is given, sse_curve.csv.
void write_protocol(const std::filesystem::path& dir, const ProtocolSpec& spec,
                    const IlluminationClustering* clustering = nullptr);

}  // namespace fasw

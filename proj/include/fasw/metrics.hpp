#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fasw/data_synth.hpp"

namespace fasw {

/// Scores are spoof scores: higher means more likely an attack.
struct ScoreSet {
    std::vector<double> scores;
    std::vector<Label> labels;
    std::vector<std::string> attack_types;  // optional, parallel to scores

    std::size_t count(Label l) const;
};

void validate(const ScoreSet& s);

struct ErrorRates {
    double apcer = 0.0;  // % of attacks with score < threshold
    double bpcer = 0.0;  // % of bona fide with score >= threshold
    double acer = 0.0;   // (apcer + bpcer) / 2
};

ErrorRates error_rates(const ScoreSet& s, double threshold);
ErrorRates error_rates_from(double apcer, double bpcer);

/// One-decimal rounding used when serialising percentages: half away from zero.
double round_report(double value, int decimals = 1);

struct RocPoint {
    double threshold;  // classify as spoof when score >= threshold
    double fpr;
    double tpr;
};

struct RocAnalysis {
    std::vector<RocPoint> points;  // from (0,0) to (1,1)
    double auc = 0.0;
    std::map<double, double> tpr_at_fpr;
    double eer = 0.0;            // fraction in [0,1]
    double eer_threshold = 0.0;  // achievable threshold closest to the EER point
    double hter = 0.0;           // % at eer_threshold
};

RocAnalysis roc_analysis(const ScoreSet& s, const std::vector<double>& fpr_targets);

/// Lowest threshold whose false-positive rate (live flagged as spoof) stays <= fpr.
double threshold_at_fpr(const ScoreSet& s, double fpr);

struct MetricsReport {
    double threshold = 0.0;
    ErrorRates rates;
    double auc = 0.0;
    std::map<double, double> tpr_at_fpr;
    double eer = 0.0;
    double hter = 0.0;
    std::map<std::string, double> apcer_per_attack;
    std::size_t n_live = 0, n_spoof = 0;
};

/// Full metric suite; the operating threshold defaults to the one reaching
/// FPR = `operating_fpr` on this score set.
MetricsReport compute_metrics(const ScoreSet& s, const std::vector<double>& fpr_targets, double operating_fpr = 0.005,
                              std::optional<double> threshold = std::nullopt);

}  // namespace fasw

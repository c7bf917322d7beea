#include "fasw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fasw/error.hpp"

namespace fasw {

std::size_t ScoreSet::count(Label l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
}

void validate(const ScoreSet& s) {
    require(s.scores.size() == s.labels.size(), ErrorKind::metric, "scores and labels differ in length");
    require(s.attack_types.empty() || s.attack_types.size() == s.scores.size(), ErrorKind::metric,
            "attack types and scores differ in length");
    require(s.count(Label::live) > 0 && s.count(Label::spoof) > 0, ErrorKind::metric,
            "metrics need at least one live and one spoof sample");
    for (double v : s.scores) require(std::isfinite(v), ErrorKind::metric, "non-finite score");
}

ErrorRates error_rates(const ScoreSet& s, double threshold) {
    validate(s);
    long long n_live = 0, n_spoof = 0, live_err = 0, spoof_err = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        if (s.labels[i] == Label::spoof) {
            ++n_spoof;
            if (s.scores[i] < threshold) ++spoof_err;
        } else {
            ++n_live;
            if (s.scores[i] >= threshold) ++live_err;
        }
    }
    ErrorRates r;
    r.apcer = 100.0 * static_cast<double>(spoof_err) / static_cast<double>(n_spoof);
    r.bpcer = 100.0 * static_cast<double>(live_err) / static_cast<double>(n_live);
    // One rounding from integer counts keeps acer the correctly rounded mean.
    r.acer = 100.0 * static_cast<double>(spoof_err * n_live + live_err * n_spoof) /
             static_cast<double>(2 * n_spoof * n_live);
    return r;
}

ErrorRates error_rates_from(double apcer, double bpcer) {
    require(apcer >= 0.0 && apcer <= 100.0 && bpcer >= 0.0 && bpcer <= 100.0, ErrorKind::metric,
            "rates must lie in [0,100]");
    return {apcer, bpcer, (apcer + bpcer) / 2.0};
}

double round_report(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(value * scale) / scale;
}

namespace {

struct Counts {
    std::vector<double> thresholds;  // distinct scores, descending
    std::vector<double> fpr, tpr;    // at each threshold (score >= t flagged)
};

Counts sweep(const ScoreSet& s) {
    std::vector<std::size_t> order(s.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
    const double n_live = static_cast<double>(s.count(Label::live));
    const double n_spoof = static_cast<double>(s.count(Label::spoof));
    Counts c;
    long long tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = s.scores[order[i]];
        while (i < order.size() && s.scores[order[i]] == t) {
            (s.labels[order[i]] == Label::spoof ? tp : fp) += 1;
            ++i;
        }
        c.thresholds.push_back(t);
        c.fpr.push_back(static_cast<double>(fp) / n_live);
        c.tpr.push_back(static_cast<double>(tp) / n_spoof);
    }
    return c;
}

double above_all(const ScoreSet& s) {
    const double mx = *std::max_element(s.scores.begin(), s.scores.end());
    return std::nextafter(mx, std::numeric_limits<double>::infinity());
}

}  // namespace

RocAnalysis roc_analysis(const ScoreSet& s, const std::vector<double>& fpr_targets) {
    validate(s);
    const Counts c = sweep(s);
    RocAnalysis r;
    r.points.push_back({above_all(s), 0.0, 0.0});
    for (std::size_t i = 0; i < c.thresholds.size(); ++i) r.points.push_back({c.thresholds[i], c.fpr[i], c.tpr[i]});

    for (std::size_t i = 1; i < r.points.size(); ++i) {
        const auto& a = r.points[i - 1];
        const auto& b = r.points[i];
        r.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }

    for (double f : fpr_targets) {
        require(f >= 0.0 && f <= 1.0, ErrorKind::metric, "FPR target outside [0,1]");
        double best = -1.0;
        for (const auto& p : r.points) {
            if (p.fpr == f) best = std::max(best, p.tpr);
        }
        if (best < 0.0) {
            for (std::size_t i = 1; i < r.points.size(); ++i) {
                const auto& a = r.points[i - 1];
                const auto& b = r.points[i];
                if (a.fpr < f && f < b.fpr) {
                    best = a.tpr + (b.tpr - a.tpr) * (f - a.fpr) / (b.fpr - a.fpr);
                    break;
                }
            }
        }
        r.tpr_at_fpr[f] = best;
    }

    // g = FPR - FNR grows monotonically along the curve from -1 to +1.
    for (std::size_t i = 1; i < r.points.size(); ++i) {
        const auto& a = r.points[i - 1];
        const auto& b = r.points[i];
        const double ga = a.fpr + a.tpr - 1.0, gb = b.fpr + b.tpr - 1.0;
        if (ga <= 0.0 && gb >= 0.0) {
            const double alpha = gb == ga ? 0.0 : -ga / (gb - ga);
            r.eer = a.fpr + alpha * (b.fpr - a.fpr);
            r.eer_threshold = std::fabs(ga) <= std::fabs(gb) ? a.threshold : b.threshold;
            break;
        }
    }
    const ErrorRates at_eer = error_rates(s, r.eer_threshold);
    r.hter = (at_eer.apcer + at_eer.bpcer) / 2.0;
    return r;
}

double threshold_at_fpr(const ScoreSet& s, double fpr) {
    validate(s);
    require(fpr >= 0.0 && fpr <= 1.0, ErrorKind::metric, "FPR target outside [0,1]");
    const Counts c = sweep(s);
    double t = above_all(s);
    for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
        if (c.fpr[i] <= fpr) t = c.thresholds[i];
        else break;
    }
    return t;
}

MetricsReport compute_metrics(const ScoreSet& s, const std::vector<double>& fpr_targets, double operating_fpr,
                              std::optional<double> threshold) {
    validate(s);
    MetricsReport m;
    m.threshold = threshold ? *threshold : threshold_at_fpr(s, operating_fpr);
    m.rates = error_rates(s, m.threshold);
    const RocAnalysis roc = roc_analysis(s, fpr_targets);
    m.auc = roc.auc;
    m.tpr_at_fpr = roc.tpr_at_fpr;
    m.eer = roc.eer;
    m.hter = roc.hter;
    m.n_live = s.count(Label::live);
    m.n_spoof = s.count(Label::spoof);
    if (!s.attack_types.empty()) {
        std::map<std::string, std::pair<long long, long long>> per;  // errors, total
        for (std::size_t i = 0; i < s.scores.size(); ++i) {
            if (s.labels[i] != Label::spoof) continue;
            auto& [err, total] = per[s.attack_types[i]];
            ++total;
            if (s.scores[i] < m.threshold) ++err;
        }
        for (const auto& [type, et] : per) {
            m.apcer_per_attack[type] = 100.0 * static_cast<double>(et.first) / static_cast<double>(et.second);
        }
    }
    return m;
}

}  // namespace fasw

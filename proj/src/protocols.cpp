#include "fasw/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "fasw/error.hpp"
#include "fasw/io.hpp"
#include "json.hpp"

namespace fasw {

std::vector<double> illumination_features(const ImageSample& sample) {
    const Tensor& img = sample.image;
    require(img.rank() == 3 && img.dim(0) == 3, ErrorKind::input, sample.sample_id + ": expected a loaded RGB image");
    const std::size_t plane = static_cast<std::size_t>(img.dim(1)) * img.dim(2);
    std::vector<double> lum(plane);
    for (std::size_t i = 0; i < plane; ++i) {
        lum[i] = 0.299 * img[i] + 0.587 * img[plane + i] + 0.114 * img[2 * plane + i];
    }
    double mean = 0.0;
    for (double v : lum) mean += v;
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (double v : lum) var += (v - mean) * (v - mean);
    var /= static_cast<double>(plane);
    std::vector<double> f{mean, std::sqrt(var), 0, 0, 0, 0, 0, 0, 0, 0};
    for (double v : lum) {
        const int bin = std::clamp(static_cast<int>(std::floor(v * 8.0)), 0, 7);
        f[static_cast<std::size_t>(2 + bin)] += 1.0;
    }
    for (int b = 0; b < 8; ++b) f[static_cast<std::size_t>(2 + b)] /= static_cast<double>(plane);
    return f;
}

namespace {

using Points = std::vector<std::vector<double>>;

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
}

/// Index of the point farthest from its nearest centroid (lowest index on ties).
std::size_t farthest_point(const Points& x, const Points& c) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = std::numeric_limits<double>::infinity();
        for (const auto& cc : c) d = std::min(d, sq_dist(x[i], cc));
        if (d > best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

KMeansResult lloyd(const Points& x, Points centroids) {
    const std::size_t k = centroids.size(), dim = x.front().size();
    std::vector<int> labels(x.size(), -1);
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            int best = 0;
            double best_d = sq_dist(x[i], centroids[0]);
            for (std::size_t j = 1; j < k; ++j) {
                const double d = sq_dist(x[i], centroids[j]);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(j);
                }
            }
            if (labels[i] != best) {
                labels[i] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
        Points sums(k, std::vector<double>(dim, 0.0));
        std::vector<int> counts(k, 0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto l = static_cast<std::size_t>(labels[i]);
            ++counts[l];
            for (std::size_t d = 0; d < dim; ++d) sums[l][d] += x[i][d];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) continue;  // an empty cluster keeps its centroid
            for (std::size_t d = 0; d < dim; ++d) centroids[j][d] = sums[j][d] / counts[j];
        }
    }
    KMeansResult r{std::move(centroids), std::move(labels), 0.0};
    for (std::size_t i = 0; i < x.size(); ++i) r.sse += sq_dist(x[i], r.centroids[static_cast<std::size_t>(r.labels[i])]);
    return r;
}

Points plus_plus_seeds(const Points& x, int k, std::mt19937_64& rng) {
    Points c;
    c.push_back(x[std::uniform_int_distribution<std::size_t>(0, x.size() - 1)(rng)]);
    std::vector<double> d(x.size());
    while (static_cast<int>(c.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double m = std::numeric_limits<double>::infinity();
            for (const auto& cc : c) m = std::min(m, sq_dist(x[i], cc));
            d[i] = m;
            total += m;
        }
        std::size_t pick = 0;
        if (total <= 0.0) {
            pick = std::uniform_int_distribution<std::size_t>(0, x.size() - 1)(rng);
        } else {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (pick = 0; pick + 1 < x.size(); ++pick) {
                if (u < d[pick]) break;
                u -= d[pick];
            }
        }
        c.push_back(x[pick]);
    }
    return c;
}

}  // namespace

KMeansResult kmeans(const Points& x, int k, int restarts, std::uint64_t seed, const Points* warm) {
    require(!x.empty(), ErrorKind::data, "k-means needs at least one point");
    require(k >= 1 && k <= static_cast<int>(x.size()), ErrorKind::data,
            "k-means with k=" + std::to_string(k) + " needs at least k points");
    require(restarts >= 1, ErrorKind::config, "k-means restarts must be >= 1");
    std::mt19937_64 rng(derive_seed(seed, 0xC1, static_cast<std::uint64_t>(k)));
    KMeansResult best;
    best.sse = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        KMeansResult cand = lloyd(x, plus_plus_seeds(x, k, rng));
        if (cand.sse < best.sse) best = std::move(cand);
    }
    if (warm != nullptr && static_cast<int>(warm->size()) < k) {
        Points start = *warm;
        while (static_cast<int>(start.size()) < k) start.push_back(x[farthest_point(x, start)]);
        KMeansResult cand = lloyd(x, std::move(start));
        if (cand.sse < best.sse) best = std::move(cand);
    }
    return best;
}

int elbow_k(const std::vector<double>& sse) {
    require(!sse.empty(), ErrorKind::data, "empty SSE curve");
    const int kmax = static_cast<int>(sse.size());
    if (sse[0] == 0.0 || kmax == 1) return 1;
    if (kmax == 2) return 2;
    int best = 2;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int k = 2; k <= kmax - 1; ++k) {
        const double v = sse[static_cast<std::size_t>(k - 2)] - 2.0 * sse[static_cast<std::size_t>(k - 1)] +
                         sse[static_cast<std::size_t>(k)];
        if (v > best_v) {
            best_v = v;
            best = k;
        }
    }
    return best;
}

IlluminationClustering cluster_features(const Points& features, int kmax, std::uint64_t seed, int restarts) {
    require(kmax >= 1, ErrorKind::config, "Kmax must be >= 1");
    require(static_cast<int>(features.size()) >= kmax, ErrorKind::data,
            "need at least Kmax=" + std::to_string(kmax) + " samples, got " + std::to_string(features.size()));
    IlluminationClustering out;
    std::vector<KMeansResult> runs;
    for (int k = 1; k <= kmax; ++k) {
        const Points* warm = runs.empty() ? nullptr : &runs.back().centroids;
        runs.push_back(kmeans(features, k, restarts, seed, warm));
        double s = runs.back().sse;
        // Guard the curve against floating noise from a different summation order.
        if (k > 1) s = std::min(s, out.sse_curve.back());
        out.sse_curve.push_back(s);
    }
    out.k = elbow_k(out.sse_curve);
    out.centroids = runs[static_cast<std::size_t>(out.k - 1)].centroids;
    out.labels = runs[static_cast<std::size_t>(out.k - 1)].labels;
    return out;
}

IlluminationClustering assign_illumination_clusters(DatasetManifest& m, int kmax, std::uint64_t seed, int restarts) {
    require(static_cast<int>(m.samples.size()) >= kmax, ErrorKind::data,
            "manifest has " + std::to_string(m.samples.size()) + " samples, fewer than Kmax=" + std::to_string(kmax));
    Points feats;
    for (const auto& s : m.samples) feats.push_back(illumination_features(s));
    IlluminationClustering c = cluster_features(feats, kmax, seed, restarts);
    for (std::size_t i = 0; i < m.samples.size(); ++i) m.samples[i].illum_cluster = c.labels[i];
    return c;
}

bool matches(const ImageSample& s, const AttributeTarget& t) {
    if (t.attribute == "ethnicity") return s.ethnicity == t.value;
    if (t.attribute == "age_min") return s.age >= std::stoi(t.value);
    if (t.attribute == "illum_cluster") {
        require(s.illum_cluster.has_value(), ErrorKind::data, s.sample_id + " has no illum_cluster annotation");
        return *s.illum_cluster == std::stoi(t.value);
    }
    fail(ErrorKind::config, "unknown target attribute '" + t.attribute + "'");
}

namespace {

/// Subject-level train/test split of a sample list.
SubsetSplits split_by_subject(const std::string& id, const std::vector<ImageSample>& samples, double test_fraction,
                              std::uint64_t seed, const std::filesystem::path& root) {
    std::vector<std::string> subjects;
    for (const auto& s : samples) subjects.push_back(s.subject());
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    std::mt19937_64 rng(seed);
    std::shuffle(subjects.begin(), subjects.end(), rng);
    const int n = static_cast<int>(subjects.size());
    int n_test = static_cast<int>(std::lround(test_fraction * n));
    if (test_fraction > 0.0 && n >= 2) n_test = std::clamp(n_test, 1, n - 1);
    const std::set<std::string> test(subjects.begin(), subjects.begin() + std::min(n_test, n));
    SubsetSplits out;
    out.train.split = Split::train;
    out.test.split = Split::test;
    out.train.subset_id = out.test.subset_id = id;
    out.train.root = out.test.root = root;
    for (const auto& s : samples) (test.count(s.subject()) ? out.test : out.train).samples.push_back(s);
    return out;
}

/// Draws `k` indices from `pool` keeping the live/spoof proportion of the pool.
std::vector<std::size_t> stratified_pick(const std::vector<ImageSample>& all, std::vector<std::size_t> pool, int k,
                                         std::mt19937_64& rng) {
    std::vector<std::size_t> live, spoof;
    for (std::size_t i : pool) (all[i].label == Label::live ? live : spoof).push_back(i);
    std::shuffle(live.begin(), live.end(), rng);
    std::shuffle(spoof.begin(), spoof.end(), rng);
    int n_live = pool.empty() ? 0 : static_cast<int>(std::lround(static_cast<double>(k) * live.size() / pool.size()));
    n_live = std::clamp(n_live, std::max(0, k - static_cast<int>(spoof.size())), std::min(k, static_cast<int>(live.size())));
    std::vector<std::size_t> out(live.begin(), live.begin() + n_live);
    out.insert(out.end(), spoof.begin(), spoof.begin() + (k - n_live));
    return out;
}

}  // namespace

ProtocolSpec build_protocol_splits(const DatasetManifest& m, const ProtocolConfig& cfg) {
    validate_manifest(m);
    require(cfg.tolerance_pp >= 0.0, ErrorKind::config, "tolerance must be >= 0");
    require(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0, ErrorKind::config, "test_fraction must be in [0,1)");
    for (const auto& [id, t] : cfg.targets) {
        require(id != "A" && id != "B", ErrorKind::config, "subsets A and B are reserved");
        require(t.fraction > 0.0 && t.fraction < 1.0, ErrorKind::config,
                "target fraction for subset " + id + " must be in (0,1)");
        require(t.size >= 0, ErrorKind::config, "target size must be >= 0");
    }
    const std::vector<ImageSample>& all = m.samples;
    const std::set<std::string> holdout(cfg.holdout_micro_types.begin(), cfg.holdout_micro_types.end());
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xB0));

    std::vector<int> owner(all.size(), -1);  // index into subset ids
    std::vector<std::string> ids{"A", "B"};
    for (const auto& [id, _] : cfg.targets) ids.push_back(id);

    // B: every holdout spoof sample, plus a proportional share of live samples.
    std::size_t n_spoof = 0, n_hold = 0;
    std::vector<std::size_t> live_pool;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i].label == Label::spoof) {
            ++n_spoof;
            if (holdout.count(all[i].spoof_micro)) {
                owner[i] = 1;
                ++n_hold;
            }
        } else {
            live_pool.push_back(i);
        }
    }
    if (n_hold > 0) {
        std::shuffle(live_pool.begin(), live_pool.end(), rng);
        const auto n_live_b = static_cast<std::size_t>(
            std::lround(static_cast<double>(live_pool.size()) * static_cast<double>(n_hold) / static_cast<double>(n_spoof)));
        for (std::size_t j = 0; j < std::min(n_live_b, live_pool.size()); ++j) owner[live_pool[j]] = 1;
    }

    ProtocolSpec spec;
    for (std::size_t t = 2; t < ids.size(); ++t) {
        const std::string& id = ids[t];
        const AttributeTarget& target = cfg.targets.at(id);
        std::vector<std::size_t> pos, neg;
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (owner[i] != -1) continue;
            (matches(all[i], target) ? pos : neg).push_back(i);
        }
        const std::string what = target.attribute + "=" + target.value;
        int size = target.size;
        if (size == 0) {
            size = static_cast<int>(std::min(std::floor(static_cast<double>(pos.size()) / target.fraction),
                                             std::floor(static_cast<double>(neg.size()) / (1.0 - target.fraction))));
        }
        const int n_pos = static_cast<int>(std::lround(target.fraction * size));
        const int n_neg = size - n_pos;
        require(size > 0 && n_pos <= static_cast<int>(pos.size()) && n_neg <= static_cast<int>(neg.size()),
                ErrorKind::infeasible,
                "subset " + id + ": cannot reach " + what + " at " + std::to_string(target.fraction) + " with " +
                    std::to_string(size) + " samples (binding attribute " + target.attribute + ": " +
                    std::to_string(pos.size()) + " matching, " + std::to_string(neg.size()) + " other samples left)");
        const double achieved = static_cast<double>(n_pos) / size;
        require(std::fabs(achieved - target.fraction) * 100.0 <= cfg.tolerance_pp + 1e-9, ErrorKind::infeasible,
                "subset " + id + ": marginal of " + target.attribute + " off by more than the tolerance");
        std::mt19937_64 pick_rng(derive_seed(cfg.seed, 0xC0 + t));
        for (std::size_t i : stratified_pick(all, pos, n_pos, pick_rng)) owner[i] = static_cast<int>(t);
        for (std::size_t i : stratified_pick(all, neg, n_neg, pick_rng)) owner[i] = static_cast<int>(t);
        spec.achieved[id] = achieved;
        spec.kinds[id] = "attribute shift: " + what;
    }
    for (int& o : owner)
        if (o == -1) o = 0;

    spec.kinds["A"] = "source";
    spec.kinds["B"] = "new spoof types";
    for (std::size_t t = 0; t < ids.size(); ++t) {
        std::vector<ImageSample> members;
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (owner[i] != static_cast<int>(t)) continue;
            ImageSample s = all[i];
            if (!s.path.empty() && std::filesystem::path(s.path).is_relative() && !m.root.empty()) {
                s.path = (m.root / s.path).string();
            }
            if (!s.gt_mask_path.empty() && std::filesystem::path(s.gt_mask_path).is_relative() && !m.root.empty()) {
                s.gt_mask_path = (m.root / s.gt_mask_path).string();
            }
            members.push_back(std::move(s));
        }
        SubsetSplits splits = split_by_subject(ids[t], members, cfg.test_fraction, derive_seed(cfg.seed, 0x5E, t), m.root);
        check_subject_disjoint(splits.train, splits.test);
        spec.subsets.emplace(ids[t], std::move(splits));
    }

    std::set<std::string> micro_a, micro_b;
    for (const auto* part : {&spec.subsets["A"].train, &spec.subsets["A"].test})
        for (const auto& s : part->samples)
            if (s.label == Label::spoof) micro_a.insert(s.spoof_micro);
    for (const auto* part : {&spec.subsets["B"].train, &spec.subsets["B"].test})
        for (const auto& s : part->samples)
            if (s.label == Label::spoof) micro_b.insert(s.spoof_micro);
    for (const auto& t : micro_b) {
        require(!micro_a.count(t), ErrorKind::protocol_violation, "spoof type '" + t + "' in both A and B");
    }
    return spec;
}

std::string age_band(int age) {
    if (age < 30) return "<30";
    if (age < 50) return "30-49";
    return "50+";
}

std::map<std::string, std::map<std::string, double>> attribute_marginals(const DatasetManifest& m) {
    std::map<std::string, std::map<std::string, double>> out;
    if (m.samples.empty()) return out;
    for (const auto& s : m.samples) {
        out["ethnicity"][s.ethnicity] += 1.0;
        out["age_band"][age_band(s.age)] += 1.0;
        out["illum_cluster"][s.illum_cluster ? std::to_string(*s.illum_cluster) : "unset"] += 1.0;
        out["label"][to_string(s.label)] += 1.0;
        if (s.label == Label::spoof) out["spoof_micro"][s.spoof_micro] += 1.0;
    }
    const double n = static_cast<double>(m.samples.size());
    for (auto& [attr, counts] : out) {
        for (auto& [_, v] : counts) v /= n;
    }
    return out;
}

std::string distribution_report_json(const ProtocolSpec& spec) {
    nlohmann::json j;
    j["schema_version"] = 1;
    for (const auto& [id, splits] : spec.subsets) {
        nlohmann::json sj;
        sj["kind"] = spec.kinds.count(id) ? spec.kinds.at(id) : "";
        if (auto it = spec.achieved.find(id); it != spec.achieved.end()) sj["achieved_target_fraction"] = it->second;
        const DatasetManifest combined = [&] {
            DatasetManifest c;
            c.samples = splits.train.samples;
            c.samples.insert(c.samples.end(), splits.test.samples.begin(), splits.test.samples.end());
            return c;
        }();
        for (const auto& [name, man] :
             std::vector<std::pair<std::string, const DatasetManifest*>>{{"all", &combined}, {"train", &splits.train}, {"test", &splits.test}}) {
            nlohmann::json part;
            part["n_samples"] = man->samples.size();
            part["n_live"] = man->count(Label::live);
            part["n_spoof"] = man->count(Label::spoof);
            part["marginals"] = attribute_marginals(*man);
            sj[name] = part;
        }
        j["subsets"][id] = sj;
    }
    return j.dump(2);
}

void write_protocol(const std::filesystem::path& dir, const ProtocolSpec& spec, const IlluminationClustering* clustering) {
    for (const auto& [id, splits] : spec.subsets) {
        write_manifest(dir / id / "train.csv", splits.train);
        write_manifest(dir / id / "test.csv", splits.test);
    }
    io::write_text(dir / "distribution_report.json", distribution_report_json(spec));
    if (clustering != nullptr) {
        std::ostringstream csv;
        csv.precision(17);
        csv << "k,sse,selected\n";
        for (std::size_t i = 0; i < clustering->sse_curve.size(); ++i) {
            csv << i + 1 << ',' << clustering->sse_curve[i] << ',' << (static_cast<int>(i) + 1 == clustering->k ? 1 : 0)
                << '\n';
        }
        io::write_text(dir / "sse_curve.csv", csv.str());
    }
}

}  // namespace fasw

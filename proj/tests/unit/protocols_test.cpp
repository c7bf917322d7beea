#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "fasw/error.hpp"
#include "fasw/protocols.hpp"

namespace fasw {
namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no fasw::Error thrown";
    return ErrorKind::io;
}

// Points scattered tightly around the corners of an equilateral triangle, so
// no pair of clusters is closer than the others.
std::vector<std::vector<double>> three_blobs(std::uint64_t seed, int per_blob) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    const std::vector<std::vector<double>> centres{{0, 0, 0}, {4, 0, 0}, {2, 2 * std::sqrt(3.0), 0}};
    std::vector<std::vector<double>> x;
    for (const auto& c : centres)
        for (int i = 0; i < per_blob; ++i) {
            std::vector<double> p = c;
            for (double& v : p) v += noise(rng);
            x.push_back(p);
        }
    return x;
}

TEST(KMeans, ElbowRecoversThreeClusters) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto x = three_blobs(seed, 40);
        const IlluminationClustering c = cluster_features(x, 8, seed);
        EXPECT_EQ(c.k, 3) << "seed " << seed;
        ASSERT_EQ(c.sse_curve.size(), 8u);
        for (std::size_t k = 1; k < c.sse_curve.size(); ++k) EXPECT_LE(c.sse_curve[k], c.sse_curve[k - 1] + 1e-12);
        // the three blobs are exactly the clusters
        for (int b = 0; b < 3; ++b)
            for (int i = 1; i < 40; ++i) EXPECT_EQ(c.labels[b * 40 + i], c.labels[b * 40]);
        EXPECT_NE(c.labels[0], c.labels[40]);
        EXPECT_NE(c.labels[40], c.labels[80]);
    }
}

TEST(KMeans, SseMatchesLabelsAndCentroids) {
    const auto x = three_blobs(4, 20);
    const KMeansResult r = kmeans(x, 3, 5, 9);
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto& c = r.centroids[static_cast<std::size_t>(r.labels[i])];
        for (std::size_t d = 0; d < c.size(); ++d) sse += (x[i][d] - c[d]) * (x[i][d] - c[d]);
    }
    EXPECT_NEAR(r.sse, sse, 1e-9);
}

TEST(KMeans, ElbowEdgeCases) {
    EXPECT_EQ(elbow_k({0.0, 0.0, 0.0}), 1);
    EXPECT_EQ(elbow_k({10.0, 1.0}), 2);
    EXPECT_EQ(elbow_k({100.0, 50.0, 5.0, 4.0, 3.5}), 3);
}

TEST(Illumination, FeaturesOfAUniformImage) {
    ImageSample s;
    s.image = Tensor({3, 4, 4}, 0.3);
    const auto f = illumination_features(s);
    ASSERT_EQ(f.size(), static_cast<std::size_t>(kIlluminationFeatureSize));
    EXPECT_NEAR(f[0], 0.3, 1e-12);
    EXPECT_NEAR(f[1], 0.0, 1e-12);
    EXPECT_EQ(f[2 + 2], 1.0);  // floor(8 * 0.3) = 2
}

// Pool with 40 subjects: ethnicity and age vary by subject, illumination
// cluster by sample; spoofs cycle through five micro types.
DatasetManifest make_pool() {
    const std::vector<std::string> micros{"print", "replay", "full_mask", "mannequin", "funny_eyes"};
    DatasetManifest m;
    m.subset_id = "pool";
    for (int subj = 0; subj < 40; ++subj) {
        for (int i = 0; i < 10; ++i) {
            ImageSample s;
            s.sample_id = "s" + std::to_string(subj) + "-" + std::to_string(i);
            s.ethnicity = subj % 3 == 0 ? "eth_b" : "eth_a";
            s.age = 20 + (subj * 7) % 60;
            s.illum_cluster = i % 3;
            if (i % 2 == 1) {
                s.label = Label::spoof;
                s.spoof_micro = micros[static_cast<std::size_t>((subj + i) % 5)];
                s.spoof_macro = default_macro_for(s.spoof_micro);
            }
            m.samples.push_back(s);
        }
    }
    return m;
}

ProtocolConfig make_protocol_config() {
    ProtocolConfig cfg;
    cfg.holdout_micro_types = {"mannequin", "funny_eyes"};
    cfg.targets["C"] = {"ethnicity", "eth_b", 0.52, 60};
    cfg.targets["D"] = {"age_min", "50", 0.5, 40};
    cfg.targets["E"] = {"illum_cluster", "0", 0.5, 40};
    cfg.seed = 5;
    return cfg;
}

TEST(Protocols, SubsetsPartitionThePoolAndHitTargets) {
    const DatasetManifest pool = make_pool();
    const ProtocolConfig cfg = make_protocol_config();
    const ProtocolSpec spec = build_protocol_splits(pool, cfg);

    std::set<std::string> seen;
    std::set<std::string> micro_a, micro_b;
    for (const auto& [id, splits] : spec.subsets) {
        check_subject_disjoint(splits.train, splits.test);
        for (const auto* part : {&splits.train, &splits.test}) {
            for (const auto& s : part->samples) {
                EXPECT_TRUE(seen.insert(s.sample_id).second) << s.sample_id << " in two subsets";
                if (s.label != Label::spoof) continue;
                if (id == "A") micro_a.insert(s.spoof_micro);
                if (id == "B") micro_b.insert(s.spoof_micro);
            }
        }
    }
    EXPECT_EQ(seen.size(), pool.samples.size());
    EXPECT_EQ(micro_b, (std::set<std::string>{"mannequin", "funny_eyes"}));
    for (const auto& t : micro_b) EXPECT_FALSE(micro_a.count(t));

    for (const auto& [id, target] : cfg.targets) {
        const auto& splits = spec.subsets.at(id);
        double hit = 0.0, total = 0.0;
        for (const auto* part : {&splits.train, &splits.test})
            for (const auto& s : part->samples) {
                hit += matches(s, target);
                total += 1.0;
            }
        EXPECT_EQ(total, target.size);
        EXPECT_LE(std::abs(hit / total - target.fraction) * 100.0, cfg.tolerance_pp) << id;
        EXPECT_DOUBLE_EQ(spec.achieved.at(id), hit / total);
    }
}

TEST(Protocols, DeterministicForAFixedSeed) {
    const DatasetManifest pool = make_pool();
    const ProtocolSpec a = build_protocol_splits(pool, make_protocol_config());
    const ProtocolSpec b = build_protocol_splits(pool, make_protocol_config());
    EXPECT_EQ(distribution_report_json(a), distribution_report_json(b));
    for (const auto& [id, splits] : a.subsets) {
        const auto& other = b.subsets.at(id);
        ASSERT_EQ(splits.train.samples.size(), other.train.samples.size());
        for (std::size_t i = 0; i < splits.train.samples.size(); ++i)
            EXPECT_EQ(splits.train.samples[i].sample_id, other.train.samples[i].sample_id);
    }
}

TEST(Protocols, UnreachableMarginalIsInfeasible) {
    ProtocolConfig cfg = make_protocol_config();
    cfg.targets["C"] = {"ethnicity", "eth_b", 0.9, 300};
    EXPECT_EQ(kind_of([&] { build_protocol_splits(make_pool(), cfg); }), ErrorKind::infeasible);
}

TEST(Protocols, ReservedSubsetIdsAreRejected) {
    ProtocolConfig cfg = make_protocol_config();
    cfg.targets["A"] = {"ethnicity", "eth_b", 0.5, 10};
    EXPECT_EQ(kind_of([&] { build_protocol_splits(make_pool(), cfg); }), ErrorKind::config);
}

TEST(Protocols, SharedSubjectIsAViolation) {
    DatasetManifest a, b;
    ImageSample s;
    s.sample_id = "s7-0";
    a.samples.push_back(s);
    s.sample_id = "s7-1";
    b.samples.push_back(s);
    EXPECT_EQ(kind_of([&] { check_subject_disjoint(a, b); }), ErrorKind::protocol_violation);
}

}  // namespace
}  // namespace fasw

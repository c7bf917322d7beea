#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "fasw/data_synth.hpp"
#include "fasw/error.hpp"
#include "fasw/experiment.hpp"
#include "fasw/io.hpp"

namespace fs = std::filesystem;

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

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("fasw_data_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::map<std::string, SyntheticDomainSpec> small_specs(std::uint64_t seed) {
    ExperimentConfig cfg = preset_config("quick");
    cfg.seed = seed;
    cfg.data.image_size = 16;
    cfg.data.n_live = 24;
    cfg.data.n_spoof = 24;
    cfg.data.n_subjects = 6;
    cfg.data.subsets = {"A", "B"};
    return synthetic_specs(cfg);
}

TEST(Synthetic, SpoofDiffersFromBaseExactlyOnMask) {
    const Benchmark bench = generate_synthetic_benchmark(small_specs(3));
    int spoofs = 0;
    for (const auto& [id, splits] : bench) {
        for (const auto* part : {&splits.train, &splits.test}) {
            validate_manifest(*part);
            for (const auto& s : part->samples) {
                if (s.label != Label::spoof) {
                    if (s.base_live) EXPECT_EQ(s.image, *s.base_live);
                    continue;
                }
                ++spoofs;
                ASSERT_TRUE(s.gt_mask && s.base_live) << s.sample_id;
                const int hw = s.image.dim(1) * s.image.dim(2);
                for (int p = 0; p < hw; ++p) {
                    bool differs = false;
                    for (int c = 0; c < 3; ++c) differs |= s.image[c * hw + p] != (*s.base_live)[c * hw + p];
                    EXPECT_EQ(differs, (*s.gt_mask)[p] == 1.0) << s.sample_id << " pixel " << p;
                }
            }
        }
    }
    EXPECT_EQ(spoofs, 48);
}

TEST(Synthetic, GenerationIsAPureFunctionOfSpecAndSeed) {
    const Benchmark a = generate_synthetic_benchmark(small_specs(8));
    const Benchmark b = generate_synthetic_benchmark(small_specs(8));
    const Benchmark c = generate_synthetic_benchmark(small_specs(9));
    const auto& sa = a.at("A").train.samples;
    const auto& sb = b.at("A").train.samples;
    ASSERT_EQ(sa.size(), sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        EXPECT_EQ(sa[i].sample_id, sb[i].sample_id);
        EXPECT_EQ(sa[i].image, sb[i].image);
    }
    EXPECT_NE(sa.front().image, c.at("A").train.samples.front().image);
}

TEST(Synthetic, SplitsAreSubjectDisjoint) {
    const Benchmark bench = generate_synthetic_benchmark(small_specs(4));
    for (const auto& [id, splits] : bench) EXPECT_NO_THROW(check_subject_disjoint(splits.train, splits.test)) << id;
}

TEST(Synthetic, ZeroSpoofSubsetHasOnlyLiveSamples) {
    auto specs = small_specs(5);
    specs.at("A").n_spoof = 0;
    const Benchmark bench = generate_synthetic_benchmark(specs);
    const auto& a = bench.at("A");
    EXPECT_EQ(a.train.count(Label::spoof) + a.test.count(Label::spoof), 0u);
    EXPECT_EQ(a.train.count(Label::live) + a.test.count(Label::live), 24u);
}

TEST(Synthetic, SharedSpoofTypeBetweenAAndBIsRejected) {
    auto specs = small_specs(5);
    specs.at("B").spoof_types.push_back(specs.at("A").spoof_types.front());
    EXPECT_EQ(kind_of([&] { generate_synthetic_benchmark(specs); }), ErrorKind::protocol_violation);
    specs.erase("A");
    EXPECT_EQ(kind_of([&] { generate_synthetic_benchmark(specs); }), ErrorKind::config);
}

TEST(Manifest, WriteLoadRoundTripKeepsPixelsAndAttributes) {
    const fs::path dir = fresh_dir("roundtrip");
    Benchmark bench = generate_synthetic_benchmark(small_specs(6));
    write_benchmark(dir, bench);
    DatasetManifest loaded = load_manifest(dir / "A" / "train.csv");
    load_images(loaded);
    load_base_faces(loaded);
    const auto& orig = bench.at("A").train.samples;
    ASSERT_EQ(loaded.samples.size(), orig.size());
    EXPECT_EQ(loaded.split, Split::train);
    EXPECT_EQ(loaded.subset_id, "A");
    for (std::size_t i = 0; i < orig.size(); ++i) {
        const auto& a = orig[i];
        const auto& b = loaded.samples[i];
        EXPECT_EQ(a.sample_id, b.sample_id);
        EXPECT_EQ(a.label, b.label);
        EXPECT_EQ(a.spoof_macro, b.spoof_macro);
        EXPECT_EQ(a.spoof_micro, b.spoof_micro);
        EXPECT_EQ(a.ethnicity, b.ethnicity);
        EXPECT_EQ(a.age, b.age);
        EXPECT_EQ(a.domain_id, b.domain_id);
        // 8-bit PNG storage: pixels agree to quantisation
        ASSERT_EQ(a.image.shape(), b.image.shape());
        for (std::size_t k = 0; k < a.image.size(); ++k) EXPECT_NEAR(a.image[k], b.image[k], 0.5 / 255 + 1e-12);
        ASSERT_EQ(a.gt_mask.has_value(), b.gt_mask.has_value());
        if (a.gt_mask) EXPECT_EQ(*a.gt_mask, *b.gt_mask);
        EXPECT_TRUE(b.base_live.has_value());
    }
    fs::remove_all(dir);
}

void write_csv(const fs::path& path, const std::string& body) {
    std::ofstream(path) << body;
}

TEST(Manifest, MalformedFilesAreSchemaErrors) {
    const fs::path dir = fresh_dir("malformed");
    const std::string header = std::string(kManifestHeader) + "\n";
    const std::string live_row = "s1-0,a.png,live,none,,eth_a,30,,A,\n";

    write_csv(dir / "dup.csv", header + live_row + live_row);
    EXPECT_EQ(kind_of([&] { load_manifest(dir / "dup.csv"); }), ErrorKind::schema);

    write_csv(dir / "nocol.csv", "sample_id,path,label\ns1-0,a.png,live\n");
    EXPECT_EQ(kind_of([&] { load_manifest(dir / "nocol.csv"); }), ErrorKind::schema);

    write_csv(dir / "label.csv", header + "s1-0,a.png,bonafide,none,,eth_a,30,,A,\n");
    EXPECT_EQ(kind_of([&] { load_manifest(dir / "label.csv"); }), ErrorKind::schema);

    write_csv(dir / "live_macro.csv", header + "s1-0,a.png,live,print,print,eth_a,30,,A,\n");
    EXPECT_EQ(kind_of([&] { load_manifest(dir / "live_macro.csv"); }), ErrorKind::schema);

    write_csv(dir / "empty.csv", "");
    EXPECT_EQ(kind_of([&] { load_manifest(dir / "empty.csv"); }), ErrorKind::schema);

    write_csv(dir / "header_only.csv", header);
    EXPECT_TRUE(load_manifest(dir / "header_only.csv").samples.empty());
    fs::remove_all(dir);
}

TEST(Batches, BalancedSamplingHonoursLiveFraction) {
    const Benchmark bench = generate_synthetic_benchmark(small_specs(7));
    const DatasetManifest& m = bench.at("A").train;
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        const Batch b = sample_batch(m, 8, 0.5, rng);
        int live = 0;
        for (Label l : b.labels) live += l == Label::live;
        EXPECT_EQ(live, 4);
        EXPECT_EQ(b.images.shape(), (Shape{8, 3, 16, 16}));
    }
    EXPECT_EQ(kind_of([&] { sample_batch(m, 1000, 0.5, rng); }), ErrorKind::data);
}

}  // namespace
}  // namespace fasw

#include <gtest/gtest.h>

#include <random>

#include "fasw/error.hpp"
#include "fasw/sre.hpp"
#include "test_util.hpp"

namespace fasw {
namespace {

using testing::random_tensor;

TEST(PreliminaryMask, ThresholdMatchesPerPixelLoop) {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> pick(0, 63);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor spoof = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
        Tensor live = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
        const double threshold = 0.05 + 0.02 * (trial % 50);
        // force a few pixels to sit exactly on the threshold
        for (int k = 0; k < 4; ++k) {
            const int p = pick(rng);
            for (int c = 0; c < 3; ++c) spoof[c * 64 + p] = live[c * 64 + p];
            spoof[p] = live[p] + threshold <= 1.0 ? live[p] + threshold : live[p] - threshold;
        }
        const Tensor gray = difference_gray(spoof, live);
        const Tensor mask = threshold_mask(gray, threshold);
        ASSERT_EQ(mask.shape(), (Shape{1, 8, 8}));
        for (int h = 0; h < 8; ++h) {
            for (int w = 0; w < 8; ++w) {
                double p = 0.0;
                for (int c = 0; c < 3; ++c) p += std::abs(spoof[(c * 8 + h) * 8 + w] - live[(c * 8 + h) * 8 + w]);
                EXPECT_EQ(gray[h * 8 + w], p);
                EXPECT_EQ(mask[h * 8 + w], p >= threshold ? 1.0 : 0.0);
            }
        }
    }
}

TEST(PreliminaryMask, BoundaryValueIsSpoof) {
    Tensor gray({1, 1, 3}, {0.25, 0.5, 0.75});
    const Tensor mask = threshold_mask(gray, 0.5);
    EXPECT_EQ(mask.storage(), (std::vector<double>{0.0, 1.0, 1.0}));
}

TEST(PreliminaryMask, LiveSampleIsAllZero) {
    ImageSample s;
    s.sample_id = "s0-0";
    s.label = Label::live;
    s.image = Tensor({3, 4, 4}, 0.5);
    const PreliminaryMask pm = compute_preliminary_mask(s, OracleReconstructor{}, 0.1);
    EXPECT_EQ(pm.mask, Tensor({1, 4, 4}, 0.0));
}

TEST(PreliminaryMask, OracleRecoversPerturbedRegion) {
    ImageSample s;
    s.sample_id = "s0-1";
    s.label = Label::spoof;
    s.base_live = Tensor({3, 4, 4}, 0.5);
    s.image = *s.base_live;
    s.image[1 * 4 + 2] = 0.9;  // channel 0, row 1, column 2
    const PreliminaryMask pm = compute_preliminary_mask(s, OracleReconstructor{}, 0.1);
    Tensor expected({1, 4, 4}, 0.0);
    expected[1 * 4 + 2] = 1.0;
    EXPECT_EQ(pm.mask, expected);
    EXPECT_EQ(pm.provenance, MaskProvenance::oracle);
}

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.levels = 2;
    cfg.channels = {3, 4};
    cfg.height = 8;
    cfg.width = 8;
    return cfg;
}

TEST(Sre, MaskIgnoresPerChannelConstantOffsets) {
    const ModelConfig cfg = small_config();
    const Sre sre(cfg, 4, 7);
    std::mt19937_64 rng(2);
    FeaturePyramid base, shifted;
    for (const Shape& s : pyramid_shapes(cfg, 2)) {
        Tensor t = random_tensor(s, rng);
        Tensor u = t;
        std::uniform_real_distribution<double> off(-3.0, 3.0);
        for (int c = 0; c < s[1]; ++c) {
            const double o = off(rng);
            for (int n = 0; n < s[0]; ++n)
                for (int h = 0; h < s[2]; ++h)
                    for (int w = 0; w < s[3]; ++w) u.at(n, c, h, w) += o;
        }
        base.emplace_back(t);
        shifted.emplace_back(u);
    }
    const Tensor a = sre.forward(base).value();
    const Tensor b = sre.forward(shifted).value();
    ASSERT_EQ(a.shape(), (Shape{2, 1, 8, 8}));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Sre, ConstantPyramidsGiveTheSameMask) {
    const ModelConfig cfg = small_config();
    const Sre sre(cfg, 4, 7);
    FeaturePyramid zeros, constants;
    for (const Shape& s : pyramid_shapes(cfg, 1)) {
        zeros.emplace_back(Tensor(s, 0.0));
        constants.emplace_back(Tensor(s, 2.5));
    }
    const Tensor a = sre.forward(zeros).value();
    const Tensor b = sre.forward(constants).value();
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a[i], b[i], 1e-12);
        EXPECT_GT(a[i], 0.0);
        EXPECT_LT(a[i], 1.0);
    }
}

TEST(SoftIou, MatchesDefinition) {
    Tensor m({1, 2, 2}, {0.5, 1.0, 0.0, 0.25});
    Tensor g({1, 2, 2}, {1.0, 1.0, 0.0, 0.0});
    // intersection 1.5, union (0.5 + 1 + 0 + 0.25) + 2 - 1.5 = 2.25
    EXPECT_NEAR(soft_iou(m, g), 1.5 / 2.25, 1e-15);
    EXPECT_EQ(soft_iou(Tensor({1, 2, 2}, 0.0), Tensor({1, 2, 2}, 0.0)), 1.0);
    EXPECT_EQ(soft_iou(g, g), 1.0);
}

TEST(Resample, NearestPicksSourcePixels) {
    Tensor t({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    const Tensor up = resample_nearest(t, 4, 4);
    ASSERT_EQ(up.shape(), (Shape{1, 1, 4, 4}));
    for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w) EXPECT_EQ(up.at(0, 0, h, w), t.at(0, 0, h / 2, w / 2));
    const Tensor down = resample_nearest(up, 2, 2);
    EXPECT_EQ(down, t);
    // identity when the size is unchanged
    EXPECT_EQ(resample_nearest(t, 2, 2), t);
}

}  // namespace
}  // namespace fasw

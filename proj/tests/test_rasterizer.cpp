// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include "oracles.hpp"

#include <soit/rasterizer.hpp>

#include <gtest/gtest.h>

#include <numeric>

using namespace soit;

namespace {

/// Camera on the -z side looking along +z with its principal point on a pixel center.
Camera pinhole(int size, double f) {
    Camera cam;
    cam.width  = size;
    cam.height = size;
    cam.fx = cam.fy = f;
    cam.cx = cam.cy = 0.5 * size; // odd size: the center pixel's center
    cam.world_to_cam(2, 3) = 5.0;  // world origin at depth 5
    return cam;
}

/// One isotropic splat at world (0, 0, z) with DC color `rgb` and opacity `o`.
void set_splat(GaussianCloud<double> &c, std::size_t i, double z, double scale, double o, Eigen::Vector3d rgb) {
    c.mu[3 * i + 2] = z;
    for (int k = 0; k < 3; ++k) {
        c.log_scale[3 * i + k]          = std::log(scale);
        c.sh_color[kColorWidth * i + k] = (rgb[k] - 0.5) / kShC0;
    }
    c.quat[4 * i]             = 1.0;
    c.opacity_logit[i]        = logit(o);
    c.weight_sh[kShCoeffs * i] = inverse_softplus(1.0) / kShC0;
}

std::vector<std::uint32_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::uint32_t> p(n);
    std::iota(p.begin(), p.end(), 0u);
    std::mt19937_64 rng(seed);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

const Vec3<double> kBg(0.2, 0.4, 0.6);

} // namespace

TEST(RenderOit, EmptyCloudIsBackground) {
    const GaussianCloud<double> empty;
    const auto out = render_oit(empty, test::front_camera(20, 12), kBg);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 20; ++x)
            for (int c = 0; c < 3; ++c)
                EXPECT_EQ(out.image.at(x, y, c), kBg[c]);
    EXPECT_EQ(out.splat_pixel_pairs, 0u);
}

TEST(RenderOit, SingleClampedSplat) {
    GaussianCloud<double> c(1);
    c.log_sigma = std::log(20.0);
    const Eigen::Vector3d rgb(0.9, 0.3, 0.1);
    set_splat(c, 0, 0.0, 0.05, 0.999999, rgb);
    const Camera cam = pinhole(9, 40);
    const auto out   = render_oit(c, cam, kBg);
    for (int ch = 0; ch < 3; ++ch)
        EXPECT_NEAR(out.image.at(4, 4, ch), 0.01 * kBg[ch] + 0.99 * rgb[ch], 1e-12);
}

TEST(RenderOit, PermutationInvariant) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto cloud_d = test::random_cloud<double>(seed, 20);
        const auto cloud_f = cloud_d.cast<float>();
        const Camera cam   = test::front_camera(48, 40);
        RenderOptions o1, o2;
        const auto p1 = shuffled(20, seed + 10), p2 = shuffled(20, seed + 20);
        o1.order = p1;
        o2.order = p2;
        EXPECT_LE(test::max_abs_diff(render_oit(cloud_f, cam, kBg.cast<float>().eval(), nullptr, o1).image,
                                     render_oit(cloud_f, cam, kBg.cast<float>().eval(), nullptr, o2).image),
                  1e-5);
        EXPECT_LE(test::max_abs_diff(render_oit(cloud_d, cam, kBg, nullptr, o1).image,
                                     render_oit(cloud_d, cam, kBg, nullptr, o2).image),
                  1e-12);
    }
}

TEST(RenderOit, MatchesPerPixelOracle) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto cloud = test::random_cloud<double>(40 + seed, 60, 0.9);
        const Camera cam = test::front_camera(53, 37); // tiles do not divide the image
        const auto got   = render_oit(cloud, cam, kBg);
        const auto ref   = test::naive_oit(cloud, cam, kBg);
        EXPECT_LE(test::max_abs_diff(got.image, ref.image), 1e-12);
        EXPECT_EQ(got.splat_pixel_pairs, ref.pairs);
    }
}

TEST(RenderOit, ZeroWeightPixelsShowBackground) {
    auto cloud      = test::random_cloud<double>(3, 10);
    cloud.log_sigma = std::log(0.5); // every splat lies beyond sigma, so Q = 0 everywhere
    const auto out  = render_oit(cloud, test::front_camera(24, 24), kBg);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            for (int c = 0; c < 3; ++c)
                EXPECT_EQ(out.image.at(x, y, c), kBg[c]);
}

TEST(RenderOit, BaseSizeMismatchIsRejected) {
    const auto cloud = test::random_cloud<double>(1, 3);
    const auto base  = AccumGrid<double>::empty(5, 5);
    EXPECT_THROW(render_oit(cloud, test::front_camera(8, 8), kBg, &base), ContractViolation);
}

TEST(RenderOit, DecomposesOverDisjointSubsets) {
    const auto cloud = test::random_cloud<double>(77, 80);
    const Camera cam = test::front_camera(40, 40);
    std::mt19937_64 rng(5);
    std::vector<std::uint8_t> in_a(cloud.size()), in_b(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        in_a[i] = rng() % 2;
        in_b[i] = 1 - in_a[i];
    }
    auto grid = AccumGrid<double>::empty(cam.width, cam.height);
    accumulate_splats(cloud, in_a, cam, grid);
    accumulate_splats(cloud, in_b, cam, grid);
    EXPECT_LE(test::max_abs_diff(resolve(grid, kBg), render_oit(cloud, cam, kBg).image), 1e-12);
}

TEST(RenderSorted, SingleSplatMatchesOit) {
    GaussianCloud<double> c(1);
    c.log_sigma = std::log(20.0);
    set_splat(c, 0, 0.0, 0.3, 0.97, {0.2, 0.7, 0.5});
    const Camera cam = pinhole(15, 30);
    EXPECT_LE(test::max_abs_diff(render_sorted(c, cam, kBg).image, render_oit(c, cam, kBg).image), 1e-12);
}

TEST(RenderSorted, TwoHalfAlphaSplats) {
    GaussianCloud<double> c(2);
    c.log_sigma = std::log(20.0);
    const Eigen::Vector3d near_c(0.9, 0.1, 0.2), far_c(0.1, 0.8, 0.3);
    set_splat(c, 0, 1.0, 0.2, 0.5, far_c);  // listed first but farther
    set_splat(c, 1, -1.0, 0.2, 0.5, near_c);
    const Camera cam = pinhole(9, 30);
    const auto out   = render_sorted(c, cam, kBg);
    for (int ch = 0; ch < 3; ++ch)
        EXPECT_NEAR(out.image.at(4, 4, ch), 0.5 * near_c[ch] + 0.25 * far_c[ch] + 0.25 * kBg[ch], 1e-12);
}

TEST(RenderSorted, MatchesPerPixelOracle) {
    const auto cloud = test::random_cloud<double>(50, 50, 0.8);
    const Camera cam = test::front_camera(45, 35);
    EXPECT_LE(test::max_abs_diff(render_sorted(cloud, cam, kBg).image, test::naive_sorted(cloud, cam, kBg)), 1e-12);
}

TEST(RenderSorted, DepthSwapChangesOutputButNotOit) {
    GaussianCloud<double> c(2);
    c.log_sigma = std::log(20.0);
    set_splat(c, 0, -0.2, 0.3, 0.8, {0.9, 0.1, 0.1});
    set_splat(c, 1, 0.2, 0.3, 0.8, {0.1, 0.1, 0.9});
    GaussianCloud<double> swapped = c;
    swapped.mu[2]                 = 0.2;
    swapped.mu[5]                 = -0.2;
    const Camera cam              = pinhole(9, 30);
    EXPECT_GT(test::max_abs_diff(render_sorted(c, cam, kBg).image, render_sorted(swapped, cam, kBg).image), 0.05);
    // The OIT weights move with depth too, but the order itself carries no information.
    RenderOptions rev;
    const std::vector<std::uint32_t> order = {1, 0};
    rev.order                              = order;
    EXPECT_LE(test::max_abs_diff(render_oit(c, cam, kBg).image, render_oit(c, cam, kBg, nullptr, rev).image), 1e-15);
}

TEST(RenderWithPrerender, AllActiveEmptyCache) {
    const auto cloud = test::random_cloud<float>(21, 40);
    const Camera cam = test::front_camera(40, 40);
    PrerenderEntry<float> entry{AccumGrid<float>::empty(40, 40), 1};
    const ActiveMask all(cloud.size(), 1);
    const Vec3<float> bg = kBg.cast<float>();
    const auto got       = render_with_prerender(cloud, all, cam, entry, 1, bg);
    const auto ref       = render_oit(cloud, cam, bg);
    EXPECT_EQ(got.image.data, ref.image.data);
    EXPECT_EQ(got.splat_pixel_pairs, ref.splat_pixel_pairs);
}

TEST(RenderWithPrerender, AllFrozenIsPureReadout) {
    const auto cloud = test::random_cloud<float>(22, 40);
    const Camera cam = test::front_camera(40, 40);
    const Vec3<float> bg = kBg.cast<float>();
    PrerenderEntry<float> entry{AccumGrid<float>::empty(40, 40), 0};
    const std::vector<std::uint8_t> every(cloud.size(), 1);
    accumulate_splats(cloud, every, cam, entry.acc);
    entry.stamp = 3;
    const ActiveMask none(cloud.size(), 0);
    const auto got = render_with_prerender(cloud, none, cam, entry, 3, bg);
    EXPECT_LE(test::max_abs_diff(got.image, render_oit(cloud, cam, bg).image), 1e-6);
    EXPECT_EQ(got.splat_pixel_pairs, 0u);
}

TEST(RenderWithPrerender, RandomSplitMatchesFullRender) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto cloud     = test::random_cloud<float>(30 + seed, 120, 0.9);
        const Camera cam     = test::front_camera(48, 48);
        const Vec3<float> bg = kBg.cast<float>();
        std::mt19937_64 rng(seed);
        std::bernoulli_distribution keep(0.7);
        ActiveMask active(cloud.size());
        std::vector<std::uint8_t> frozen(cloud.size());
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            active[i] = keep(rng) ? 1 : 0;
            frozen[i] = 1 - active[i];
        }
        PrerenderEntry<float> entry{AccumGrid<float>::empty(48, 48), 0};
        // Blend-and-update: bake the frozen set while rendering.
        const auto first = render_with_prerender(cloud, active, cam, entry, 1, bg, frozen);
        EXPECT_EQ(entry.stamp, 1);
        const auto second = render_with_prerender(cloud, active, cam, entry, 1, bg);
        const auto full   = render_oit(cloud, cam, bg);
        EXPECT_LE(test::max_abs_diff(first.image, full.image), 1e-5);
        EXPECT_LE(test::max_abs_diff(second.image, full.image), 1e-5);
        EXPECT_LT(second.splat_pixel_pairs, full.splat_pixel_pairs);
    }
}

TEST(RenderWithPrerender, StaleEntryWithoutBakeIsRejected) {
    const auto cloud = test::random_cloud<float>(1, 4);
    const Camera cam = test::front_camera(16, 16);
    PrerenderEntry<float> entry{AccumGrid<float>::empty(16, 16), 0};
    const ActiveMask all(cloud.size(), 1);
    EXPECT_THROW(render_with_prerender(cloud, all, cam, entry, 2, Vec3<float>::Zero().eval()), ContractViolation);
}

TEST(WorkCounter, MatchesBruteForcePairs) {
    const auto cloud = test::random_cloud<double>(91, 150, 1.2);
    const Camera cam = test::front_camera(61, 47);
    EXPECT_EQ(render_oit(cloud, cam, kBg).splat_pixel_pairs, test::naive_oit(cloud, cam, kBg).pairs);
}

TEST(Determinism, RepeatRendersAreBitIdentical) {
    const auto cloud     = test::random_cloud<float>(8, 300, 1.0);
    const Camera cam     = test::front_camera(64, 64);
    const Vec3<float> bg = kBg.cast<float>();
    const auto a         = render_oit(cloud, cam, bg);
    const auto b         = render_oit(cloud, cam, bg);
    EXPECT_EQ(a.image.data, b.image.data);
}

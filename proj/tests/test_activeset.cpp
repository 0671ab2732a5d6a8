// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include "oracles.hpp"

#include <soit/train.hpp>

#include <gtest/gtest.h>

#include <cstring>
#include <set>

using namespace soit;

namespace {

using Norms = std::vector<std::array<double, kNumAttrs>>;

Norms random_norms(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(1e-6, 1.0);
    Norms out(n);
    for (auto &row : out)
        for (double &v : row)
            v = u(rng);
    return out;
}

struct SmallScene {
    GaussianCloud<float> cloud;
    std::vector<Camera> cameras;
    std::vector<Image<float>> images;
};

/// Ring cameras over a seeded cloud, targets rendered from a perturbed copy so gradients are nonzero.
SmallScene small_scene(std::size_t n, int views = 8, int size = 32) {
    SmallScene s;
    s.cloud   = test::random_cloud<float>(5, n, 0.6);
    s.cameras = ring_cameras(views, size);
    auto target = s.cloud;
    std::mt19937_64 rng(9);
    std::normal_distribution<float> g(0.0f, 0.05f);
    for (float &v : target.mu)
        v += g(rng);
    for (const auto &cam : s.cameras)
        s.images.push_back(render_oit(target, cam, Vec3<float>::Zero().eval()).image);
    return s;
}

} // namespace

TEST(ClassifyActive, ZeroThresholdsKeepPreviousSet) {
    const Norms norms = random_norms(50, 1);
    ActiveMask prev(50, 1);
    for (std::size_t i = 0; i < 50; i += 3)
        prev[i] = 0;
    EXPECT_EQ(classify_active(norms, {}, prev), prev);
}

TEST(ClassifyActive, ZeroGradientsEmptyTheSet) {
    const Norms zeros(20, std::array<double, kNumAttrs>{});
    const ActiveMask out = classify_active(zeros, {}, ActiveMask(20, 1));
    EXPECT_EQ(std::count(out.begin(), out.end(), 1), 0);
}

TEST(ClassifyActive, AnyAttributeAboveItsThresholdKeepsTheGaussian) {
    Norms norms(3, std::array<double, kNumAttrs>{});
    std::array<double, kNumAttrs> th;
    th.fill(0.5);
    norms[0][static_cast<int>(Attr::Weight)] = 0.6; // only one attribute passes
    norms[1].fill(0.5);                            // equal is not above
    norms[2].fill(0.9);
    const ActiveMask out = classify_active(norms, th, {1, 1, 0});
    EXPECT_EQ(out, (ActiveMask{1, 0, 0})); // Gaussian 2 stays frozen
    EXPECT_THROW(classify_active(norms, th, ActiveMask(2, 1)), ContractViolation);
}

TEST(MedianThresholds, FractionOfPerAttributeMedian) {
    Norms norms(4, std::array<double, kNumAttrs>{});
    for (int i = 0; i < 4; ++i)
        for (int a = 0; a < kNumAttrs; ++a)
            norms[i][a] = (i + 1) * (a + 1);
    const auto th = median_thresholds(norms, 0.1);
    for (int a = 0; a < kNumAttrs; ++a)
        EXPECT_NEAR(th[a], 0.1 * 2.5 * (a + 1), 1e-12);
}

TEST(DefaultUpdateInterval, GrowsForManyViews) {
    EXPECT_EQ(default_update_interval(17), 500);
    EXPECT_EQ(default_update_interval(249), 500);
    EXPECT_EQ(default_update_interval(250), 600);
}

TEST(SubsampleViews, AllViewsWhenCountMatches) {
    const auto cams = ring_cameras(12, 16);
    auto picked     = subsample_views(cams, 12, 3);
    std::sort(picked.begin(), picked.end());
    for (std::size_t i = 0; i < 12; ++i)
        EXPECT_EQ(picked[i], i);
    EXPECT_THROW(subsample_views(cams, 13, 0), ContractViolation);
}

TEST(SubsampleViews, CollinearMaxMin) {
    const std::vector<Eigen::Vector3d> pts = {{0, 0, 0}, {1, 0, 0}, {10, 0, 0}};
    EXPECT_EQ(farthest_point_sampling(pts, 2, 0), (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(farthest_point_sampling(pts, 3, 0), (std::vector<std::size_t>{0, 2, 1}));
}

TEST(SubsampleViews, TiesGoToLowestIndex) {
    const std::vector<Eigen::Vector3d> pts = {{0, 0, 0}, {-1, 0, 0}, {1, 0, 0}};
    EXPECT_EQ(farthest_point_sampling(pts, 2, 0), (std::vector<std::size_t>{0, 1}));
}

TEST(SubsampleViews, MatchesGreedyOracleOnRing) {
    const auto cams = ring_cameras(50, 16);
    std::vector<Eigen::Vector3d> centers;
    for (const auto &c : cams)
        centers.push_back(c.focal_point());
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto picked = subsample_views(cams, 10, seed);
        const auto ref    = test::fps_oracle(centers, 10, picked.front());
        EXPECT_EQ(picked, ref);
        EXPECT_GE(test::min_spacing(centers, picked) + 1e-12, test::min_spacing(centers, ref));
    }
}

TEST(SubsampleViews, SeedPicksTheFirstView) {
    const auto cams = ring_cameras(20, 16);
    std::set<std::size_t> firsts;
    for (std::uint64_t seed = 0; seed < 40; ++seed)
        firsts.insert(subsample_views(cams, 3, seed).front());
    EXPECT_GT(firsts.size(), 5u);
    EXPECT_EQ(subsample_views(cams, 5, 77), subsample_views(cams, 5, 77));
}

TEST(ReconcileCache, NothingNewlyFrozenAdvancesStampOnly) {
    const auto s = small_scene(30);
    ActiveSetState st;
    st.reset(30);
    st.stage = 4;
    PrerenderEntry<float> e{AccumGrid<float>::empty(32, 32), 2};
    const auto before = e.acc.px;
    EXPECT_EQ(reconcile_cache(s.cloud, s.cameras[0], st, e), 0u);
    EXPECT_EQ(e.stamp, 4);
    EXPECT_EQ(std::memcmp(before.data(), e.acc.px.data(), before.size() * sizeof(before[0])), 0);
}

TEST(ReconcileCache, EverythingFrozenEqualsFullAccumulators) {
    const auto s = small_scene(40);
    ActiveSetState st;
    st.reset(40);
    st.stage = 1;
    std::fill(st.active.begin(), st.active.end(), 0);
    std::fill(st.frozen_stage.begin(), st.frozen_stage.end(), 1);
    for (std::size_t v = 0; v < s.cameras.size(); ++v) {
        PrerenderEntry<float> e{AccumGrid<float>::empty(32, 32), 0};
        reconcile_cache(s.cloud, s.cameras[v], st, e);
        const auto full = render_oit(s.cloud, s.cameras[v], Vec3<float>::Zero().eval());
        for (std::size_t p = 0; p < e.acc.px.size(); ++p) {
            EXPECT_NEAR(e.acc.px[p].q, full.acc.px[p].q, 1e-6);
            EXPECT_NEAR(e.acc.px[p].t, full.acc.px[p].t, 1e-6);
            for (int c = 0; c < 3; ++c)
                EXPECT_NEAR(e.acc.px[p].p[c], full.acc.px[p].p[c], 1e-6);
        }
    }
}

TEST(ReconcileCache, IncrementalStagesMatchFromScratch) {
    const auto s = small_scene(90);
    std::mt19937_64 rng(4);
    ActiveSetState st;
    st.reset(90);
    // Three freezing stages, reconciled once at the end.
    for (int stage = 1; stage <= 3; ++stage) {
        st.stage = stage;
        for (std::size_t i = 0; i < 90; ++i)
            if (st.active[i] && rng() % 4 == 0) {
                st.active[i]       = 0;
                st.frozen_stage[i] = stage;
            }
    }
    const Vec3<float> bg(0.3f, 0.2f, 0.1f);
    for (std::size_t v = 0; v < s.cameras.size(); ++v) {
        PrerenderEntry<float> e{AccumGrid<float>::empty(32, 32), 0};
        reconcile_cache(s.cloud, s.cameras[v], st, e);
        auto scratch = AccumGrid<float>::empty(32, 32);
        ActiveMask frozen(90);
        for (std::size_t i = 0; i < 90; ++i)
            frozen[i] = 1 - st.active[i];
        accumulate_splats(s.cloud, frozen, s.cameras[v], scratch);
        EXPECT_LE(test::max_abs_diff(resolve(e.acc, bg), resolve(scratch, bg)), 1e-5);
        const auto composed = render_with_prerender(s.cloud, st.active, s.cameras[v], e, 3, bg);
        EXPECT_LE(test::max_abs_diff(composed.image, render_oit(s.cloud, s.cameras[v], bg).image), 1e-5);
    }
}

TEST(UpdateActiveSet, OutOfFrustumGaussiansFreezeFirst) {
    auto s = small_scene(40);
    // Move every other Gaussian far above all cameras.
    for (std::size_t i = 1; i < 40; i += 2)
        s.cloud.mu[3 * i + 1] = 60.0f;
    ActiveSetState st;
    st.reset(40);
    PreRenderCache cache;
    cache.reset(s.cameras.size());
    ActiveSetConfig cfg;
    cfg.subsample_count = 4;
    cfg.thresholds      = std::array<double, kNumAttrs>{};
    const ViewSet views{s.cameras, s.images};
    const auto up = update_active_set(s.cloud, views, cache, st, cfg, Vec3<float>::Zero(), 0.2, 1, 0);
    EXPECT_EQ(up.stage, 1);
    for (std::size_t i = 0; i < 40; ++i) {
        if (i % 2 == 1) {
            EXPECT_EQ(st.active[i], 0) << i;
            EXPECT_EQ(st.frozen_stage[i], 1);
        }
    }
    EXPECT_GE(up.frozen_this_stage, 20u);
}

TEST(UpdateActiveSet, InfiniteThresholdsEmptyTheSet) {
    const auto s = small_scene(30);
    ActiveSetState st;
    st.reset(30);
    PreRenderCache cache;
    cache.reset(s.cameras.size());
    ActiveSetConfig cfg;
    cfg.subsample_count = 3;
    std::array<double, kNumAttrs> inf;
    inf.fill(std::numeric_limits<double>::infinity());
    cfg.thresholds = inf;
    const ViewSet views{s.cameras, s.images};
    const auto up  = update_active_set(s.cloud, views, cache, st, cfg, Vec3<float>::Zero(), 0.2, 0, 0);
    EXPECT_EQ(up.active_count, 0u);
    auto &e = cache.entry(2, s.cameras[2]);
    EXPECT_GT(reconcile_cache(s.cloud, s.cameras[2], st, e), 0u);
    const auto r = render_with_prerender(s.cloud, st.active, s.cameras[2], e, st.stage, Vec3<float>::Zero().eval());
    EXPECT_EQ(r.splat_pixel_pairs, 0u);
}

TEST(UpdateActiveSet, FrozenSetIsMonotone) {
    const auto s = small_scene(60);
    ActiveSetState st;
    st.reset(60);
    PreRenderCache cache;
    cache.reset(s.cameras.size());
    ActiveSetConfig cfg;
    cfg.subsample_count    = 4;
    cfg.threshold_fraction = 1.0;
    const ViewSet views{s.cameras, s.images};
    ActiveMask prev = st.active;
    for (int k = 0; k < 4; ++k) {
        update_active_set(s.cloud, views, cache, st, cfg, Vec3<float>::Zero(), 0.2, k, k);
        EXPECT_EQ(st.stage, k + 1);
        for (std::size_t i = 0; i < 60; ++i)
            EXPECT_LE(st.active[i], prev[i]);
        prev = st.active;
    }
    EXPECT_LT(st.active_count(), 60u);
}

TEST(UpdateActiveSet, RefreshReopensTheSet) {
    const auto s = small_scene(60);
    ActiveSetState st;
    st.reset(60);
    PreRenderCache cache;
    cache.reset(s.cameras.size());
    ActiveSetConfig cfg;
    cfg.subsample_count    = 4;
    cfg.threshold_fraction = 1.0;
    cfg.refresh_every      = 1;
    const ViewSet views{s.cameras, s.images};
    update_active_set(s.cloud, views, cache, st, cfg, Vec3<float>::Zero(), 0.2, 0, 0);
    ASSERT_LT(st.active_count(), 60u);
    const auto up = update_active_set(s.cloud, views, cache, st, cfg, Vec3<float>::Zero(), 0.2, 1, 1);
    // After re-opening, every Gaussian frozen now was frozen at this stage.
    for (std::size_t i = 0; i < 60; ++i)
        if (!st.active[i]) {
            EXPECT_EQ(st.frozen_stage[i], up.stage);
        }
}

TEST(ActiveSetState, FrozenSinceAndRemap) {
    ActiveSetState st;
    st.reset(5);
    st.stage        = 3;
    st.active       = {1, 0, 0, 0, 1};
    st.frozen_stage = {-1, 1, 2, 3, -1};
    EXPECT_EQ(st.frozen_since(1), (ActiveMask{0, 0, 1, 1, 0}));
    EXPECT_EQ(st.frozen_since(0), (ActiveMask{0, 1, 1, 1, 0}));
    EXPECT_TRUE(st.any_frozen());
    const std::vector<std::size_t> src = {4, 2, 2};
    st.remap(src);
    EXPECT_EQ(st.active, (ActiveMask{1, 0, 0}));
    EXPECT_EQ(st.frozen_stage, (std::vector<std::int64_t>{-1, 2, 2}));
}

TEST(PreRenderCache, LazyAllocationAndSize) {
    const auto cams = ring_cameras(6, 24);
    PreRenderCache cache;
    cache.reset(6);
    EXPECT_EQ(cache.bytes(), 0u);
    cache.entry(1, cams[1]);
    cache.entry(4, cams[4]);
    EXPECT_EQ(cache.bytes(), 2u * 24 * 24 * 5 * sizeof(float));
    cache.entry(4, cams[4]).stamp = 2;
    cache.invalidate(7);
    EXPECT_EQ(cache.entry(4, cams[4]).stamp, 7);
    EXPECT_THROW(cache.entry(6, cams[0]), ContractViolation);
}

TEST(ActiveSetTraining, CachedRendersStayExact) {
    FixtureSpec spec;
    spec.n_gaussians = 120;
    spec.n_views     = 10;
    spec.resolution  = 32;
    const Fixture fx = generate_fixture(spec);
    TrainConfig cfg;
    cfg.iterations                = 400;
    cfg.active.activation_iteration = 150;
    cfg.active.update_interval    = 50;
    cfg.active.subsample_count    = 4;
    cfg.active.threshold_fraction = 1.0;
    cfg.densify.interval          = 50;
    cfg.densify.from_iteration    = 50;
    cfg.verify_cache              = true;
    TrainResult res;
    ASSERT_NO_THROW(res = train(fx.data, cfg));
    ASSERT_FALSE(res.updates.empty());
    EXPECT_LE(res.max_cache_error, 1e-5);
    EXPECT_GT(res.updates.back().stage, 2);
    EXPECT_LT(res.active.active_count(), res.cloud.size());
}

TEST(ActiveSetTraining, FirstUpdateFreezesSomethingWithGenerousThresholds) {
    const Fixture fx = generate_fixture({});
    TrainConfig cfg;
    cfg.iterations                  = 301;
    cfg.active.activation_iteration = 300;
    cfg.active.subsample_count      = 10;
    cfg.active.threshold_fraction   = 1.0;
    const TrainResult res           = train(fx.data, cfg);
    ASSERT_EQ(res.updates.size(), 1u);
    EXPECT_LT(res.updates[0].active_count, res.cloud.size());
}

TEST(ActiveSetTraining, ConvergedSceneHaltsEarly) {
    // Targets are exact renders of the starting cloud, so every gradient vanishes at the first update.
    FixtureSpec spec;
    spec.n_gaussians = 80;
    spec.n_views     = 9;
    spec.resolution  = 32;
    Fixture fx       = generate_fixture(spec);
    for (std::size_t v = 0; v < fx.data.size(); ++v)
        fx.data.images[v] = render_oit(fx.ground_truth, fx.data.cameras[v], Vec3<float>::Zero().eval()).image;
    TrainConfig cfg;
    cfg.iterations                  = 50;
    cfg.active.activation_iteration = 0;
    cfg.active.subsample_count      = 5;
    std::array<double, kNumAttrs> tiny;
    tiny.fill(1e-7);
    cfg.active.thresholds = tiny;
    const TrainResult res = train(fx.data, cfg, fx.ground_truth);
    EXPECT_TRUE(res.halted_early);
    EXPECT_EQ(res.iterations_run, 0);
    EXPECT_EQ(res.active.active_count(), 0u);
}

TEST(ActiveSetTraining, FrozenParametersNeverChangeAgain) {
    FixtureSpec spec;
    spec.n_gaussians = 150;
    spec.n_views     = 10;
    spec.resolution  = 32;
    const Fixture fx = generate_fixture(spec);
    TrainConfig cfg;
    cfg.active.activation_iteration = 200;
    cfg.active.update_interval      = 50;
    cfg.active.subsample_count      = 5;
    cfg.active.threshold_fraction   = 1.0;
    cfg.densify_enabled             = false;
    cfg.iterations                  = 251; // first two updates, one step after the second
    const TrainResult early         = train(fx.data, cfg);
    cfg.iterations                  = 500;
    const TrainResult late          = train(fx.data, cfg);
    ASSERT_EQ(early.cloud.size(), late.cloud.size());
    std::size_t frozen = 0;
    for (std::size_t i = 0; i < early.cloud.size(); ++i) {
        if (early.active.active[i])
            continue;
        ++frozen;
        EXPECT_EQ(late.active.active[i], 0);
        for (Attr a : kAllAttrs) {
            const auto x = early.cloud.of(a, i), y = late.cloud.of(a, i);
            EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin())) << "gaussian " << i << " " << attr_name(a);
            const auto m0 = early.adam.m.of(a, i), m1 = late.adam.m.of(a, i);
            EXPECT_TRUE(std::equal(m0.begin(), m0.end(), m1.begin()));
        }
        EXPECT_EQ(early.adam.steps[i], late.adam.steps[i]);
    }
    EXPECT_GT(frozen, 0u);
}

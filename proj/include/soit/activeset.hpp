// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/backward.hpp>

#include <array>
#include <optional>
#include <vector>

namespace soit {

struct ActiveSetConfig {
    int activation_iteration = 15000; // K
    int update_interval      = 500;   // I
    int subsample_count      = 30;    // S
    /// Default threshold per attribute = fraction * median per-Gaussian gradient norm at the first update.
    double threshold_fraction = 1e-2;
    /// Fixed thresholds overriding the median rule.
    std::optional<std::array<double, kNumAttrs>> thresholds;
    /// Re-open the active set and rebuild every cache every this many stages (0 = never).
    int refresh_every = 0;
};

/// I = 500 by default, 600 when the view count is large enough that 2 * views reaches 500.
int default_update_interval(std::size_t n_views);

struct ActiveSetState {
    ActiveMask active;
    /// Stage at which each Gaussian was frozen, or -1 while active.
    std::vector<std::int64_t> frozen_stage;
    std::int64_t stage = 0;
    std::array<double, kNumAttrs> thresholds{};
    bool thresholds_set = false;

    void reset(std::size_t n);
    std::size_t size() const { return active.size(); }
    std::size_t active_count() const;
    bool any_frozen() const { return active_count() < active.size(); }
    /// Gaussians frozen after `stamp` and no later than the current stage.
    ActiveMask frozen_since(std::int64_t stamp) const;
    /// Drops/duplicates entries after densification: entry k takes source[k].
    void remap(std::span<const std::size_t> source);
};

/// Per-view pre-rendered accumulators of the frozen set. Entries are allocated on first use.
struct PreRenderCache {
    std::vector<PrerenderEntry<float>> entries;
    std::vector<std::uint8_t> allocated;

    void reset(std::size_t n_views);
    /// Entry for `view`, creating an empty one (stamp 0) sized for `cam` when missing.
    PrerenderEntry<float> &entry(std::size_t view, const Camera &cam);
    /// Clears every entry and stamps it with `stage` (used when the active set is re-opened).
    void invalidate(std::int64_t stage);
    std::size_t bytes() const;
};

/// Gaussian i is active iff some attribute norm exceeds its threshold, and it was active before.
ActiveMask classify_active(const std::vector<std::array<double, kNumAttrs>> &norms,
                           const std::array<double, kNumAttrs> &thresholds, const ActiveMask &previous);

/// Greedy farthest point sampling starting from `first`. Ties go to the lowest index.
std::vector<std::size_t> farthest_point_sampling(std::span<const Eigen::Vector3d> points, std::size_t count,
                                                 std::size_t first);

/// S views by farthest point sampling over camera centers, first pick drawn from `seed`.
std::vector<std::size_t> subsample_views(std::span<const Camera> cameras, std::size_t count, std::uint64_t seed);

/// Lazily folds the Gaussians frozen since entry.stamp into the entry and advances the stamp.
/// Returns the splat-pixel pairs spent.
std::uint64_t reconcile_cache(const GaussianCloud<float> &cloud, const Camera &cam, const ActiveSetState &state,
                              PrerenderEntry<float> &entry);

/// Training views available to an active-set update.
struct ViewSet {
    std::span<const Camera> cameras;
    std::span<const Image<float>> images;
};

struct ActiveSetUpdate {
    int iteration          = 0;
    std::int64_t stage     = 0;
    std::size_t active_count = 0;
    std::size_t frozen_this_stage = 0;
    std::vector<std::size_t> views; // indices into the ViewSet
    std::array<double, kNumAttrs> thresholds{};
    double mean_loss = 0;
    std::uint64_t splat_pixel_pairs = 0;
};

/// Per-Gaussian per-attribute gradient norms, taken per view and averaged over the selected views. Renders
/// each view through its (reconciled) cache plus the active set.
std::vector<std::array<double, kNumAttrs>> subsample_gradient_norms(const GaussianCloud<float> &cloud,
                                                                    const ViewSet &views,
                                                                    std::span<const std::size_t> selected,
                                                                    PreRenderCache &cache, ActiveSetState &state,
                                                                    const Vec3<float> &background,
                                                                    double lambda_ssim, double *mean_loss,
                                                                    std::uint64_t *pairs);

/// One active-set update: subsample views, accumulate gradient norms, classify, advance the stage.
ActiveSetUpdate update_active_set(const GaussianCloud<float> &cloud, const ViewSet &views, PreRenderCache &cache,
                                  ActiveSetState &state, const ActiveSetConfig &config,
                                  const Vec3<float> &background, double lambda_ssim, std::uint64_t seed,
                                  int iteration);

/// Per-attribute thresholds = fraction * median of the norms.
std::array<double, kNumAttrs> median_thresholds(const std::vector<std::array<double, kNumAttrs>> &norms,
                                                double fraction);

} // namespace soit

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/activeset.hpp>
#include <soit/adam.hpp>
#include <soit/densify.hpp>
#include <soit/io.hpp>
#include <soit/loss.hpp>

#include <functional>
#include <optional>

namespace soit {

struct TrainConfig {
    int iterations = 30000;
    /// Phase 2 uses the active set and pre-render caches; when off it keeps training every Gaussian.
    bool active_set_enabled = true;
    ActiveSetConfig active;
    LearningRates lr; // position_max_steps <= 0 means "the run length"; spatial_scale is set from the cameras
    double lambda_ssim = kDefaultLambdaSsim;
    bool densify_enabled = true;
    DensifyConfig densify; // until_iteration is capped at the activation iteration
    bool learn_sigma = true;
    /// Stop as soon as an update leaves no active Gaussian.
    bool halt_when_empty = true;
    std::uint64_t seed = 0;
    Vec3<float> background = Vec3<float>::Zero();
    /// Evaluate held-out PSNR/SSIM every this many iterations (0 = only at the end).
    int eval_every = 0;
    /// Slow debug mode: compare every cached render with a full render.
    bool verify_cache = false;
    double verify_tolerance = 1e-5;

    void validate() const;
};

struct IterationRecord {
    int iteration        = 0;
    double loss          = 0;
    std::size_t active_count = 0;
    std::uint64_t splat_pixel_pairs = 0;
    double wall_ms       = 0;
};

struct EvalRecord {
    int iteration = 0;
    double psnr   = 0;
    double ssim   = 0;
};

struct TrainResult {
    GaussianCloud<float> cloud;
    AdamState<float> adam;
    ActiveSetState active;
    std::vector<IterationRecord> iterations;
    std::vector<ActiveSetUpdate> updates;
    std::vector<EvalRecord> evals;
    std::size_t densified_clones = 0, densified_splits = 0, pruned = 0;
    int iterations_run = 0;
    bool halted_early  = false;
    double wall_seconds = 0;
    double max_cache_error = 0; // only with verify_cache
};

/// 1.1 x the largest distance of a camera center from the mean center.
double scene_extent(std::span<const Camera> cameras);

/// Gaussians at the points: DC color from the point color, isotropic scale from the mean squared distance
/// to the 3 nearest neighbours, identity rotation, opacity 0.1, weight v = 1 after softplus, and sigma at
/// the 90th percentile of the point depths over the cameras.
GaussianCloud<float> init_from_points(const PointCloud &points, std::span<const Camera> cameras);

struct EvalResult {
    std::vector<double> psnr, ssim;
    double mean_psnr = 0, mean_ssim = 0;
};

/// Renders the listed views with render_oit and scores them against the dataset images.
EvalResult evaluate(const GaussianCloud<float> &cloud, const Dataset &data, std::span<const std::size_t> views,
                    const Vec3<float> &background);

using ProgressFn = std::function<void(const IterationRecord &)>;

/// Phase 1 (iteration < K): full-cloud training with densification. Phase 2: active-set training with
/// lazily reconciled pre-render caches, updating the active set every I iterations. Halts early when the
/// active set becomes empty.
TrainResult train(const Dataset &data, const TrainConfig &config, std::optional<GaussianCloud<float>> init = {},
                  const ProgressFn &progress = {});

} // namespace soit

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/train.hpp>

#include <iosfwd>

namespace soit::cli {

/// Exit codes.
inline constexpr int kExitOk      = 0;
inline constexpr int kExitFailure = 1; // a check (gradcheck) failed
inline constexpr int kExitUsage   = 2; // bad flags, unreadable inputs

/// Entry point shared by the executable and the tests.
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

// ---- bench -----------------------------------------------------------------------------------------

struct BenchRow {
    double fraction           = 1.0;
    std::size_t active_count  = 0;
    double pairs_per_iter     = 0;
    double wall_ms_per_iter   = 0;
    std::uint64_t reconcile_pairs = 0;
    double reconcile_ms       = 0;
};

struct BenchConfig {
    std::vector<double> fractions = {1.0, 0.5, 0.25, 0.1};
    int iterations   = 50; // timed training iterations per fraction
    int warmup       = 5;
    std::uint64_t seed = 0;
    double lambda_ssim = kDefaultLambdaSsim;
    Vec3<float> background = Vec3<float>::Zero();
};

/// Training-iteration cost (cached render, loss, backward, Adam) with a forced random active subset of
/// each size. Caches for the frozen part are built first and reported separately.
std::vector<BenchRow> bench_sparsity(const GaussianCloud<float> &cloud, std::span<const Camera> cameras,
                                     std::span<const Image<float>> images, const BenchConfig &config);

// ---- compare ---------------------------------------------------------------------------------------

/// Mean absolute per-channel difference.
double mean_abs_delta(const Image<float> &a, const Image<float> &b);

/// Camera path through the key cameras: centers interpolated linearly, rotations by slerp.
std::vector<Camera> interpolate_path(std::span<const Camera> keys, int frames_per_segment);

struct SwapFrame {
    int frame           = 0;
    double angle        = 0;
    double delta_sorted = 0; // change from the previous frame
    double delta_oit    = 0;
};

struct SwapDemo {
    std::vector<SwapFrame> frames;
    int swap_frame = -1; // first frame rendered after the two splats trade depth order
    double ratio   = 0;  // delta_sorted / delta_oit at the swap frame
};

/// Two overlapping splats that trade depth order halfway along a short orbit.
GaussianCloud<float> two_splat_scene();
SwapDemo depth_swap_demo(int frames = 40, int resolution = 64);

} // namespace soit::cli

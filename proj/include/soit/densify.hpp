// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/backward.hpp>

#include <random>

namespace soit {

struct DensifyConfig {
    int from_iteration  = 500;
    int until_iteration = 15000; // exclusive
    int interval        = 100;
    double grad_threshold = 2e-4; // mean screen-space gradient norm, normalized device units
    double prune_opacity  = 0.005;
    double probability    = 0.5; // Bernoulli gate on each candidate
    double percent_dense  = 0.01; // clone below this fraction of the scene extent, split above

    void validate() const;
    bool due(int iteration) const {
        return iteration >= from_iteration && iteration < until_iteration && interval > 0 &&
               iteration % interval == 0;
    }
};

/// Running mean of the screen-space positional gradient over the views where each Gaussian was visible.
struct DensifyStats {
    std::vector<double> grad_sum;
    std::vector<std::int32_t> count;

    void reset(std::size_t n);
    void add(const GradientBuffer<float> &grads);
    double mean(std::size_t i) const { return count[i] > 0 ? grad_sum[i] / count[i] : 0.0; }
};

struct DensifyResult {
    /// New index k was copied from old index source[k].
    std::vector<std::size_t> source;
    /// Set for Gaussians created by this call (their optimizer state starts fresh).
    std::vector<std::uint8_t> fresh;
    std::size_t cloned = 0, split = 0, pruned = 0;
};

/// Clone/split high-gradient Gaussians (each candidate kept with probability p), then prune those whose
/// opacity is below the floor. Split children sample their centers from the parent Gaussian and shrink
/// its scale by 1.6.
DensifyResult densify_and_prune(GaussianCloud<float> &cloud, const DensifyStats &stats, const DensifyConfig &config,
                                double scene_extent, std::mt19937_64 &rng);

} // namespace soit

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/backward.hpp>

namespace soit {

/// Per-attribute learning rates. Position decays exponentially and is scaled by the scene extent.
struct LearningRates {
    double position_init   = 1.6e-4;
    double position_final  = 1.6e-6;
    int position_max_steps = 30000;
    double spatial_scale   = 1.0;
    double color_dc        = 2.5e-3;
    double color_rest      = 2.5e-3 / 20.0;
    double scale           = 5e-3;
    double rotation        = 1e-3;
    double opacity         = 0.01;
    double log_sigma       = 0.1;
    double weight          = 0.005;

    /// Log-linear interpolation from position_init to position_final over position_max_steps.
    double position_at(int iteration) const;
    /// Throws InvalidParameter if any rate is not positive.
    void validate() const;
};

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps   = 1e-15;
};

template <typename T> struct AdamState {
    GaussianParams<T> m;
    GaussianParams<T> v;
    /// Adam steps taken per Gaussian; frozen Gaussians do not advance.
    std::vector<std::int64_t> steps;
    std::int64_t sigma_steps = 0;

    void reset(std::size_t n);
    std::size_t size() const { return steps.size(); }
    /// Entry k takes source[k]; entries with fresh[k] set start from zero moments.
    void remap(std::span<const std::size_t> source, std::span<const std::uint8_t> fresh);
};

/// One Adam step with bias correction on every active Gaussian, and on log sigma when `update_sigma`.
/// Quaternions are renormalized when they change. Inactive Gaussians and their moments are untouched.
template <typename T>
void adam_step(GaussianCloud<T> &cloud, const GradientBuffer<T> &grads, AdamState<T> &state, const ActiveMask &active,
               const LearningRates &lr, int iteration, bool update_sigma, const AdamHyper &hyper = {});

} // namespace soit

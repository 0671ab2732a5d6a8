// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/rasterizer.hpp>

#include <array>

namespace soit {

/// Per-Gaussian gradient accumulators with the same layout as the cloud, plus d/d(log sigma).
template <typename T> struct GradientBuffer : GaussianParams<T> {
    /// |dL/d mu'| in normalized device units, for densification statistics.
    std::vector<T> screen_grad;
    std::vector<std::uint8_t> visible;

    GradientBuffer() = default;
    explicit GradientBuffer(std::size_t n) { reset(n); }

    void reset(std::size_t n) {
        this->resize(n);
        this->set_zero();
        screen_grad.assign(n, T(0));
        visible.assign(n, 0);
    }

    /// L2 norm of each attribute group's gradient for Gaussian i.
    std::array<T, kNumAttrs> attribute_norms(std::size_t i) const;

    /// Throws InvalidParameter on any non-finite entry.
    void check_finite() const;
};

struct BackwardOptions {
    /// Splat processing order; empty means ascending index. Only affects float summation order.
    std::span<const std::uint32_t> order;
};

/// Accumulates (+=) dL/dparams into `grads` for every active Gaussian given the retained accumulators of
/// the matching forward pass and the loss gradient image dL/dC.
template <typename T>
void backward_oit(const GaussianCloud<T> &cloud, const Camera &cam, const AccumGrid<T> &acc, const Image<T> &dl_dc,
                  const Vec3<T> &background, const ActiveMask &active, GradientBuffer<T> &grads,
                  const BackwardOptions &opts = {});

template <typename T>
GradientBuffer<T> backward_oit(const GaussianCloud<T> &cloud, const Camera &cam, const AccumGrid<T> &acc,
                               const Image<T> &dl_dc, const Vec3<T> &background, const ActiveMask &active,
                               const BackwardOptions &opts = {}) {
    GradientBuffer<T> grads(cloud.size());
    backward_oit(cloud, cam, acc, dl_dc, background, active, grads, opts);
    return grads;
}

} // namespace soit

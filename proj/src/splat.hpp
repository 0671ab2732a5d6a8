// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
// Per-view splat setup shared by the forward and backward passes.
#pragma once

#include <soit/rasterizer.hpp>

#include <cstdint>

namespace soit::detail {

enum SplatFlags : std::uint32_t {
    kColorClampR = 1u << 0,
    kColorClampG = 1u << 1,
    kColorClampB = 1u << 2,
    kRampZero    = 1u << 3,
};

template <typename T> struct SplatPrep {
    std::uint32_t id = 0;
    T mx = 0, my = 0;
    T conic_a = 0, conic_b = 0, conic_c = 0; // inverse 2D covariance [[a, b], [b, c]]
    T opacity = 0;
    T weight  = 0;
    T depth   = 0;
    Vec3<T> color = Vec3<T>::Zero();
    int x_min = 0, x_max = -1, y_min = 0, y_max = -1;
    std::uint32_t flags = 0;
};

/// Returns false when the Gaussian is not visible in `cam`.
template <typename T>
bool prepare_splat(const GaussianCloud<T> &cloud, std::size_t i, const Camera &cam, SplatPrep<T> &out) {
    const ProjectedGaussian<T> p = project_one(cloud, i, cam);
    if (!p.visible)
        return false;
    out.id    = static_cast<std::uint32_t>(i);
    out.mx    = p.mu2d.x();
    out.my    = p.mu2d.y();
    out.depth = p.depth;
    const T det = p.cov2d(0, 0) * p.cov2d(1, 1) - p.cov2d(0, 1) * p.cov2d(0, 1);
    if (!(det > T(0)))
        return false;
    out.conic_a = p.cov2d(1, 1) / det;
    out.conic_b = -p.cov2d(0, 1) / det;
    out.conic_c = p.cov2d(0, 0) / det;
    out.opacity = cloud.opacity(i);
    out.x_min   = p.x_min;
    out.x_max   = p.x_max;
    out.y_min   = p.y_min;
    out.y_max   = p.y_max;
    out.flags   = 0;

    const Vec3<T> view = cloud.position(i) - cam.focal_point().cast<T>();
    const Vec3<T> dir  = view / view.norm();
    const auto basis   = sh_basis(dir);
    const T *h         = cloud.sh_color.data() + i * kColorWidth;
    const T *v         = cloud.weight_sh.data() + i * kShCoeffs;
    Vec3<T> raw        = Vec3<T>::Constant(T(0.5));
    T wz               = T(0);
    for (int j = 0; j < kShCoeffs; ++j) {
        raw[0] += h[3 * j] * basis[j];
        raw[1] += h[3 * j + 1] * basis[j];
        raw[2] += h[3 * j + 2] * basis[j];
        wz += v[j] * basis[j];
    }
    for (int c = 0; c < 3; ++c) {
        if (raw[c] < T(0)) {
            out.flags |= (1u << c);
            raw[c] = T(0);
        }
    }
    out.color    = raw;
    const T ramp = T(1) - out.depth / cloud.sigma();
    if (ramp <= T(0)) {
        out.flags |= kRampZero;
        out.weight = T(0);
    } else {
        out.weight = ramp * softplus(wz);
    }
    return true;
}

/// Exponent -1/2 d^T Sigma'^-1 d at pixel (x, y).
template <typename T> inline T splat_power(const SplatPrep<T> &s, int x, int y, T &dx, T &dy) {
    dx = (T(x) + T(0.5)) - s.mx;
    dy = (T(y) + T(0.5)) - s.my;
    return T(-0.5) * (s.conic_a * dx * dx + s.conic_c * dy * dy) - s.conic_b * dx * dy;
}

enum class AlphaState : std::uint8_t { Skipped = 0, Live = 1, Clamped = 2 };

/// alpha = o exp(power), skipped below 1/255, clamped at 0.99.
template <typename T> inline AlphaState splat_alpha(const SplatPrep<T> &s, T power, T &alpha, T &gauss) {
    gauss = std::exp(power);
    alpha = s.opacity * gauss;
    if (alpha < T(kMinAlpha))
        return AlphaState::Skipped;
    if (alpha > T(kMaxAlpha)) {
        alpha = T(kMaxAlpha);
        return AlphaState::Clamped;
    }
    return AlphaState::Live;
}

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t pair_digest(std::uint32_t id, std::uint32_t pixel, AlphaState state) {
    return mix64((static_cast<std::uint64_t>(id) << 34) ^ (static_cast<std::uint64_t>(pixel) << 2) ^
                 static_cast<std::uint64_t>(state));
}

} // namespace soit::detail

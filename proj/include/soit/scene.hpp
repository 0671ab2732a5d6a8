// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/common.hpp>

#include <array>
#include <cmath>
#include <span>
#include <string_view>

namespace soit {

inline constexpr int kShCoeffs   = 16; // degree 3
inline constexpr int kColorWidth = kShCoeffs * 3;
inline constexpr double kShC0    = 0.28209479177387814;

/// Per-Gaussian attribute groups. Activeness is decided per group.
enum class Attr : int { Position = 0, Rotation, Scale, Opacity, Color, Weight };
inline constexpr int kNumAttrs = 6;
inline constexpr std::array<Attr, kNumAttrs> kAllAttrs = {Attr::Position, Attr::Rotation, Attr::Scale,
                                                          Attr::Opacity,  Attr::Color,    Attr::Weight};

constexpr int attr_width(Attr a) {
    switch (a) {
    case Attr::Position: return 3;
    case Attr::Rotation: return 4;
    case Attr::Scale: return 3;
    case Attr::Opacity: return 1;
    case Attr::Color: return kColorWidth;
    case Attr::Weight: return kShCoeffs;
    }
    return 0;
}

constexpr std::string_view attr_name(Attr a) {
    switch (a) {
    case Attr::Position: return "position";
    case Attr::Rotation: return "rotation";
    case Attr::Scale: return "scale";
    case Attr::Opacity: return "opacity";
    case Attr::Color: return "color_sh";
    case Attr::Weight: return "weight_sh";
    }
    return "?";
}

/// Structure-of-arrays storage shared by the scene and its gradient/moment buffers.
///
/// Layout per Gaussian i: mu[3i..], quat[4i..] as (w,x,y,z), log_scale[3i..],
/// opacity_logit[i], sh_color[48i + 3*coeff + channel], weight_sh[16i + coeff].
template <typename T> struct GaussianParams {
    std::vector<T> mu;
    std::vector<T> quat;
    std::vector<T> log_scale;
    std::vector<T> opacity_logit;
    std::vector<T> sh_color;
    std::vector<T> weight_sh;
    T log_sigma = T(0);

    std::size_t size() const { return opacity_logit.size(); }

    std::span<T> field(Attr a);
    std::span<const T> field(Attr a) const;

    std::span<T> of(Attr a, std::size_t i) { return field(a).subspan(i * attr_width(a), attr_width(a)); }
    std::span<const T> of(Attr a, std::size_t i) const {
        return field(a).subspan(i * attr_width(a), attr_width(a));
    }

    void resize(std::size_t n);
    void set_zero();
    /// Builds a new buffer where entry k copies entry source[k] of this one.
    GaussianParams gather(std::span<const std::size_t> source) const;
};

template <typename T> struct GaussianCloud : GaussianParams<T> {
    GaussianCloud() = default;
    explicit GaussianCloud(std::size_t n) { this->resize(n); }

    T sigma() const { return std::exp(this->log_sigma); }

    Vec3<T> position(std::size_t i) const { return {this->mu[3 * i], this->mu[3 * i + 1], this->mu[3 * i + 2]}; }
    Vec4<T> rotation(std::size_t i) const {
        return {this->quat[4 * i], this->quat[4 * i + 1], this->quat[4 * i + 2], this->quat[4 * i + 3]};
    }
    Vec3<T> scale(std::size_t i) const {
        return {std::exp(this->log_scale[3 * i]), std::exp(this->log_scale[3 * i + 1]),
                std::exp(this->log_scale[3 * i + 2])};
    }
    T opacity(std::size_t i) const;

    /// Throws InvalidParameter on a NaN/Inf anywhere or mismatched array lengths.
    void validate() const;

    template <typename U> GaussianCloud<U> cast() const {
        GaussianCloud<U> out;
        auto conv = [](const std::vector<T> &src) { return std::vector<U>(src.begin(), src.end()); };
        out.mu            = conv(this->mu);
        out.quat          = conv(this->quat);
        out.log_scale     = conv(this->log_scale);
        out.opacity_logit = conv(this->opacity_logit);
        out.sh_color      = conv(this->sh_color);
        out.weight_sh     = conv(this->weight_sh);
        out.log_sigma     = static_cast<U>(this->log_sigma);
        return out;
    }
};

template <typename T> T sigmoid(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}
template <typename T> T softplus(T x) { return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x))); }
template <typename T> T inverse_softplus(T y) { return y + std::log(-std::expm1(-y)); }
template <typename T> T logit(T p) { return std::log(p / (T(1) - p)); }

/// Rotation matrix of a unit quaternion (w,x,y,z).
template <typename T> Mat3<T> quat_to_rotation(const Vec4<T> &q);

/// Sigma = R S S^T R^T. Requires |q| = 1 within 1e-5 and scale > 0.
template <typename T> Mat3<T> covariance3d(const Vec4<T> &quat, const Vec3<T> &scale);

/// Real SH basis (degree 3) evaluated on a direction; sign/order follow the usual 3DGS tables.
template <typename T> std::array<T, kShCoeffs> sh_basis(const Vec3<T> &dir);

/// Gradient of every basis polynomial with respect to the (unnormalized) direction components.
template <typename T> std::array<Vec3<T>, kShCoeffs> sh_basis_gradient(const Vec3<T> &dir);

/// out[k] = sum_j coeffs[j*channels + k] * Y_j(dir). No offset, no clamp.
template <typename T> void eval_sh(std::span<const T> coeffs, int channels, const Vec3<T> &dir, std::span<T> out);

/// Color convention: max(0, sh + 0.5) per channel.
template <typename T> Vec3<T> eval_sh_color(std::span<const T> coeffs, const Vec3<T> &dir);

/// Depth/view weight: max(0, 1 - d/sigma) * softplus(v(dir)).
template <typename T> T oit_weight(T depth, const Vec3<T> &dir, T sigma, std::span<const T> weight_sh);

} // namespace soit

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/scene.hpp>

#include <string>

namespace soit {

template <typename T> std::span<T> GaussianParams<T>::field(Attr a) {
    switch (a) {
    case Attr::Position: return mu;
    case Attr::Rotation: return quat;
    case Attr::Scale: return log_scale;
    case Attr::Opacity: return opacity_logit;
    case Attr::Color: return sh_color;
    case Attr::Weight: return weight_sh;
    }
    return {};
}

template <typename T> std::span<const T> GaussianParams<T>::field(Attr a) const {
    return const_cast<GaussianParams *>(this)->field(a);
}

template <typename T> void GaussianParams<T>::resize(std::size_t n) {
    for (Attr a : kAllAttrs) {
        auto &vec = a == Attr::Position  ? mu
                    : a == Attr::Rotation ? quat
                    : a == Attr::Scale    ? log_scale
                    : a == Attr::Opacity  ? opacity_logit
                    : a == Attr::Color    ? sh_color
                                          : weight_sh;
        vec.resize(n * attr_width(a), T(0));
    }
}

template <typename T> void GaussianParams<T>::set_zero() {
    for (Attr a : kAllAttrs) {
        auto f = field(a);
        std::fill(f.begin(), f.end(), T(0));
    }
    log_sigma = T(0);
}

template <typename T> GaussianParams<T> GaussianParams<T>::gather(std::span<const std::size_t> source) const {
    GaussianParams out;
    out.resize(source.size());
    for (Attr a : kAllAttrs) {
        const int width = attr_width(a);
        auto dst        = out.field(a);
        auto src        = field(a);
        for (std::size_t k = 0; k < source.size(); ++k)
            std::copy_n(src.begin() + source[k] * width, width, dst.begin() + k * width);
    }
    out.log_sigma = log_sigma;
    return out;
}

template <typename T> T GaussianCloud<T>::opacity(std::size_t i) const { return sigmoid(this->opacity_logit[i]); }

template <typename T> void GaussianCloud<T>::validate() const {
    const std::size_t n = this->size();
    for (Attr a : kAllAttrs) {
        auto f = this->field(a);
        if (f.size() != n * static_cast<std::size_t>(attr_width(a)))
            throw InvalidParameter("GaussianCloud: field '" + std::string(attr_name(a)) + "' has length " +
                                   std::to_string(f.size()) + ", expected " +
                                   std::to_string(n * attr_width(a)));
        for (std::size_t k = 0; k < f.size(); ++k)
            if (!std::isfinite(f[k]))
                throw InvalidParameter("GaussianCloud: non-finite value in '" + std::string(attr_name(a)) +
                                       "' of Gaussian " + std::to_string(k / attr_width(a)));
    }
    if (!std::isfinite(this->log_sigma))
        throw InvalidParameter("GaussianCloud: non-finite log_sigma");
}

template <typename T> Mat3<T> quat_to_rotation(const Vec4<T> &q) {
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3<T> r;
    r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y), //
        T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),  //
        T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
    return r;
}

template <typename T> Mat3<T> covariance3d(const Vec4<T> &quat, const Vec3<T> &scale) {
    if (!quat.allFinite() || !scale.allFinite())
        throw InvalidParameter("covariance3d: non-finite quaternion or scale");
    if (std::abs(quat.norm() - T(1)) > T(1e-5))
        throw InvalidParameter("covariance3d: quaternion is not unit length");
    if ((scale.array() <= T(0)).any())
        throw InvalidParameter("covariance3d: scale must be positive");
    const Mat3<T> m     = quat_to_rotation(quat) * scale.asDiagonal();
    const Mat3<T> sigma = m * m.transpose();
    return T(0.5) * (sigma + sigma.transpose());
}

namespace {
constexpr double kC1    = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                           0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                           -0.4570457994644658, 1.445305721320277, -0.5900435899266435};

template <typename T> void check_unit(const Vec3<T> &dir, const char *who) {
    if (!dir.allFinite())
        throw InvalidParameter(std::string(who) + ": non-finite direction");
    if (std::abs(dir.norm() - T(1)) > T(1e-5))
        throw InvalidParameter(std::string(who) + ": direction is not unit length");
}
} // namespace

template <typename T> std::array<T, kShCoeffs> sh_basis(const Vec3<T> &dir) {
    const T x = dir[0], y = dir[1], z = dir[2];
    const T xx = x * x, yy = y * y, zz = z * z;
    std::array<T, kShCoeffs> b;
    b[0]  = T(kShC0);
    b[1]  = T(-kC1) * y;
    b[2]  = T(kC1) * z;
    b[3]  = T(-kC1) * x;
    b[4]  = T(kC2[0]) * x * y;
    b[5]  = T(kC2[1]) * y * z;
    b[6]  = T(kC2[2]) * (T(2) * zz - xx - yy);
    b[7]  = T(kC2[3]) * x * z;
    b[8]  = T(kC2[4]) * (xx - yy);
    b[9]  = T(kC3[0]) * y * (T(3) * xx - yy);
    b[10] = T(kC3[1]) * x * y * z;
    b[11] = T(kC3[2]) * y * (T(4) * zz - xx - yy);
    b[12] = T(kC3[3]) * z * (T(2) * zz - T(3) * xx - T(3) * yy);
    b[13] = T(kC3[4]) * x * (T(4) * zz - xx - yy);
    b[14] = T(kC3[5]) * z * (xx - yy);
    b[15] = T(kC3[6]) * x * (xx - T(3) * yy);
    return b;
}

template <typename T> std::array<Vec3<T>, kShCoeffs> sh_basis_gradient(const Vec3<T> &dir) {
    const T x = dir[0], y = dir[1], z = dir[2];
    const T xx = x * x, yy = y * y, zz = z * z;
    std::array<Vec3<T>, kShCoeffs> g;
    g[0]  = Vec3<T>::Zero();
    g[1]  = {T(0), T(-kC1), T(0)};
    g[2]  = {T(0), T(0), T(kC1)};
    g[3]  = {T(-kC1), T(0), T(0)};
    g[4]  = T(kC2[0]) * Vec3<T>(y, x, T(0));
    g[5]  = T(kC2[1]) * Vec3<T>(T(0), z, y);
    g[6]  = T(kC2[2]) * Vec3<T>(T(-2) * x, T(-2) * y, T(4) * z);
    g[7]  = T(kC2[3]) * Vec3<T>(z, T(0), x);
    g[8]  = T(kC2[4]) * Vec3<T>(T(2) * x, T(-2) * y, T(0));
    g[9]  = T(kC3[0]) * Vec3<T>(T(6) * x * y, T(3) * xx - T(3) * yy, T(0));
    g[10] = T(kC3[1]) * Vec3<T>(y * z, x * z, x * y);
    g[11] = T(kC3[2]) * Vec3<T>(T(-2) * x * y, T(4) * zz - xx - T(3) * yy, T(8) * y * z);
    g[12] = T(kC3[3]) * Vec3<T>(T(-6) * x * z, T(-6) * y * z, T(6) * zz - T(3) * xx - T(3) * yy);
    g[13] = T(kC3[4]) * Vec3<T>(T(4) * zz - T(3) * xx - yy, T(-2) * x * y, T(8) * x * z);
    g[14] = T(kC3[5]) * Vec3<T>(T(2) * x * z, T(-2) * y * z, xx - yy);
    g[15] = T(kC3[6]) * Vec3<T>(T(3) * xx - T(3) * yy, T(-6) * x * y, T(0));
    return g;
}

template <typename T> void eval_sh(std::span<const T> coeffs, int channels, const Vec3<T> &dir, std::span<T> out) {
    check_unit(dir, "eval_sh");
    if (channels <= 0 || coeffs.size() != static_cast<std::size_t>(kShCoeffs * channels) ||
        out.size() != static_cast<std::size_t>(channels))
        throw InvalidParameter("eval_sh: coefficient/output size mismatch");
    const auto basis = sh_basis(dir);
    for (int k = 0; k < channels; ++k) {
        T acc = T(0);
        for (int j = 0; j < kShCoeffs; ++j)
            acc += coeffs[j * channels + k] * basis[j];
        if (!std::isfinite(acc))
            throw InvalidParameter("eval_sh: non-finite result");
        out[k] = acc;
    }
}

template <typename T> Vec3<T> eval_sh_color(std::span<const T> coeffs, const Vec3<T> &dir) {
    Vec3<T> raw;
    eval_sh<T>(coeffs, 3, dir, std::span<T>(raw.data(), 3));
    return (raw.array() + T(0.5)).cwiseMax(T(0));
}

template <typename T> T oit_weight(T depth, const Vec3<T> &dir, T sigma, std::span<const T> weight_sh) {
    if (!(depth > T(0)) || !(sigma > T(0)))
        throw InvalidParameter("oit_weight: depth and sigma must be positive");
    const T ramp = T(1) - depth / sigma;
    if (ramp <= T(0))
        return T(0);
    T v;
    eval_sh<T>(weight_sh, 1, dir, std::span<T>(&v, 1));
    return ramp * softplus(v);
}

#define SOIT_INSTANTIATE(T)                                                                                       \
    template struct GaussianParams<T>;                                                                            \
    template struct GaussianCloud<T>;                                                                             \
    template Mat3<T> quat_to_rotation<T>(const Vec4<T> &);                                                        \
    template Mat3<T> covariance3d<T>(const Vec4<T> &, const Vec3<T> &);                                           \
    template std::array<T, kShCoeffs> sh_basis<T>(const Vec3<T> &);                                               \
    template std::array<Vec3<T>, kShCoeffs> sh_basis_gradient<T>(const Vec3<T> &);                                \
    template void eval_sh<T>(std::span<const T>, int, const Vec3<T> &, std::span<T>);                             \
    template Vec3<T> eval_sh_color<T>(std::span<const T>, const Vec3<T> &);                                       \
    template T oit_weight<T>(T, const Vec3<T> &, T, std::span<const T>);

SOIT_INSTANTIATE(float)
SOIT_INSTANTIATE(double)

} // namespace soit

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/backward.hpp>

#include "splat.hpp"

#include <numeric>
#include <string>

namespace soit {

namespace {

using detail::AlphaState;
using detail::SplatPrep;

/// Read-only per-pixel terms of the OIT derivative.
template <typename T> struct PixelTerms {
    T g[3];
    T k_trans; // T * g.(F - c0)
    T k_norm;  // (1 - T) / Q
    T g_dot_f;
    bool live;
};

/// Gradients with respect to the splat's screen-space quantities, summed over its pixels.
template <typename T> struct SplatGrads {
    T color[3] = {T(0), T(0), T(0)};
    T weight   = T(0);
    T opacity  = T(0);
    T mx = T(0), my = T(0);
    T conic_a = T(0), conic_b = T(0), conic_c = T(0);
};

template <typename T>
SplatGrads<T> splat_pixels_backward(const SplatPrep<T> &s, const std::vector<PixelTerms<T>> &terms, int width) {
    SplatGrads<T> g;
    for (int y = s.y_min; y <= s.y_max; ++y) {
        for (int x = s.x_min; x <= s.x_max; ++x) {
            const auto &px = terms[static_cast<std::size_t>(y) * width + x];
            if (!px.live)
                continue;
            T dx, dy, alpha, gauss;
            const T power          = detail::splat_power(s, x, y, dx, dy);
            const AlphaState state = detail::splat_alpha(s, power, alpha, gauss);
            if (state == AlphaState::Skipped)
                continue;
            const T g_dot_c = px.g[0] * s.color[0] + px.g[1] * s.color[1] + px.g[2] * s.color[2];
            const T diff    = g_dot_c - px.g_dot_f;
            const T aw_norm = px.k_norm * alpha * s.weight;
            g.color[0] += px.g[0] * aw_norm;
            g.color[1] += px.g[1] * aw_norm;
            g.color[2] += px.g[2] * aw_norm;
            g.weight += px.k_norm * alpha * diff;
            if (state == AlphaState::Clamped)
                continue;
            const T dl_dalpha = px.k_trans / (T(1) - alpha) + px.k_norm * s.weight * diff;
            g.opacity += dl_dalpha * gauss;
            const T dl_dpower = dl_dalpha * alpha;
            g.mx += dl_dpower * (s.conic_a * dx + s.conic_b * dy);
            g.my += dl_dpower * (s.conic_b * dx + s.conic_c * dy);
            g.conic_a += dl_dpower * T(-0.5) * dx * dx;
            g.conic_b += dl_dpower * -dx * dy;
            g.conic_c += dl_dpower * T(-0.5) * dy * dy;
        }
    }
    return g;
}

/// dR/dq_k for a unit quaternion (w, x, y, z), contracted with dL/dR.
template <typename T> Vec4<T> rotation_backward(const Vec4<T> &q, const Mat3<T> &g) {
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3<T> dw, dx, dy, dz;
    dw << T(0), -2 * z, 2 * y, 2 * z, T(0), -2 * x, -2 * y, 2 * x, T(0);
    dx << T(0), 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
    dy << -4 * y, 2 * x, 2 * w, 2 * x, T(0), 2 * z, -2 * w, 2 * z, -4 * y;
    dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, T(0);
    return {g.cwiseProduct(dw).sum(), g.cwiseProduct(dx).sum(), g.cwiseProduct(dy).sum(), g.cwiseProduct(dz).sum()};
}

/// Chains screen-space gradients back to the Gaussian's parameters. Returns d/d(log sigma).
template <typename T>
T splat_params_backward(const GaussianCloud<T> &cloud, std::size_t i, const Camera &cam, const SplatPrep<T> &prep,
                        const SplatGrads<T> &sg, GradientBuffer<T> &out) {
    const Mat3<T> rw  = cam.rotation().cast<T>();
    const Vec3<T> mu  = cloud.position(i);
    const Vec3<T> t   = rw * mu + cam.translation().cast<T>();
    const T fx        = T(cam.fx), fy = T(cam.fy);
    const T iz        = T(1) / t.z();
    const T iz2       = iz * iz;
    Mat23<T> j;
    j << fx * iz, T(0), -fx * t.x() * iz2, T(0), fy * iz, -fy * t.y() * iz2;

    const Vec4<T> q_raw = cloud.rotation(i);
    const T q_norm      = q_raw.norm();
    const Vec4<T> q     = q_raw / q_norm;
    const Mat3<T> r     = quat_to_rotation(q);
    const Vec3<T> s     = cloud.scale(i);
    const Mat3<T> m     = r * s.asDiagonal();
    const Mat3<T> sigma = m * m.transpose();
    const Mat3<T> sc    = rw * sigma * rw.transpose();
    Mat2<T> cov         = j * sc * j.transpose();
    cov(0, 1) = cov(1, 0) = T(0.5) * (cov(0, 1) + cov(1, 0));
    cov(0, 0) += T(kLowPassDilation);
    cov(1, 1) += T(kLowPassDilation);

    // conic -> 2D covariance
    const T a = cov(0, 0), b = cov(0, 1), c = cov(1, 1);
    const T det      = a * c - b * b;
    const T inv_det2 = T(1) / (det * det);
    const T g_a = (-c * c * sg.conic_a + b * c * sg.conic_b - b * b * sg.conic_c) * inv_det2;
    const T g_b = (T(2) * b * c * sg.conic_a - (det + T(2) * b * b) * sg.conic_b + T(2) * a * b * sg.conic_c) * inv_det2;
    const T g_c = (-b * b * sg.conic_a + a * b * sg.conic_b - a * a * sg.conic_c) * inv_det2;
    Mat2<T> g_cov;
    g_cov << g_a, T(0.5) * g_b, T(0.5) * g_b, g_c;

    // 2D covariance -> camera-frame covariance and Jacobian
    const Mat3<T> g_sc    = j.transpose() * g_cov * j;
    const Mat23<T> g_j    = T(2) * g_cov * j * sc;
    const Mat3<T> g_sigma = rw.transpose() * g_sc * rw;

    // Sigma = M M^T, M = R diag(s)
    const Mat3<T> g_m = T(2) * g_sigma * m;
    Mat3<T> g_r       = g_m;
    Vec3<T> g_s;
    for (int col = 0; col < 3; ++col) {
        g_r.col(col) *= s[col];
        g_s[col] = g_m.col(col).dot(r.col(col));
    }
    const Vec4<T> g_qn = rotation_backward(q, g_r);
    const Vec4<T> g_q  = (g_qn - q * q.dot(g_qn)) / q_norm;

    // appearance terms
    const Vec3<T> view = mu - cam.focal_point().cast<T>();
    const T view_len   = view.norm();
    const Vec3<T> dir  = view / view_len;
    const auto basis   = sh_basis(dir);
    const auto dbasis  = sh_basis_gradient(dir);
    Vec3<T> g_dir      = Vec3<T>::Zero();

    T *g_h       = out.sh_color.data() + i * kColorWidth;
    const T *h   = cloud.sh_color.data() + i * kColorWidth;
    for (int ch = 0; ch < 3; ++ch) {
        if (prep.flags & (1u << ch))
            continue;
        const T gc = sg.color[ch];
        for (int k = 0; k < kShCoeffs; ++k) {
            g_h[3 * k + ch] += gc * basis[k];
            g_dir += (gc * h[3 * k + ch]) * dbasis[k];
        }
    }

    T g_depth     = T(0);
    T g_log_sigma = T(0);
    if (!(prep.flags & detail::kRampZero)) {
        const T *v     = cloud.weight_sh.data() + i * kShCoeffs;
        T *g_v         = out.weight_sh.data() + i * kShCoeffs;
        T z            = T(0);
        for (int k = 0; k < kShCoeffs; ++k)
            z += v[k] * basis[k];
        const T sig    = cloud.sigma();
        const T ramp   = T(1) - t.z() / sig;
        const T sp     = softplus(z);
        const T g_z    = sg.weight * ramp * sigmoid(z);
        for (int k = 0; k < kShCoeffs; ++k) {
            g_v[k] += g_z * basis[k];
            g_dir += (g_z * v[k]) * dbasis[k];
        }
        g_depth     = -sg.weight * sp / sig;
        g_log_sigma = sg.weight * sp * t.z() / sig; // (d/sigma^2) * sigma
    }

    // camera-frame position
    Vec3<T> g_t = Vec3<T>::Zero();
    g_t.x() += sg.mx * fx * iz;
    g_t.y() += sg.my * fy * iz;
    g_t.z() += -sg.mx * fx * t.x() * iz2 - sg.my * fy * t.y() * iz2;
    g_t.x() += g_j(0, 2) * (-fx * iz2);
    g_t.y() += g_j(1, 2) * (-fy * iz2);
    g_t.z() += g_j(0, 0) * (-fx * iz2) + g_j(0, 2) * (T(2) * fx * t.x() * iz2 * iz) + g_j(1, 1) * (-fy * iz2) +
               g_j(1, 2) * (T(2) * fy * t.y() * iz2 * iz);
    g_t.z() += g_depth;

    const Vec3<T> g_mu = rw.transpose() * g_t + (g_dir - dir * dir.dot(g_dir)) / view_len;

    for (int k = 0; k < 3; ++k) {
        out.mu[3 * i + k] += g_mu[k];
        out.log_scale[3 * i + k] += g_s[k] * s[k];
    }
    for (int k = 0; k < 4; ++k)
        out.quat[4 * i + k] += g_q[k];
    const T o = prep.opacity;
    out.opacity_logit[i] += sg.opacity * o * (T(1) - o);

    const T ndc_x = sg.mx * T(0.5) * T(cam.width);
    const T ndc_y = sg.my * T(0.5) * T(cam.height);
    out.screen_grad[i] += std::sqrt(ndc_x * ndc_x + ndc_y * ndc_y);
    out.visible[i] = 1;
    return g_log_sigma;
}

} // namespace

template <typename T> std::array<T, kNumAttrs> GradientBuffer<T>::attribute_norms(std::size_t i) const {
    std::array<T, kNumAttrs> norms{};
    for (Attr a : kAllAttrs) {
        T sq = T(0);
        for (T v : this->of(a, i))
            sq += v * v;
        norms[static_cast<int>(a)] = std::sqrt(sq);
    }
    return norms;
}

template <typename T> void GradientBuffer<T>::check_finite() const {
    for (Attr a : kAllAttrs)
        for (T v : this->field(a))
            if (!std::isfinite(v))
                throw InvalidParameter("gradient buffer: non-finite entry in '" + std::string(attr_name(a)) + "'");
    if (!std::isfinite(this->log_sigma))
        throw InvalidParameter("gradient buffer: non-finite log_sigma gradient");
}

template <typename T>
void backward_oit(const GaussianCloud<T> &cloud, const Camera &cam, const AccumGrid<T> &acc, const Image<T> &dl_dc,
                  const Vec3<T> &background, const ActiveMask &active, GradientBuffer<T> &grads,
                  const BackwardOptions &opts) {
    if (acc.px.empty() || !acc.matches(cam))
        throw ContractViolation("backward_oit: retained accumulators are missing or do not match the camera");
    if (dl_dc.width != cam.width || dl_dc.height != cam.height || dl_dc.channels != 3)
        throw ContractViolation("backward_oit: dL/dC image does not match the camera");
    if (active.size() != cloud.size())
        throw ContractViolation("backward_oit: active mask size does not match the cloud");
    if (grads.size() != cloud.size())
        grads.reset(cloud.size());

    std::vector<PixelTerms<T>> terms(acc.px.size());
    for (std::size_t p = 0; p < acc.px.size(); ++p) {
        const auto &a = acc.px[p];
        auto &pt      = terms[p];
        pt.live       = a.q > T(0);
        if (!pt.live)
            continue;
        const T inv_q = T(1) / std::max(a.q, T(kQFloor));
        T g_dot_fc0   = T(0);
        pt.g_dot_f    = T(0);
        for (int c = 0; c < 3; ++c) {
            pt.g[c]   = dl_dc.data[3 * p + c];
            const T f = a.p[c] * inv_q;
            pt.g_dot_f += pt.g[c] * f;
            g_dot_fc0 += pt.g[c] * (f - background[c]);
        }
        pt.k_trans = a.t * g_dot_fc0;
        pt.k_norm  = (T(1) - a.t) * inv_q;
    }

    std::vector<std::uint32_t> order;
    if (opts.order.empty()) {
        order.resize(cloud.size());
        std::iota(order.begin(), order.end(), 0u);
    } else {
        if (opts.order.size() != cloud.size())
            throw ContractViolation("backward_oit: processing order size does not match the cloud");
        order.assign(opts.order.begin(), opts.order.end());
    }
    std::erase_if(order, [&](std::uint32_t i) { return !active[i]; });

    // Per-splat ownership: each worker writes only its own Gaussians' slots. The shared sigma gradient
    // is reduced afterwards in processing order so the result never depends on the thread count.
    std::vector<T> sigma_parts(order.size(), T(0));
    const std::int64_t count = static_cast<std::int64_t>(order.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t k = 0; k < count; ++k) {
        const std::uint32_t i = order[k];
        SplatPrep<T> prep;
        if (!detail::prepare_splat(cloud, i, cam, prep))
            continue;
        const SplatGrads<T> sg = splat_pixels_backward(prep, terms, cam.width);
        sigma_parts[k]         = splat_params_backward(cloud, i, cam, prep, sg, grads);
    }
    for (T part : sigma_parts)
        grads.log_sigma += part;
}

#define SOIT_INSTANTIATE(T)                                                                                       \
    template struct GradientBuffer<T>;                                                                            \
    template void backward_oit<T>(const GaussianCloud<T> &, const Camera &, const AccumGrid<T> &, const Image<T> &, \
                                  const Vec3<T> &, const ActiveMask &, GradientBuffer<T> &, const BackwardOptions &);

SOIT_INSTANTIATE(float)
SOIT_INSTANTIATE(double)

} // namespace soit

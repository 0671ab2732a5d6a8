// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/adam.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace soit {

double LearningRates::position_at(int iteration) const {
    if (position_max_steps <= 0)
        return position_final * spatial_scale;
    const double t = std::clamp(static_cast<double>(iteration) / position_max_steps, 0.0, 1.0);
    return std::exp(std::log(position_init) * (1.0 - t) + std::log(position_final) * t) * spatial_scale;
}

void LearningRates::validate() const {
    const double all[] = {position_init, position_final, spatial_scale, color_dc, color_rest,
                          scale,         rotation,       opacity,       log_sigma, weight};
    for (double r : all)
        if (!(r > 0) || !std::isfinite(r))
            throw InvalidParameter("learning rates must be positive and finite");
}

template <typename T> void AdamState<T>::reset(std::size_t n) {
    m.resize(n);
    m.set_zero();
    v.resize(n);
    v.set_zero();
    steps.assign(n, 0);
    sigma_steps = 0;
}

template <typename T> void AdamState<T>::remap(std::span<const std::size_t> source, std::span<const std::uint8_t> fresh) {
    GaussianParams<T> nm = m.gather(source), nv = v.gather(source);
    std::vector<std::int64_t> ns(source.size());
    for (std::size_t k = 0; k < source.size(); ++k) {
        ns[k] = steps.at(source[k]);
        if (!fresh.empty() && fresh[k]) {
            ns[k] = 0;
            for (Attr a : kAllAttrs) {
                auto fm = nm.of(a, k), fv = nv.of(a, k);
                std::fill(fm.begin(), fm.end(), T(0));
                std::fill(fv.begin(), fv.end(), T(0));
            }
        }
    }
    m     = std::move(nm);
    v     = std::move(nv);
    steps = std::move(ns);
}

namespace {

template <typename T>
void adam_update(T &param, T grad, T &m, T &v, double lr, double bc1, double bc2, const AdamHyper &h) {
    m = static_cast<T>(h.beta1 * m + (1.0 - h.beta1) * grad);
    v = static_cast<T>(h.beta2 * v + (1.0 - h.beta2) * grad * grad);
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    param              = static_cast<T>(param - lr * m_hat / (std::sqrt(v_hat) + h.eps));
}

} // namespace

template <typename T>
void adam_step(GaussianCloud<T> &cloud, const GradientBuffer<T> &grads, AdamState<T> &state, const ActiveMask &active,
               const LearningRates &lr, int iteration, bool update_sigma, const AdamHyper &hyper) {
    const std::size_t n = cloud.size();
    if (grads.size() != n || state.size() != n || active.size() != n)
        throw ContractViolation("adam_step: cloud has " + std::to_string(n) + " Gaussians but gradients/state/mask have " +
                                std::to_string(grads.size()) + "/" + std::to_string(state.size()) + "/" +
                                std::to_string(active.size()));
    const double lr_pos = lr.position_at(iteration);
    auto rate           = [&](Attr a, int component) {
        switch (a) {
        case Attr::Position: return lr_pos;
        case Attr::Rotation: return lr.rotation;
        case Attr::Scale: return lr.scale;
        case Attr::Opacity: return lr.opacity;
        case Attr::Color: return component < 3 ? lr.color_dc : lr.color_rest;
        case Attr::Weight: return lr.weight;
        }
        return 0.0;
    };

    for (std::size_t i = 0; i < n; ++i) {
        if (!active[i])
            continue;
        const std::int64_t t = ++state.steps[i];
        const double bc1     = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
        const double bc2     = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
        auto q = cloud.of(Attr::Rotation, i);
        const T q_before[4] = {q[0], q[1], q[2], q[3]};
        for (Attr a : kAllAttrs) {
            auto p  = cloud.of(a, i);
            auto g  = grads.of(a, i);
            auto m  = state.m.of(a, i);
            auto v  = state.v.of(a, i);
            for (int c = 0; c < attr_width(a); ++c)
                adam_update(p[c], g[c], m[c], v[c], rate(a, c), bc1, bc2, hyper);
        }
        if (std::equal(q.begin(), q.end(), q_before))
            continue;
        const T norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
        if (norm > T(0))
            for (T &c : q)
                c /= norm;
    }
    if (update_sigma) {
        const std::int64_t t = ++state.sigma_steps;
        const double bc1     = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
        const double bc2     = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
        adam_update(cloud.log_sigma, grads.log_sigma, state.m.log_sigma, state.v.log_sigma, lr.log_sigma, bc1, bc2,
                    hyper);
    }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(GaussianCloud<float> &, const GradientBuffer<float> &, AdamState<float> &,
                               const ActiveMask &, const LearningRates &, int, bool, const AdamHyper &);
template void adam_step<double>(GaussianCloud<double> &, const GradientBuffer<double> &, AdamState<double> &,
                                const ActiveMask &, const LearningRates &, int, bool, const AdamHyper &);

} // namespace soit

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/gradcheck.hpp>

#include <cmath>
#include <numbers>
#include <random>

namespace soit {

std::vector<ParamRef> all_params(std::size_t n) {
    std::vector<ParamRef> refs;
    for (Attr a : kAllAttrs)
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < attr_width(a); ++c)
                refs.push_back({a, i, c, false});
    refs.push_back({Attr::Position, 0, 0, true});
    return refs;
}

FdEstimate finite_diff_oracle(const GaussianCloud<double> &cloud, const Camera &cam, const LossFn &loss,
                              const ParamRef &param, double step) {
    GaussianCloud<double> probe = cloud;
    double &slot                = param_at(probe, param);
    const double origin         = slot;
    auto sample = [&](double offset) {
        slot = origin + offset;
        return loss(probe, cam);
    };
    const LossSample center = sample(0.0);
    const LossSample plus   = sample(step);
    const LossSample minus  = sample(-step);

    FdEstimate est;
    if (plus.structure == center.structure && minus.structure == center.structure) {
        est.kind  = FdEstimate::Kind::Central;
        est.value = (plus.value - minus.value) / (2.0 * step);
        return est;
    }
    if (plus.structure == center.structure) {
        const LossSample plus2 = sample(2.0 * step);
        if (plus2.structure == center.structure) {
            est.kind  = FdEstimate::Kind::Forward;
            est.value = (-3.0 * center.value + 4.0 * plus.value - plus2.value) / (2.0 * step);
            return est;
        }
    }
    if (minus.structure == center.structure) {
        const LossSample minus2 = sample(-2.0 * step);
        if (minus2.structure == center.structure) {
            est.kind  = FdEstimate::Kind::Backward;
            est.value = (3.0 * center.value - 4.0 * minus.value + minus2.value) / (2.0 * step);
            return est;
        }
    }
    return est;
}

GradcheckScene random_gradcheck_scene(std::uint64_t seed, int n_gaussians, int size) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    GradcheckScene scene;
    scene.camera = Camera::look_at({0, 0, -3}, {0, 0, 0}, {0, -1, 0}, size, size, 2.0 * std::atan(0.5));
    scene.background = {unit(rng), unit(rng), unit(rng)};

    auto &cloud = scene.cloud;
    cloud.resize(n_gaussians);
    for (int i = 0; i < n_gaussians; ++i) {
        cloud.mu[3 * i]     = uniform(-0.9, 0.9);
        cloud.mu[3 * i + 1] = uniform(-0.9, 0.9);
        cloud.mu[3 * i + 2] = uniform(-0.6, 0.6);
        Vec4<double> q(normal(rng), normal(rng), normal(rng), normal(rng));
        q.normalize();
        for (int k = 0; k < 4; ++k)
            cloud.quat[4 * i + k] = q[k];
        for (int k = 0; k < 3; ++k)
            cloud.log_scale[3 * i + k] = std::log(uniform(0.12, 0.45));
        cloud.opacity_logit[i] = logit(uniform(0.2, 0.995));
        for (int k = 0; k < kColorWidth; ++k)
            cloud.sh_color[kColorWidth * i + k] = 0.35 * normal(rng);
        for (int k = 0; k < kShCoeffs; ++k)
            cloud.weight_sh[kShCoeffs * i + k] = (k == 0 ? 1.5 : 0.4) * normal(rng);
    }
    cloud.log_sigma = std::log(uniform(3.0, 6.0));

    scene.target = Image<double>(size, size, 3);
    for (double &v : scene.target.data)
        v = unit(rng);
    return scene;
}

LossSample mse_render_loss(const GaussianCloud<double> &cloud, const Camera &cam, const Image<double> &target,
                           const Vec3<double> &background, Image<double> *dl_dc, RenderOutput<double> *render) {
    RenderOptions opts;
    opts.trace_structure   = true;
    opts.keep_accumulators = render != nullptr;
    RenderOutput<double> out = render_oit<double>(cloud, cam, background, nullptr, opts);
    LossSample s;
    const double n = static_cast<double>(target.data.size());
    if (dl_dc)
        *dl_dc = Image<double>(target.width, target.height, target.channels);
    for (std::size_t k = 0; k < target.data.size(); ++k) {
        const double r = out.image.data[k] - target.data[k];
        s.value += r * r / n;
        if (dl_dc)
            dl_dc->data[k] = 2.0 * r / n;
    }
    s.structure = out.structure_hash;
    if (render)
        *render = std::move(out);
    return s;
}

bool GradcheckReport::passed() const {
    for (const auto &a : attrs)
        if (a.failures > 0)
            return false;
    return true;
}

GradcheckReport run_gradcheck(const GradcheckConfig &config) {
    GradcheckReport report;
    for (Attr a : kAllAttrs)
        report.attrs.push_back({std::string(attr_name(a))});
    report.attrs.push_back({"log_sigma"});

    for (int sidx = 0; sidx < config.scenes; ++sidx) {
        const GradcheckScene scene =
            random_gradcheck_scene(config.seed * 1000003ull + static_cast<std::uint64_t>(sidx), config.n_gaussians,
                                   config.size);
        Image<double> dl_dc;
        RenderOutput<double> render;
        mse_render_loss(scene.cloud, scene.camera, scene.target, scene.background, &dl_dc, &render);
        const ActiveMask all(scene.cloud.size(), 1);
        const GradientBuffer<double> grads =
            backward_oit(scene.cloud, scene.camera, render.acc, dl_dc, scene.background, all);

        const LossFn loss = [&](const GaussianCloud<double> &c, const Camera &cam) {
            return mse_render_loss(c, cam, scene.target, scene.background);
        };
        for (const ParamRef &ref : all_params(scene.cloud.size())) {
            auto &entry = report.attrs[ref.shared_sigma ? kNumAttrs : static_cast<int>(ref.attr)];
            const FdEstimate fd = finite_diff_oracle(scene.cloud, scene.camera, loss, ref, config.step);
            if (fd.kind == FdEstimate::Kind::Unavailable) {
                ++entry.skipped;
                continue;
            }
            if (fd.kind != FdEstimate::Kind::Central)
                ++entry.one_sided;
            ++entry.checked;
            const double analytic = param_at(grads, ref);
            const double err      = std::abs(analytic - fd.value);
            const double mag      = std::max(std::abs(analytic), std::abs(fd.value));
            bool ok;
            if (mag < config.small_cutoff) {
                ok                  = err <= config.abs_tol;
                entry.max_abs_error = std::max(entry.max_abs_error, err);
            } else {
                const double rel = err / mag;
                ok               = rel <= config.rel_tol;
                if (rel > entry.max_rel_error) {
                    entry.max_rel_error   = rel;
                    entry.argmax_scene    = sidx;
                    entry.argmax_gaussian = ref.gaussian;
                    entry.argmax_component = ref.component;
                }
            }
            if (!ok)
                ++entry.failures;
        }
    }
    return report;
}

} // namespace soit

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/backward.hpp>

#include <functional>
#include <string>

namespace soit {

/// One scalar parameter of a cloud: component `component` of attribute `attr` of Gaussian `gaussian`,
/// or the shared log sigma when `shared_sigma` is set.
struct ParamRef {
    Attr attr              = Attr::Position;
    std::size_t gaussian   = 0;
    int component          = 0;
    bool shared_sigma      = false;
};

template <typename T> T &param_at(GaussianParams<T> &p, const ParamRef &ref) {
    return ref.shared_sigma ? p.log_sigma : p.of(ref.attr, ref.gaussian)[ref.component];
}
template <typename T> T param_at(const GaussianParams<T> &p, const ParamRef &ref) {
    return ref.shared_sigma ? p.log_sigma : p.of(ref.attr, ref.gaussian)[ref.component];
}

/// Every scalar parameter of an n-Gaussian cloud, shared sigma last.
std::vector<ParamRef> all_params(std::size_t n);

struct LossSample {
    double value             = 0;
    std::uint64_t structure  = 0; // branch digest; differences mark a discontinuity between samples
};

using LossFn = std::function<LossSample(const GaussianCloud<double> &, const Camera &)>;

struct FdEstimate {
    enum class Kind { Central, Forward, Backward, Unavailable };
    double value = 0;
    Kind kind    = Kind::Unavailable;
};

/// Central difference (L(p + h) - L(p - h)) / 2h. When a sample crosses a branch discontinuity
/// (structure digest differs from the unperturbed one) it falls back to the second-order one-sided
/// difference on the smooth side, or reports Unavailable.
FdEstimate finite_diff_oracle(const GaussianCloud<double> &cloud, const Camera &cam, const LossFn &loss,
                              const ParamRef &param, double step = 1e-5);

/// A small random scene for gradient checks.
struct GradcheckScene {
    GaussianCloud<double> cloud;
    Camera camera;
    Image<double> target;
    Vec3<double> background;
};

GradcheckScene random_gradcheck_scene(std::uint64_t seed, int n_gaussians = 10, int size = 8);

/// L = mean (C - target)^2 over pixels and channels, with the structure digest of the render.
LossSample mse_render_loss(const GaussianCloud<double> &cloud, const Camera &cam, const Image<double> &target,
                           const Vec3<double> &background, Image<double> *dl_dc = nullptr,
                           RenderOutput<double> *render = nullptr);

struct GradcheckConfig {
    int scenes          = 25;
    int n_gaussians     = 10;
    int size            = 8;
    std::uint64_t seed  = 0;
    double step         = 1e-5;
    double rel_tol      = 1e-4;
    double abs_tol      = 1e-7;
    double small_cutoff = 1e-3;
};

struct AttrGradcheck {
    std::string name;
    std::size_t checked   = 0;
    std::size_t failures  = 0;
    std::size_t one_sided = 0;
    std::size_t skipped   = 0;
    double max_rel_error  = 0;
    double max_abs_error  = 0;
    int argmax_scene      = -1;
    std::size_t argmax_gaussian = 0;
    int argmax_component  = 0;
};

struct GradcheckReport {
    std::vector<AttrGradcheck> attrs; // one per Attr, then "log_sigma"
    bool passed() const;
};

/// Compares backward_oit against finite_diff_oracle on every parameter of `config.scenes` random scenes.
GradcheckReport run_gradcheck(const GradcheckConfig &config);

} // namespace soit

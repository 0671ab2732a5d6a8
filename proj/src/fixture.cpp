// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/io.hpp>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace soit {

std::vector<Camera> ring_cameras(int n_views, int resolution, double radius, double elevation, double fov_x) {
    std::vector<Camera> cams;
    for (int k = 0; k < n_views; ++k) {
        const double theta = 2.0 * std::numbers::pi * k / n_views;
        const Eigen::Vector3d eye(radius * std::cos(theta) * std::cos(elevation), radius * std::sin(elevation),
                                  radius * std::sin(theta) * std::cos(elevation));
        Camera cam = Camera::look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), resolution,
                                     resolution, fov_x);
        char name[32];
        std::snprintf(name, sizeof(name), "view_%03d.png", k);
        cam.image_name = name;
        cams.push_back(cam);
    }
    return cams;
}

Fixture generate_fixture(const FixtureSpec &spec) {
    if (spec.n_gaussians < 0 || spec.n_views < 1 || spec.resolution < 1)
        throw InvalidParameter("generate_fixture: counts and resolution must be positive");
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    Fixture fx;
    auto &gt = fx.ground_truth;
    gt.resize(static_cast<std::size_t>(spec.n_gaussians));
    gt.log_sigma = static_cast<float>(std::log(4.5));
    for (int i = 0; i < spec.n_gaussians; ++i) {
        for (int c = 0; c < 3; ++c)
            gt.mu[3 * i + c] = static_cast<float>(uniform(-0.5, 0.5));
        const double base = uniform(0.03, 0.08);
        for (int c = 0; c < 3; ++c)
            gt.log_scale[3 * i + c] = static_cast<float>(std::log(base) + uniform(-0.35, 0.35));
        Vec4<double> q(normal(rng), normal(rng), normal(rng), normal(rng));
        q.normalize();
        for (int c = 0; c < 4; ++c)
            gt.quat[4 * i + c] = static_cast<float>(q[c]);
        gt.opacity_logit[i] = static_cast<float>(logit(uniform(0.3, 0.95)));
        for (int c = 0; c < 3; ++c)
            gt.sh_color[kColorWidth * i + c] = static_cast<float>((uniform(0.1, 0.9) - 0.5) / kShC0);
        for (int j = 1; j < kShCoeffs; ++j)
            for (int c = 0; c < 3; ++c)
                gt.sh_color[kColorWidth * i + 3 * j + c] = static_cast<float>((j < 4 ? 0.08 : 0.03) * normal(rng));
        gt.weight_sh[kShCoeffs * i] = static_cast<float>(inverse_softplus(uniform(0.6, 1.4)) / kShC0);
    }

    auto &data   = fx.data;
    data.cameras = ring_cameras(spec.n_views, spec.resolution);
    const Vec3<float> background = Vec3<float>::Zero();
    RenderOptions opts;
    opts.keep_accumulators = false;
    for (const auto &cam : data.cameras) {
        Image<float> img = render_oit(gt, cam, background, nullptr, opts).image;
        for (float &v : img.data)
            v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
        data.images.push_back(std::move(img));
    }

    PointCloud pts;
    for (int i = 0; i < spec.n_gaussians; ++i) {
        Eigen::Vector3f p, col;
        for (int c = 0; c < 3; ++c) {
            p[c]             = gt.mu[3 * i + c] + static_cast<float>(spec.point_noise * normal(rng));
            const double rgb = std::clamp(kShC0 * gt.sh_color[kColorWidth * i + c] + 0.5, 0.0, 1.0);
            col[c]           = static_cast<float>(std::lround(rgb * 255.0)) / 255.0f;
        }
        pts.positions.push_back(p);
        pts.colors.push_back(col);
    }
    data.init_points = std::move(pts);
    assign_split(data);
    return fx;
}

} // namespace soit

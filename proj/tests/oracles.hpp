// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
// Reference implementations used by the tests. They are written from textbook formulas and share no code
// with the library beyond the public data types.
#pragma once

#include <soit/io.hpp>
#include <soit/rasterizer.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace soit::test {

inline Eigen::Matrix3d rotation_oracle(const Eigen::Vector4d &q) {
    return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
}

/// Real spherical harmonics up to degree 3 from the closed-form normalization constants, in the
/// Condon-Shortley-free ordering used by common splatting code (y, z, x for degree 1, and so on).
inline std::array<double, 16> sh_table(const Eigen::Vector3d &d) {
    const double pi = std::numbers::pi;
    const double x = d.x(), y = d.y(), z = d.z();
    const double c0  = 0.5 * std::sqrt(1.0 / pi);
    const double c1  = std::sqrt(3.0 / (4.0 * pi));
    const double c2a = 0.5 * std::sqrt(15.0 / pi);
    const double c2b = 0.25 * std::sqrt(5.0 / pi);
    const double c2c = 0.25 * std::sqrt(15.0 / pi);
    const double c3a = 0.25 * std::sqrt(35.0 / (2.0 * pi));
    const double c3b = 0.5 * std::sqrt(105.0 / pi);
    const double c3c = 0.25 * std::sqrt(21.0 / (2.0 * pi));
    const double c3d = 0.25 * std::sqrt(7.0 / pi);
    const double c3e = 0.25 * std::sqrt(105.0 / pi);
    return {c0,
            -c1 * y,
            c1 * z,
            -c1 * x,
            c2a * x * y,
            -c2a * y * z,
            c2b * (2 * z * z - x * x - y * y),
            -c2a * x * z,
            c2c * (x * x - y * y),
            -c3a * y * (3 * x * x - y * y),
            c3b * x * y * z,
            -c3c * y * (4 * z * z - x * x - y * y),
            c3d * z * (2 * z * z - 3 * x * x - 3 * y * y),
            -c3c * x * (4 * z * z - x * x - y * y),
            c3e * z * (x * x - y * y),
            -c3a * x * (x * x - 3 * y * y)};
}

/// Pixel coordinates of a world point via the full homogeneous K [R | t] product.
inline Eigen::Vector2d project_point(const Camera &cam, const Eigen::Vector3d &p) {
    Eigen::Matrix<double, 3, 4> k = Eigen::Matrix<double, 3, 4>::Zero();
    k(0, 0) = cam.fx;
    k(1, 1) = cam.fy;
    k(0, 2) = cam.cx;
    k(1, 2) = cam.cy;
    k(2, 2) = 1.0;
    const Eigen::Vector3d h = k * cam.world_to_cam * p.homogeneous();
    return h.hnormalized();
}

/// Seeded cloud of n Gaussians around the origin, visible from a camera on the +z side.
template <typename T>
GaussianCloud<T> random_cloud(std::uint64_t seed, std::size_t n, double extent = 0.6, double sigma = 6.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    GaussianCloud<T> c(n);
    c.log_sigma = static_cast<T>(std::log(sigma));
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            c.mu[3 * i + k]        = static_cast<T>(extent * u(rng));
            c.log_scale[3 * i + k] = static_cast<T>(std::log(0.06 + 0.08 * (0.5 + 0.5 * u(rng))));
        }
        Eigen::Vector4d q(g(rng), g(rng), g(rng), g(rng));
        q.normalize();
        for (int k = 0; k < 4; ++k)
            c.quat[4 * i + k] = static_cast<T>(q[k]);
        c.opacity_logit[i] = static_cast<T>(1.5 * u(rng));
        for (int k = 0; k < kColorWidth; ++k)
            c.sh_color[kColorWidth * i + k] = static_cast<T>((k < 3 ? 0.8 : 0.1) * u(rng));
        for (int k = 0; k < kShCoeffs; ++k)
            c.weight_sh[kShCoeffs * i + k] = static_cast<T>((k == 0 ? 1.0 : 0.15) * u(rng));
    }
    return c;
}

inline Camera front_camera(int width, int height, double distance = 3.0) {
    return Camera::look_at({0.3, -0.2, distance}, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), width, height,
                           0.8);
}

/// Everything a per-pixel oracle needs about one splat, computed from textbook formulas on top of the
/// library's projected footprint (projection is validated separately).
struct OracleSplat {
    std::size_t id = 0;
    Eigen::Vector2d mu;
    Eigen::Matrix2d inv_cov;
    double opacity = 0, weight = 0, depth = 0;
    Eigen::Vector3d color;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

inline std::vector<OracleSplat> oracle_splats(const GaussianCloud<double> &cloud, const Camera &cam) {
    std::vector<OracleSplat> out;
    const Eigen::Vector3d f = cam.focal_point();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const ProjectedGaussian<double> p = project_one(cloud, i, cam);
        if (!p.visible)
            continue;
        OracleSplat s;
        s.id      = i;
        s.mu      = p.mu2d;
        s.inv_cov = p.cov2d.inverse();
        s.opacity = 1.0 / (1.0 + std::exp(-cloud.opacity_logit[i]));
        s.depth   = p.depth;
        const Eigen::Vector3d dir = (cloud.position(i) - f).normalized();
        const auto y              = sh_table(dir);
        Eigen::Vector3d raw(0.5, 0.5, 0.5);
        double v = 0;
        for (int j = 0; j < 16; ++j) {
            for (int c = 0; c < 3; ++c)
                raw[c] += cloud.sh_color[kColorWidth * i + 3 * j + c] * y[j];
            v += cloud.weight_sh[kShCoeffs * i + j] * y[j];
        }
        s.color  = raw.cwiseMax(0.0);
        s.weight = std::max(0.0, 1.0 - s.depth / cloud.sigma()) * std::log1p(std::exp(v));
        s.x0     = p.x_min;
        s.x1     = p.x_max;
        s.y0     = p.y_min;
        s.y1     = p.y_max;
        out.push_back(s);
    }
    return out;
}

/// Alpha of a splat at a pixel center, or 0 when outside its footprint or below the skip threshold.
inline double oracle_alpha(const OracleSplat &s, int x, int y) {
    if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1)
        return 0.0;
    const Eigen::Vector2d d(x + 0.5 - s.mu.x(), y + 0.5 - s.mu.y());
    const double a = s.opacity * std::exp(-0.5 * d.dot(s.inv_cov * d));
    if (a < 1.0 / 255.0)
        return 0.0;
    return std::min(a, 0.99);
}

struct OracleRender {
    Image<double> image;
    std::uint64_t pairs = 0;
};

/// Per-pixel weighted OIT over all splats, no tiles.
inline OracleRender naive_oit(const GaussianCloud<double> &cloud, const Camera &cam, const Eigen::Vector3d &bg) {
    const auto splats = oracle_splats(cloud, cam);
    OracleRender r;
    r.image = Image<double>(cam.width, cam.height, 3);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            Eigen::Vector3d p = Eigen::Vector3d::Zero();
            double q = 0, t = 1;
            for (const auto &s : splats) {
                const double a = oracle_alpha(s, x, y);
                if (a == 0.0)
                    continue;
                ++r.pairs;
                p += s.color * a * s.weight;
                q += a * s.weight;
                t *= 1.0 - a;
            }
            const Eigen::Vector3d c = q > 0 ? Eigen::Vector3d(t * bg + (1 - t) * p / q) : bg;
            for (int ch = 0; ch < 3; ++ch)
                r.image.at(x, y, ch) = c[ch];
        }
    return r;
}

/// Per-pixel front-to-back compositing in (depth, index) order, stopping once transmittance drops below 1e-4.
inline Image<double> naive_sorted(const GaussianCloud<double> &cloud, const Camera &cam, const Eigen::Vector3d &bg) {
    auto splats = oracle_splats(cloud, cam);
    std::sort(splats.begin(), splats.end(), [](const OracleSplat &a, const OracleSplat &b) {
        return a.depth != b.depth ? a.depth < b.depth : a.id < b.id;
    });
    Image<double> img(cam.width, cam.height, 3);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            Eigen::Vector3d c = Eigen::Vector3d::Zero();
            double t          = 1;
            for (const auto &s : splats) {
                const double a = oracle_alpha(s, x, y);
                if (a == 0.0)
                    continue;
                c += t * a * s.color;
                t *= 1.0 - a;
                if (t < 1e-4)
                    break;
            }
            c += t * bg;
            for (int ch = 0; ch < 3; ++ch)
                img.at(x, y, ch) = c[ch];
        }
    return img;
}

template <typename T> double max_abs_diff(const Image<T> &a, const Image<T> &b) {
    double m = 0;
    for (std::size_t k = 0; k < a.data.size(); ++k)
        m = std::max(m, std::abs(static_cast<double>(a.data[k]) - static_cast<double>(b.data[k])));
    return m;
}

/// Greedy max-min selection written without early exits or shared helpers.
inline std::vector<std::size_t> fps_oracle(const std::vector<Eigen::Vector3d> &pts, std::size_t count,
                                           std::size_t first) {
    std::vector<std::size_t> sel{first};
    while (sel.size() < count) {
        std::size_t best = 0;
        double best_d    = -1;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double dmin = INFINITY;
            for (std::size_t s : sel)
                dmin = std::min(dmin, (pts[i] - pts[s]).norm());
            if (dmin > best_d) {
                best_d = dmin;
                best   = i;
            }
        }
        sel.push_back(best);
    }
    return sel;
}

/// Minimum pairwise distance within a selection.
inline double min_spacing(const std::vector<Eigen::Vector3d> &pts, const std::vector<std::size_t> &sel) {
    double m = INFINITY;
    for (std::size_t a = 0; a < sel.size(); ++a)
        for (std::size_t b = a + 1; b < sel.size(); ++b)
            m = std::min(m, (pts[sel[a]] - pts[sel[b]]).norm());
    return m;
}

inline fs::path scratch_dir(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("soit_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace soit::test

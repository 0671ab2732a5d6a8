// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/camera.hpp>


#include <cmath>

namespace soit {

void Camera::validate() const {
    if (width <= 0 || height <= 0)
        throw InvalidParameter("camera '" + image_name + "': image size must be positive");
    if (!(fx > 0) || !(fy > 0))
        throw InvalidParameter("camera '" + image_name + "': focal lengths must be positive");
    if (!(near < far) || !(near > 0))
        throw InvalidParameter("camera '" + image_name + "': require 0 < near < far");
    if (!world_to_cam.allFinite())
        throw InvalidParameter("camera '" + image_name + "': non-finite transform");
    const Eigen::Matrix3d r = rotation();
    if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-5)
        throw InvalidParameter("camera '" + image_name + "': rotation block is not orthonormal");
}

Camera Camera::look_at(const Eigen::Vector3d &eye, const Eigen::Vector3d &target, const Eigen::Vector3d &up,
                       int width, int height, double fov_x_radians) {
    const Eigen::Vector3d z = (target - eye).normalized();
    const Eigen::Vector3d x = z.cross(up).normalized();
    const Eigen::Vector3d y = z.cross(x);
    Camera cam;
    cam.width  = width;
    cam.height = height;
    cam.fx = cam.fy = 0.5 * width / std::tan(0.5 * fov_x_radians);
    cam.cx          = 0.5 * width;
    cam.cy          = 0.5 * height;
    Eigen::Matrix3d r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    cam.world_to_cam                      = Eigen::Matrix4d::Identity();
    cam.world_to_cam.topLeftCorner<3, 3>() = r;
    cam.world_to_cam.topRightCorner<3, 1>() = -r * eye;
    return cam;
}

template <typename T> ProjectedGaussian<T> project_one(const GaussianCloud<T> &cloud, std::size_t i, const Camera &cam) {
    ProjectedGaussian<T> out;
    const Mat3<T> rw = cam.rotation().cast<T>();
    const Vec3<T> tw = cam.translation().cast<T>();
    const Vec3<T> t  = rw * cloud.position(i) + tw;
    out.depth        = t.z();
    if (!(out.depth > T(cam.near)))
        return out;

    const T fx = T(cam.fx), fy = T(cam.fy);
    const T inv_z = T(1) / t.z();
    out.mu2d      = {fx * t.x() * inv_z + T(cam.cx), fy * t.y() * inv_z + T(cam.cy)};

    Mat23<T> j;
    j << fx * inv_z, T(0), -fx * t.x() * inv_z * inv_z, //
        T(0), fy * inv_z, -fy * t.y() * inv_z * inv_z;

    const Vec4<T> q    = cloud.rotation(i).normalized();
    const Mat3<T> m    = quat_to_rotation(q) * cloud.scale(i).asDiagonal();
    const Mat3<T> cov  = m * m.transpose();
    const Mat23<T> jw  = j * rw;
    Mat2<T> cov2d      = jw * cov * jw.transpose();
    cov2d(0, 1)        = cov2d(1, 0) = T(0.5) * (cov2d(0, 1) + cov2d(1, 0));
    cov2d(0, 0)       += T(kLowPassDilation);
    cov2d(1, 1)       += T(kLowPassDilation);
    out.cov2d          = cov2d;

    const T mid    = T(0.5) * (cov2d(0, 0) + cov2d(1, 1));
    const T half   = std::sqrt(std::max(T(0), mid * mid - (cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(0, 1))));
    const T lambda = mid + half;
    out.radius     = T(3) * std::sqrt(lambda);

    // Pixel centers (x + 0.5) inside [mu - r, mu + r].
    const double r  = static_cast<double>(out.radius);
    const double mx = static_cast<double>(out.mu2d.x()), my = static_cast<double>(out.mu2d.y());
    if (!std::isfinite(mx) || !std::isfinite(my) || !std::isfinite(r))
        return out;
    const double x_lo = std::max(std::ceil(mx - r - 0.5), 0.0);
    const double x_hi = std::min(std::floor(mx + r - 0.5), cam.width - 1.0);
    const double y_lo = std::max(std::ceil(my - r - 0.5), 0.0);
    const double y_hi = std::min(std::floor(my + r - 0.5), cam.height - 1.0);
    if (x_lo > x_hi || y_lo > y_hi)
        return out;
    out.x_min   = static_cast<int>(x_lo);
    out.x_max   = static_cast<int>(x_hi);
    out.y_min   = static_cast<int>(y_lo);
    out.y_max   = static_cast<int>(y_hi);
    out.visible = true;
    return out;
}

template <typename T> std::vector<ProjectedGaussian<T>> project(const GaussianCloud<T> &cloud, const Camera &cam) {
    cam.validate();
    std::vector<ProjectedGaussian<T>> out(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
        out[i] = project_one(cloud, i, cam);
    return out;
}

template <typename T>
std::vector<std::vector<std::uint32_t>> cull(const std::vector<ProjectedGaussian<T>> &projected, const TileGrid &grid) {
    std::vector<std::vector<std::uint32_t>> tiles(grid.count());
    for (std::size_t i = 0; i < projected.size(); ++i) {
        const auto &p = projected[i];
        if (!p.visible)
            continue;
        for (int ty = p.y_min / grid.tile_size; ty <= p.y_max / grid.tile_size; ++ty)
            for (int tx = p.x_min / grid.tile_size; tx <= p.x_max / grid.tile_size; ++tx)
                tiles[ty * grid.tiles_x + tx].push_back(static_cast<std::uint32_t>(i));
    }
    return tiles;
}

#define SOIT_INSTANTIATE(T)                                                                                       \
    template ProjectedGaussian<T> project_one<T>(const GaussianCloud<T> &, std::size_t, const Camera &);          \
    template std::vector<ProjectedGaussian<T>> project<T>(const GaussianCloud<T> &, const Camera &);              \
    template std::vector<std::vector<std::uint32_t>> cull<T>(const std::vector<ProjectedGaussian<T>> &,           \
                                                             const TileGrid &);

SOIT_INSTANTIATE(float)
SOIT_INSTANTIATE(double)

} // namespace soit

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/scene.hpp>

#include <Eigen/Geometry>

#include <optional>
#include <string>
#include <vector>

namespace soit {

inline constexpr int kTileSize = 16;
inline constexpr double kLowPassDilation = 0.3;

/// Pinhole camera. Camera frame is x right, y down, z forward; pixel (x, y) has its center at
/// (x + 0.5, y + 0.5).
struct Camera {
    int width  = 0;
    int height = 0;
    double fx = 1, fy = 1, cx = 0, cy = 0;
    Eigen::Matrix4d world_to_cam = Eigen::Matrix4d::Identity();
    double near = 0.01;
    double far  = 100.0;
    std::string image_name;

    Eigen::Matrix3d rotation() const { return world_to_cam.topLeftCorner<3, 3>(); }
    Eigen::Vector3d translation() const { return world_to_cam.topRightCorner<3, 1>(); }
    /// Camera center in world coordinates (the focal point).
    Eigen::Vector3d focal_point() const { return -rotation().transpose() * translation(); }

    /// Throws InvalidParameter if the intrinsics or the rotation block are invalid.
    void validate() const;

    /// Camera at `eye` looking at `target`; `up` is the approximate world up (image y points away from it).
    static Camera look_at(const Eigen::Vector3d &eye, const Eigen::Vector3d &target, const Eigen::Vector3d &up,
                          int width, int height, double fov_x_radians);
};

template <typename T> struct ProjectedGaussian {
    Vec2<T> mu2d   = Vec2<T>::Zero();
    Mat2<T> cov2d  = Mat2<T>::Identity(); // includes the low-pass dilation
    T depth        = T(0);
    T radius       = T(0);
    /// Inclusive pixel range whose centers lie inside the 3-sigma box, clipped to the image.
    int x_min = 0, x_max = -1, y_min = 0, y_max = -1;
    bool visible = false;
};

/// Square tile partition of an image.
struct TileGrid {
    int width = 0, height = 0, tile_size = kTileSize;
    int tiles_x = 0, tiles_y = 0;

    TileGrid() = default;
    TileGrid(int w, int h, int ts = kTileSize)
        : width(w), height(h), tile_size(ts), tiles_x((w + ts - 1) / ts), tiles_y((h + ts - 1) / ts) {}
    int count() const { return tiles_x * tiles_y; }
};

/// Projects a single Gaussian. Exposed so the rasterizer and backward pass share one code path.
template <typename T> ProjectedGaussian<T> project_one(const GaussianCloud<T> &cloud, std::size_t i, const Camera &cam);

/// Projects every Gaussian; invisible ones keep their slot with visible = false.
template <typename T> std::vector<ProjectedGaussian<T>> project(const GaussianCloud<T> &cloud, const Camera &cam);

/// Per-tile index lists (in ascending Gaussian order) of the tiles each visible 3-sigma box overlaps.
template <typename T>
std::vector<std::vector<std::uint32_t>> cull(const std::vector<ProjectedGaussian<T>> &projected, const TileGrid &grid);

} // namespace soit

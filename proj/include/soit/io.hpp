// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/activeset.hpp>
#include <soit/adam.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace soit {

namespace fs = std::filesystem;

// ---- Images ----------------------------------------------------------------------------------------

/// 8-bit PNG (gray, gray+alpha, RGB or RGBA; 16-bit is reduced) decoded to RGB floats v/255.
Image<float> read_png(const fs::path &path);
/// Clamps to [0,1] and quantizes with round(v * 255).
void write_png(const fs::path &path, const Image<float> &image);

/// Raw float image: "SOIT", u32 width, u32 height, u32 channels, then planar little-endian float32.
Image<float> read_f32(const fs::path &path);
void write_f32(const fs::path &path, const Image<float> &image);

// ---- PLY -------------------------------------------------------------------------------------------

/// Binary little-endian PLY in the usual 3DGS layout plus weight_sh_0..15 and a `sigma` header comment.
void write_cloud_ply(const fs::path &path, const GaussianCloud<float> &cloud);
GaussianCloud<float> read_cloud_ply(const fs::path &path);

struct PointCloud {
    std::vector<Eigen::Vector3f> positions;
    std::vector<Eigen::Vector3f> colors; // [0,1]
    std::size_t size() const { return positions.size(); }
};

/// Points with x,y,z and optional red,green,blue (uchar or float). ASCII or binary little-endian.
PointCloud read_points_ply(const fs::path &path);
void write_points_ply(const fs::path &path, const PointCloud &points);

// ---- Cameras and datasets --------------------------------------------------------------------------

std::vector<Camera> read_cameras_json(const fs::path &path);
void write_cameras_json(const fs::path &path, std::span<const Camera> cameras);

struct Dataset {
    std::vector<Camera> cameras;
    std::vector<Image<float>> images;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::optional<PointCloud> init_points;

    std::size_t size() const { return cameras.size(); }
    std::vector<Camera> train_cameras() const;
    std::vector<Image<float>> train_images() const;
};

/// Every 8th view (index % 8 == 0) goes to the test split.
void assign_split(Dataset &data);

/// Reads cameras.json, the PNG named by each camera, and points.ply when present.
Dataset load_dataset(const fs::path &root);
/// Writes cameras.json, one PNG per camera and points.ply when init points exist.
void save_dataset(const fs::path &root, const Dataset &data);

// ---- Synthetic fixture -----------------------------------------------------------------------------

struct FixtureSpec {
    int n_gaussians  = 500;
    int n_views      = 20;
    int resolution   = 64;
    std::uint64_t seed = 0;
    double point_noise = 0.02; // std of the init point jitter
};

struct Fixture {
    Dataset data;
    GaussianCloud<float> ground_truth;
};

/// Seeded ground-truth cloud in the unit box, a ring of cameras around it, images rendered with
/// render_oit and quantized to 8 bits, and noisy init points at the ground-truth centers.
Fixture generate_fixture(const FixtureSpec &spec);

/// Ring of n cameras looking at the origin, matching the fixture layout.
std::vector<Camera> ring_cameras(int n_views, int resolution, double radius = 2.5, double elevation = 0.35,
                                 double fov_x = 0.9);

// ---- Checkpoints -----------------------------------------------------------------------------------

struct Checkpoint {
    GaussianCloud<float> cloud;
    AdamState<float> adam;
    ActiveSetState active;
    int iteration = 0;
};

/// Writes <dir>/scene.ply and <dir>/state.bin.
void save_checkpoint(const fs::path &dir, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const fs::path &dir);
/// Loads either a checkpoint directory or a bare scene PLY.
GaussianCloud<float> load_scene(const fs::path &path);

} // namespace soit

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include "oracles.hpp"

#include <soit/camera.hpp>

#include <gtest/gtest.h>

using namespace soit;

namespace {

GaussianCloud<double> single(const Eigen::Vector3d &mu, double scale) {
    GaussianCloud<double> c(1);
    for (int k = 0; k < 3; ++k) {
        c.mu[k]        = mu[k];
        c.log_scale[k] = std::log(scale);
    }
    c.quat[0]      = 1.0;
    c.log_sigma    = std::log(10.0);
    c.weight_sh[0] = 1.0;
    return c;
}

Camera axis_camera(int w, int h, double f) {
    Camera cam;
    cam.width  = w;
    cam.height = h;
    cam.fx     = f;
    cam.fy     = 1.3 * f;
    cam.cx     = 0.5 * w;
    cam.cy     = 0.5 * h;
    return cam;
}

Camera random_camera(std::mt19937_64 &rng, int w, int h) {
    std::uniform_real_distribution<double> u(-1, 1);
    const Eigen::Vector3d eye(2.5 * u(rng), 2.5 * u(rng), 3.0 + u(rng));
    const Eigen::Vector3d target(0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng));
    Camera cam = Camera::look_at(eye, target, Eigen::Vector3d::UnitY(), w, h, 0.7 + 0.3 * u(rng));
    cam.cx += 3.0 * u(rng);
    cam.cy += 3.0 * u(rng);
    return cam;
}

} // namespace

TEST(Camera, LookAtIsValidAndCentered) {
    const Eigen::Vector3d eye(1, 2, 3);
    const Camera cam = Camera::look_at(eye, {0, 0, 0}, Eigen::Vector3d::UnitY(), 40, 30, 0.9);
    EXPECT_NO_THROW(cam.validate());
    EXPECT_LT((cam.focal_point() - eye).norm(), 1e-12);
    // The target lands on the principal point.
    const Eigen::Vector2d p = test::project_point(cam, Eigen::Vector3d::Zero());
    EXPECT_NEAR(p.x(), cam.cx, 1e-9);
    EXPECT_NEAR(p.y(), cam.cy, 1e-9);
}

TEST(Camera, ValidateRejectsBadIntrinsicsAndPose) {
    Camera cam = axis_camera(8, 8, 10);
    EXPECT_NO_THROW(cam.validate());
    Camera a = cam;
    a.fx     = 0;
    EXPECT_THROW(a.validate(), InvalidParameter);
    Camera b = cam;
    b.near   = 5;
    b.far    = 1;
    EXPECT_THROW(b.validate(), InvalidParameter);
    Camera c          = cam;
    c.world_to_cam(0, 0) = 1.1;
    EXPECT_THROW(c.validate(), InvalidParameter);
}

TEST(Project, IsotropicOnAxis) {
    const Camera cam = axis_camera(64, 64, 50);
    const double s = 0.1, d = 4.0;
    const auto p = project_one(single({0, 0, d}, s), 0, cam);
    ASSERT_TRUE(p.visible);
    EXPECT_NEAR(p.depth, d, 1e-15);
    EXPECT_NEAR(p.mu2d.x(), cam.cx, 1e-12);
    EXPECT_NEAR(p.mu2d.y(), cam.cy, 1e-12);
    EXPECT_NEAR(p.cov2d(0, 0), std::pow(cam.fx * s / d, 2) + 0.3, 1e-12);
    EXPECT_NEAR(p.cov2d(1, 1), std::pow(cam.fy * s / d, 2) + 0.3, 1e-12);
    EXPECT_NEAR(p.cov2d(0, 1), 0.0, 1e-12);
}

TEST(Project, BehindCameraIsInvisible) {
    const Camera cam = axis_camera(16, 16, 20);
    EXPECT_FALSE(project_one(single({0, 0, -1}, 0.1), 0, cam).visible);
    EXPECT_FALSE(project_one(single({0, 0, 0.005}, 0.1), 0, cam).visible); // nearer than `near`
    EXPECT_FALSE(project_one(single({50, 0, 1}, 0.01), 0, cam).visible);   // off to the side
}

TEST(Project, MeanMatchesHomogeneousProjection) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 20; ++t) {
        const Camera cam = random_camera(rng, 80, 60);
        const auto cloud = test::random_cloud<double>(100 + t, 30);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const auto p = project_one(cloud, i, cam);
            if (p.depth <= cam.near)
                continue;
            const Eigen::Vector2d ref = test::project_point(cam, cloud.position(i));
            EXPECT_LT((p.mu2d - ref).norm(), 1e-6);
        }
    }
}

TEST(Project, RollEquivariance) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 10; ++t) {
        Camera cam   = random_camera(rng, 64, 64);
        cam.fy       = cam.fx; // roll equivariance needs square pixels
        cam.cx       = 32;
        cam.cy       = 32;
        const double theta = 0.3 + 0.5 * t;
        const Eigen::Matrix3d roll = Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitZ()).toRotationMatrix();
        Camera rolled              = cam;
        rolled.world_to_cam.topRows<3>() = roll * cam.world_to_cam.topRows<3>();
        const Eigen::Matrix2d r2         = roll.topLeftCorner<2, 2>();
        const auto cloud                 = test::random_cloud<double>(200 + t, 20);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const auto a = project_one(cloud, i, cam);
            const auto b = project_one(cloud, i, rolled);
            const Eigen::Vector2d c(cam.cx, cam.cy);
            EXPECT_LT((b.mu2d - (c + r2 * (a.mu2d - c))).norm(), 1e-5);
            EXPECT_LT((b.cov2d - r2 * a.cov2d * r2.transpose()).cwiseAbs().maxCoeff(), 1e-5);
            EXPECT_NEAR(a.depth, b.depth, 1e-12);
        }
    }
}

TEST(Project, ThreeSigmaBoundHoldsMass) {
    std::mt19937_64 rng(13);
    const Camera cam = test::front_camera(64, 64);
    const auto cloud = test::random_cloud<double>(14, 40);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto p = project_one(cloud, i, cam);
        if (!p.visible)
            continue;
        EXPECT_GT(p.cov2d.determinant(), 0.0);
        const Eigen::Matrix2d inv = p.cov2d.inverse();
        for (int k = 0; k < 64; ++k) {
            const double ang = 2 * std::numbers::pi * k / 64;
            const Eigen::Vector2d d = (p.radius + 1e-9) * Eigen::Vector2d(std::cos(ang), std::sin(ang));
            EXPECT_LT(std::exp(-0.5 * d.dot(inv * d)), 0.012);
        }
    }
}

TEST(Cull, SmallGaussianStaysInItsTile) {
    const Camera cam = axis_camera(64, 64, 60);
    // Centered in tile (1, 1): pixel center (24, 24) is at camera x = (24 - 32) d / f.
    const double d = 5;
    const auto cloud = single({(24.0 - 32.0) * d / 60.0, (24.0 - 32.0) * d / 78.0, d}, 0.01);
    const TileGrid grid(64, 64);
    const auto tiles = cull(project(cloud, cam), grid);
    for (int t = 0; t < grid.count(); ++t)
        EXPECT_EQ(tiles[t].size(), t == 1 * grid.tiles_x + 1 ? 1u : 0u) << "tile " << t;
}

TEST(Cull, LargeGaussianCoversEveryTile) {
    const Camera cam = axis_camera(64, 48, 60);
    const auto cloud = single({0, 0, 3}, 2.0);
    const TileGrid grid(64, 48);
    const auto tiles = cull(project(cloud, cam), grid);
    for (const auto &t : tiles)
        EXPECT_EQ(t.size(), 1u);
}

TEST(Cull, MatchesBruteForceIntersection) {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 5; ++trial) {
        const Camera cam = random_camera(rng, 70, 45);
        const auto cloud = test::random_cloud<double>(300 + trial, 200, 1.5);
        const auto proj  = project(cloud, cam);
        const TileGrid grid(cam.width, cam.height);
        const auto tiles = cull(proj, grid);
        for (int ty = 0; ty < grid.tiles_y; ++ty)
            for (int tx = 0; tx < grid.tiles_x; ++tx) {
                const int x0 = tx * 16, x1 = std::min(x0 + 15, cam.width - 1);
                const int y0 = ty * 16, y1 = std::min(y0 + 15, cam.height - 1);
                std::vector<std::uint32_t> ref;
                for (std::uint32_t i = 0; i < proj.size(); ++i) {
                    const auto &p = proj[i];
                    if (p.visible && p.x_min <= x1 && p.x_max >= x0 && p.y_min <= y1 && p.y_max >= y0)
                        ref.push_back(i);
                }
                EXPECT_EQ(tiles[ty * grid.tiles_x + tx], ref);
            }
    }
}

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/camera.hpp>

#include <span>
#include <type_traits>

namespace soit {

inline constexpr double kMinAlpha       = 1.0 / 255.0;
inline constexpr double kMaxAlpha       = 0.99;
inline constexpr double kSortedMinTrans = 1e-4;
inline constexpr double kQFloor         = 1e-10;

/// Running OIT sums for one pixel: P = sum c a w, Q = sum a w, T = prod (1 - a).
template <typename T> struct PixelAccumulator {
    T p[3] = {T(0), T(0), T(0)};
    T q    = T(0);
    T t    = T(1);

    /// Folds another accumulator in. The merge is commutative and associative.
    void merge(const PixelAccumulator &o) {
        p[0] += o.p[0];
        p[1] += o.p[1];
        p[2] += o.p[2];
        q += o.q;
        t *= o.t;
    }
};

template <typename T> struct AccumGrid {
    int width  = 0;
    int height = 0;
    std::vector<PixelAccumulator<T>> px;

    static AccumGrid empty(int w, int h) {
        AccumGrid g;
        g.width  = w;
        g.height = h;
        g.px.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), PixelAccumulator<T>{});
        return g;
    }
    bool matches(const Camera &cam) const { return width == cam.width && height == cam.height; }
    PixelAccumulator<T> &at(int x, int y) { return px[static_cast<std::size_t>(y) * width + x]; }
    const PixelAccumulator<T> &at(int x, int y) const { return px[static_cast<std::size_t>(y) * width + x]; }
};

/// Pre-rendered accumulators of the frozen set for one view, stamped with the stage it reflects.
template <typename T> struct PrerenderEntry {
    AccumGrid<T> acc;
    std::int64_t stamp = 0;
};

template <typename T> struct RenderOutput {
    Image<T> image;
    /// Final per-pixel accumulators (retained for the backward pass); empty when not requested.
    AccumGrid<T> acc;
    std::uint64_t splat_pixel_pairs = 0;
    /// Order-independent digest of every discontinuous branch taken (alpha skip/clamp, color clamp,
    /// weight ramp, Q > 0). Only computed with RenderOptions::trace_structure.
    std::uint64_t structure_hash = 0;
};

struct RenderOptions {
    /// Splat processing order (a permutation of Gaussian indices). Empty means ascending index.
    std::span<const std::uint32_t> order;
    bool keep_accumulators = true;
    bool trace_structure   = false;
};

/// Weighted OIT render. Accumulation starts from `base` when given (its size must match `cam`).
template <typename T>
RenderOutput<T> render_oit(const GaussianCloud<T> &cloud, const Camera &cam, const Vec3<T> &background,
                           const std::type_identity_t<AccumGrid<T>> *base = nullptr, const RenderOptions &opts = {});

/// Depth-sorted front-to-back alpha compositing. Forward only; used as an oracle.
template <typename T>
RenderOutput<T> render_sorted(const GaussianCloud<T> &cloud, const Camera &cam, const Vec3<T> &background,
                              const RenderOptions &opts = {});

/// Blend-and-normalize the active splats on top of `entry`. If `bake` is non-empty, splats flagged there
/// are composited into both the image and the entry (blend-and-update), and entry.stamp becomes `stage`.
/// Without a bake mask the entry must already be stamped with `stage`.
template <typename T>
RenderOutput<T> render_with_prerender(const GaussianCloud<T> &cloud, const ActiveMask &active, const Camera &cam,
                                      PrerenderEntry<T> &entry, std::int64_t stage, const Vec3<T> &background,
                                      std::span<const std::uint8_t> bake = {}, const RenderOptions &opts = {});

/// Adds the contributions of the selected splats into `grid`. Returns the splat-pixel pair count.
template <typename T>
std::uint64_t accumulate_splats(const GaussianCloud<T> &cloud, std::span<const std::uint8_t> selected,
                                const Camera &cam, AccumGrid<T> &grid);

/// Resolves accumulators into colors: C = T c0 + (1 - T) P / Q, or c0 where Q = 0.
template <typename T> Image<T> resolve(const AccumGrid<T> &acc, const Vec3<T> &background);

} // namespace soit

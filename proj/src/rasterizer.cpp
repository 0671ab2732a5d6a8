// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/rasterizer.hpp>

#include "splat.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace soit {

namespace {

using detail::AlphaState;
using detail::SplatPrep;

std::vector<std::uint32_t> processing_order(std::size_t n, const RenderOptions &opts) {
    if (opts.order.empty()) {
        std::vector<std::uint32_t> order(n);
        std::iota(order.begin(), order.end(), 0u);
        return order;
    }
    if (opts.order.size() != n)
        throw ContractViolation("render: processing order has " + std::to_string(opts.order.size()) +
                                " entries for " + std::to_string(n) + " Gaussians");
    return {opts.order.begin(), opts.order.end()};
}

/// Splats to rasterize plus, per splat, whether it also goes into the cache grid.
template <typename T> struct Batch {
    std::vector<SplatPrep<T>> splats;
    std::vector<std::uint8_t> to_cache;
    std::uint64_t structure = 0;
};

template <typename T>
void add_to_batch(Batch<T> &batch, const GaussianCloud<T> &cloud, std::uint32_t i, const Camera &cam, bool cache,
                  bool trace) {
    SplatPrep<T> prep;
    if (!detail::prepare_splat(cloud, i, cam, prep))
        return;
    if (trace)
        batch.structure += detail::mix64((static_cast<std::uint64_t>(i) << 8) ^ (0xF0ull | prep.flags));
    batch.splats.push_back(prep);
    batch.to_cache.push_back(cache ? 1 : 0);
}

/// Tile-parallel accumulation. Each pixel is owned by exactly one tile, so tiles never conflict.
template <typename T>
std::uint64_t rasterize(const Batch<T> &batch, const TileGrid &grid, AccumGrid<T> &image_acc,
                        AccumGrid<T> *cache_acc, std::uint64_t *structure) {
    std::vector<std::vector<std::uint32_t>> tiles(grid.count());
    for (std::uint32_t k = 0; k < batch.splats.size(); ++k) {
        const auto &s = batch.splats[k];
        for (int ty = s.y_min / grid.tile_size; ty <= s.y_max / grid.tile_size; ++ty)
            for (int tx = s.x_min / grid.tile_size; tx <= s.x_max / grid.tile_size; ++tx)
                tiles[ty * grid.tiles_x + tx].push_back(k);
    }

    std::uint64_t pairs  = 0;
    std::uint64_t digest = 0;
    const int tile_count = grid.count();
#pragma omp parallel for schedule(dynamic, 1) reduction(+ : pairs, digest)
    for (int tile = 0; tile < tile_count; ++tile) {
        const int tx0 = (tile % grid.tiles_x) * grid.tile_size;
        const int ty0 = (tile / grid.tiles_x) * grid.tile_size;
        const int tx1 = std::min(tx0 + grid.tile_size, grid.width) - 1;
        const int ty1 = std::min(ty0 + grid.tile_size, grid.height) - 1;
        for (std::uint32_t k : tiles[tile]) {
            const auto &s      = batch.splats[k];
            const bool to_cache = cache_acc != nullptr && batch.to_cache[k];
            const int x0 = std::max(s.x_min, tx0), x1 = std::min(s.x_max, tx1);
            const int y0 = std::max(s.y_min, ty0), y1 = std::min(s.y_max, ty1);
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    T dx, dy, alpha, gauss;
                    const T power          = detail::splat_power(s, x, y, dx, dy);
                    const AlphaState state = detail::splat_alpha(s, power, alpha, gauss);
                    if (state == AlphaState::Skipped)
                        continue;
                    ++pairs;
                    if (structure)
                        digest += detail::pair_digest(s.id, static_cast<std::uint32_t>(y * grid.width + x), state);
                    const T aw  = alpha * s.weight;
                    auto &acc   = image_acc.at(x, y);
                    acc.p[0] += s.color[0] * aw;
                    acc.p[1] += s.color[1] * aw;
                    acc.p[2] += s.color[2] * aw;
                    acc.q += aw;
                    acc.t *= (T(1) - alpha);
                    if (to_cache) {
                        auto &c = cache_acc->at(x, y);
                        c.p[0] += s.color[0] * aw;
                        c.p[1] += s.color[1] * aw;
                        c.p[2] += s.color[2] * aw;
                        c.q += aw;
                        c.t *= (T(1) - alpha);
                    }
                }
            }
        }
    }
    if (structure)
        *structure += digest;
    return pairs;
}

template <typename T> std::uint64_t q_digest(const AccumGrid<T> &acc) {
    std::uint64_t h = 0;
    for (std::size_t i = 0; i < acc.px.size(); ++i)
        if (acc.px[i].q > T(0))
            h += detail::mix64(0xABCD000000000000ull ^ i);
    return h;
}

} // namespace

template <typename T> Image<T> resolve(const AccumGrid<T> &acc, const Vec3<T> &background) {
    Image<T> img(acc.width, acc.height, 3);
    for (std::size_t i = 0; i < acc.px.size(); ++i) {
        const auto &a = acc.px[i];
        T *out        = img.data.data() + 3 * i;
        if (a.q > T(0)) {
            const T inv_q = T(1) / std::max(a.q, T(kQFloor));
            for (int c = 0; c < 3; ++c)
                out[c] = a.t * background[c] + (T(1) - a.t) * a.p[c] * inv_q;
        } else {
            for (int c = 0; c < 3; ++c)
                out[c] = background[c];
        }
    }
    return img;
}

template <typename T>
RenderOutput<T> render_oit(const GaussianCloud<T> &cloud, const Camera &cam, const Vec3<T> &background,
                           const std::type_identity_t<AccumGrid<T>> *base, const RenderOptions &opts) {
    cam.validate();
    if (base && !base->matches(cam))
        throw ContractViolation("render_oit: base accumulators are " + std::to_string(base->width) + "x" +
                                std::to_string(base->height) + " but the camera is " + std::to_string(cam.width) +
                                "x" + std::to_string(cam.height));
    Batch<T> batch;
    for (std::uint32_t i : processing_order(cloud.size(), opts))
        add_to_batch(batch, cloud, i, cam, false, opts.trace_structure);

    RenderOutput<T> out;
    AccumGrid<T> acc = base ? *base : AccumGrid<T>::empty(cam.width, cam.height);
    std::uint64_t structure = batch.structure;
    out.splat_pixel_pairs =
        rasterize<T>(batch, TileGrid(cam.width, cam.height), acc, nullptr, opts.trace_structure ? &structure : nullptr);
    out.image = resolve(acc, background);
    if (opts.trace_structure)
        out.structure_hash = structure + q_digest(acc);
    if (opts.keep_accumulators)
        out.acc = std::move(acc);
    return out;
}

template <typename T>
RenderOutput<T> render_with_prerender(const GaussianCloud<T> &cloud, const ActiveMask &active, const Camera &cam,
                                      PrerenderEntry<T> &entry, std::int64_t stage, const Vec3<T> &background,
                                      std::span<const std::uint8_t> bake, const RenderOptions &opts) {
    cam.validate();
    if (active.size() != cloud.size())
        throw ContractViolation("render_with_prerender: active mask size does not match the cloud");
    if (!bake.empty() && bake.size() != cloud.size())
        throw ContractViolation("render_with_prerender: bake mask size does not match the cloud");
    if (!entry.acc.matches(cam))
        throw ContractViolation("render_with_prerender: pre-render entry size does not match the camera");
    if (bake.empty() && entry.stamp != stage)
        throw ContractViolation("render_with_prerender: pre-render entry stamped " + std::to_string(entry.stamp) +
                                " is stale at stage " + std::to_string(stage));

    Batch<T> batch;
    for (std::uint32_t i : processing_order(cloud.size(), opts)) {
        const bool baked = !bake.empty() && bake[i];
        if (baked && active[i])
            throw ContractViolation("render_with_prerender: Gaussian " + std::to_string(i) +
                                    " is both active and scheduled for bake-in");
        if (active[i] || baked)
            add_to_batch(batch, cloud, i, cam, baked, opts.trace_structure);
    }

    RenderOutput<T> out;
    AccumGrid<T> acc        = entry.acc;
    std::uint64_t structure = batch.structure;
    out.splat_pixel_pairs   = rasterize<T>(batch, TileGrid(cam.width, cam.height), acc, bake.empty() ? nullptr : &entry.acc,
                                        opts.trace_structure ? &structure : nullptr);
    if (!bake.empty())
        entry.stamp = stage;
    out.image = resolve(acc, background);
    if (opts.trace_structure)
        out.structure_hash = structure + q_digest(acc);
    if (opts.keep_accumulators)
        out.acc = std::move(acc);
    return out;
}

template <typename T>
std::uint64_t accumulate_splats(const GaussianCloud<T> &cloud, std::span<const std::uint8_t> selected,
                                const Camera &cam, AccumGrid<T> &grid) {
    if (selected.size() != cloud.size())
        throw ContractViolation("accumulate_splats: selection size does not match the cloud");
    if (!grid.matches(cam))
        throw ContractViolation("accumulate_splats: grid size does not match the camera");
    Batch<T> batch;
    for (std::uint32_t i = 0; i < cloud.size(); ++i)
        if (selected[i])
            add_to_batch(batch, cloud, i, cam, false, false);
    return rasterize<T>(batch, TileGrid(cam.width, cam.height), grid, nullptr, nullptr);
}

template <typename T>
RenderOutput<T> render_sorted(const GaussianCloud<T> &cloud, const Camera &cam, const Vec3<T> &background,
                              const RenderOptions &opts) {
    cam.validate();
    Batch<T> batch;
    for (std::uint32_t i : processing_order(cloud.size(), opts))
        add_to_batch(batch, cloud, i, cam, false, false);

    const TileGrid grid(cam.width, cam.height);
    std::vector<std::vector<std::uint32_t>> tiles(grid.count());
    for (std::uint32_t k = 0; k < batch.splats.size(); ++k) {
        const auto &s = batch.splats[k];
        for (int ty = s.y_min / grid.tile_size; ty <= s.y_max / grid.tile_size; ++ty)
            for (int tx = s.x_min / grid.tile_size; tx <= s.x_max / grid.tile_size; ++tx)
                tiles[ty * grid.tiles_x + tx].push_back(k);
    }
    // Depth order per tile; ties broken by Gaussian index so the result does not depend on input order.
    for (auto &list : tiles)
        std::sort(list.begin(), list.end(), [&](std::uint32_t a, std::uint32_t b) {
            const auto &sa = batch.splats[a];
            const auto &sb = batch.splats[b];
            return sa.depth != sb.depth ? sa.depth < sb.depth : sa.id < sb.id;
        });

    RenderOutput<T> out;
    out.image            = Image<T>(cam.width, cam.height, 3);
    std::uint64_t pairs  = 0;
    const int tile_count = grid.count();
#pragma omp parallel for schedule(dynamic, 1) reduction(+ : pairs)
    for (int tile = 0; tile < tile_count; ++tile) {
        const int tx0 = (tile % grid.tiles_x) * grid.tile_size;
        const int ty0 = (tile / grid.tiles_x) * grid.tile_size;
        const int tx1 = std::min(tx0 + grid.tile_size, grid.width) - 1;
        const int ty1 = std::min(ty0 + grid.tile_size, grid.height) - 1;
        for (int y = ty0; y <= ty1; ++y) {
            for (int x = tx0; x <= tx1; ++x) {
                T trans   = T(1);
                Vec3<T> c = Vec3<T>::Zero();
                for (std::uint32_t k : tiles[tile]) {
                    const auto &s = batch.splats[k];
                    if (x < s.x_min || x > s.x_max || y < s.y_min || y > s.y_max)
                        continue;
                    T dx, dy, alpha, gauss;
                    const T power = detail::splat_power(s, x, y, dx, dy);
                    if (detail::splat_alpha(s, power, alpha, gauss) == AlphaState::Skipped)
                        continue;
                    ++pairs;
                    c += trans * alpha * s.color;
                    trans *= (T(1) - alpha);
                    if (trans < T(kSortedMinTrans))
                        break;
                }
                for (int ch = 0; ch < 3; ++ch)
                    out.image.at(x, y, ch) = c[ch] + trans * background[ch];
            }
        }
    }
    out.splat_pixel_pairs = pairs;
    return out;
}

#define SOIT_INSTANTIATE(T)                                                                                       \
    template Image<T> resolve<T>(const AccumGrid<T> &, const Vec3<T> &);                                          \
    template RenderOutput<T> render_oit<T>(const GaussianCloud<T> &, const Camera &, const Vec3<T> &,             \
                                           const AccumGrid<T> *, const RenderOptions &);                          \
    template RenderOutput<T> render_sorted<T>(const GaussianCloud<T> &, const Camera &, const Vec3<T> &,          \
                                              const RenderOptions &);                                             \
    template RenderOutput<T> render_with_prerender<T>(const GaussianCloud<T> &, const ActiveMask &,               \
                                                      const Camera &, PrerenderEntry<T> &, std::int64_t,          \
                                                      const Vec3<T> &, std::span<const std::uint8_t>,             \
                                                      const RenderOptions &);                                     \
    template std::uint64_t accumulate_splats<T>(const GaussianCloud<T> &, std::span<const std::uint8_t>,          \
                                                const Camera &, AccumGrid<T> &);

SOIT_INSTANTIATE(float)
SOIT_INSTANTIATE(double)

} // namespace soit

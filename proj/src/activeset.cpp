// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/activeset.hpp>

#include <soit/loss.hpp>

#include <algorithm>
#include <limits>
#include <random>
#include <string>

namespace soit {

int default_update_interval(std::size_t n_views) { return 2 * n_views >= 500 ? 600 : 500; }

void ActiveSetState::reset(std::size_t n) {
    active.assign(n, 1);
    frozen_stage.assign(n, -1);
    stage          = 0;
    thresholds     = {};
    thresholds_set = false;
}

std::size_t ActiveSetState::active_count() const {
    return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t(1)));
}

ActiveMask ActiveSetState::frozen_since(std::int64_t stamp) const {
    ActiveMask mask(active.size(), 0);
    for (std::size_t i = 0; i < active.size(); ++i)
        mask[i] = frozen_stage[i] > stamp && frozen_stage[i] <= stage ? 1 : 0;
    return mask;
}

void ActiveSetState::remap(std::span<const std::size_t> source) {
    ActiveMask a(source.size());
    std::vector<std::int64_t> f(source.size());
    for (std::size_t k = 0; k < source.size(); ++k) {
        a[k] = active.at(source[k]);
        f[k] = frozen_stage.at(source[k]);
    }
    active       = std::move(a);
    frozen_stage = std::move(f);
}

void PreRenderCache::reset(std::size_t n_views) {
    entries.assign(n_views, {});
    allocated.assign(n_views, 0);
}

PrerenderEntry<float> &PreRenderCache::entry(std::size_t view, const Camera &cam) {
    if (view >= entries.size())
        throw ContractViolation("PreRenderCache: view " + std::to_string(view) + " out of range (" +
                                std::to_string(entries.size()) + " views)");
    if (!allocated[view]) {
        entries[view].acc   = AccumGrid<float>::empty(cam.width, cam.height);
        entries[view].stamp = 0;
        allocated[view]     = 1;
    }
    return entries[view];
}

void PreRenderCache::invalidate(std::int64_t stage) {
    for (std::size_t v = 0; v < entries.size(); ++v) {
        if (!allocated[v])
            continue;
        entries[v].acc   = AccumGrid<float>::empty(entries[v].acc.width, entries[v].acc.height);
        entries[v].stamp = stage;
    }
}

std::size_t PreRenderCache::bytes() const {
    std::size_t b = 0;
    for (const auto &e : entries)
        b += e.acc.px.size() * sizeof(PixelAccumulator<float>);
    return b;
}

ActiveMask classify_active(const std::vector<std::array<double, kNumAttrs>> &norms,
                           const std::array<double, kNumAttrs> &thresholds, const ActiveMask &previous) {
    if (norms.size() != previous.size())
        throw ContractViolation("classify_active: " + std::to_string(norms.size()) + " norm rows for " +
                                std::to_string(previous.size()) + " Gaussians");
    ActiveMask out(norms.size(), 0);
    for (std::size_t i = 0; i < norms.size(); ++i) {
        if (!previous[i])
            continue;
        for (int a = 0; a < kNumAttrs; ++a) {
            if (norms[i][a] > thresholds[a]) {
                out[i] = 1;
                break;
            }
        }
    }
    return out;
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Eigen::Vector3d> points, std::size_t count,
                                                 std::size_t first) {
    if (count > points.size())
        throw ContractViolation("farthest_point_sampling: requested " + std::to_string(count) + " of " +
                                std::to_string(points.size()) + " points");
    if (count == 0)
        return {};
    if (first >= points.size())
        throw ContractViolation("farthest_point_sampling: initial index out of range");
    std::vector<std::size_t> picked{first};
    std::vector<double> dist(points.size(), std::numeric_limits<double>::infinity());
    std::vector<std::uint8_t> taken(points.size(), 0);
    taken[first] = 1;
    while (picked.size() < count) {
        const Eigen::Vector3d &last = points[picked.back()];
        std::size_t best            = points.size();
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (taken[i])
                continue;
            dist[i] = std::min(dist[i], (points[i] - last).norm());
            if (best == points.size() || dist[i] > dist[best])
                best = i;
        }
        taken[best] = 1;
        picked.push_back(best);
    }
    return picked;
}

std::vector<std::size_t> subsample_views(std::span<const Camera> cameras, std::size_t count, std::uint64_t seed) {
    if (count > cameras.size())
        throw ContractViolation("subsample_views: S = " + std::to_string(count) + " exceeds the " +
                                std::to_string(cameras.size()) + " available views");
    if (count == 0)
        return {};
    std::vector<Eigen::Vector3d> centers;
    for (const auto &c : cameras)
        centers.push_back(c.focal_point());
    std::mt19937_64 rng(seed);
    const std::size_t first = std::uniform_int_distribution<std::size_t>(0, cameras.size() - 1)(rng);
    return farthest_point_sampling(centers, count, first);
}

std::uint64_t reconcile_cache(const GaussianCloud<float> &cloud, const Camera &cam, const ActiveSetState &state,
                              PrerenderEntry<float> &entry) {
    if (state.size() != cloud.size())
        throw ContractViolation("reconcile_cache: active-set state does not match the cloud");
    if (entry.stamp > state.stage)
        throw ContractViolation("reconcile_cache: entry stamped in the future");
    std::uint64_t pairs = 0;
    if (entry.stamp < state.stage) {
        const ActiveMask fresh = state.frozen_since(entry.stamp);
        if (std::find(fresh.begin(), fresh.end(), std::uint8_t(1)) != fresh.end())
            pairs = accumulate_splats(cloud, std::span<const std::uint8_t>(fresh), cam, entry.acc);
    }
    entry.stamp = state.stage;
    return pairs;
}

std::array<double, kNumAttrs> median_thresholds(const std::vector<std::array<double, kNumAttrs>> &norms,
                                                double fraction) {
    std::array<double, kNumAttrs> out{};
    if (norms.empty())
        return out;
    std::vector<double> col(norms.size());
    for (int a = 0; a < kNumAttrs; ++a) {
        for (std::size_t i = 0; i < norms.size(); ++i)
            col[i] = norms[i][a];
        const std::size_t mid = col.size() / 2;
        std::nth_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(mid), col.end());
        double median = col[mid];
        if (col.size() % 2 == 0) {
            const double lower = *std::max_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(mid));
            median             = 0.5 * (median + lower);
        }
        out[a] = fraction * median;
    }
    return out;
}

std::vector<std::array<double, kNumAttrs>> subsample_gradient_norms(const GaussianCloud<float> &cloud,
                                                                    const ViewSet &views,
                                                                    std::span<const std::size_t> selected,
                                                                    PreRenderCache &cache, ActiveSetState &state,
                                                                    const Vec3<float> &background,
                                                                    double lambda_ssim, double *mean_loss,
                                                                    std::uint64_t *pairs) {
    GradientBuffer<float> grads(cloud.size());
    std::vector<std::array<double, kNumAttrs>> norms(cloud.size());
    double loss_sum     = 0;
    std::uint64_t work  = 0;
    const double inv_s  = selected.empty() ? 0.0 : 1.0 / static_cast<double>(selected.size());
    RenderOptions ropts;
    for (std::size_t v : selected) {
        const Camera &cam = views.cameras[v];
        auto &entry       = cache.entry(v, cam);
        RenderOutput<float> out;
        if (entry.stamp < state.stage) {
            const ActiveMask fresh = state.frozen_since(entry.stamp);
            out = render_with_prerender(cloud, state.active, cam, entry, state.stage, background,
                                        std::span<const std::uint8_t>(fresh), ropts);
        } else {
            out = render_with_prerender(cloud, state.active, cam, entry, state.stage, background, {}, ropts);
        }
        work += out.splat_pixel_pairs;
        const LossResult<float> loss = image_loss(out.image, views.images[v], lambda_ssim);
        loss_sum += loss.value;
        grads.reset(cloud.size());
        backward_oit(cloud, cam, out.acc, loss.grad, background, state.active, grads);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const auto n = grads.attribute_norms(i);
            for (int a = 0; a < kNumAttrs; ++a)
                norms[i][a] += inv_s * static_cast<double>(n[a]);
        }
    }
    if (mean_loss)
        *mean_loss = selected.empty() ? 0.0 : loss_sum / static_cast<double>(selected.size());
    if (pairs)
        *pairs = work;
    return norms;
}

ActiveSetUpdate update_active_set(const GaussianCloud<float> &cloud, const ViewSet &views, PreRenderCache &cache,
                                  ActiveSetState &state, const ActiveSetConfig &config,
                                  const Vec3<float> &background, double lambda_ssim, std::uint64_t seed,
                                  int iteration) {
    if (state.size() != cloud.size())
        throw ContractViolation("update_active_set: active-set state does not match the cloud");
    if (views.cameras.size() != views.images.size())
        throw ContractViolation("update_active_set: camera and image counts differ");

    if (config.refresh_every > 0 && state.stage > 0 && state.stage % config.refresh_every == 0) {
        std::fill(state.active.begin(), state.active.end(), std::uint8_t(1));
        std::fill(state.frozen_stage.begin(), state.frozen_stage.end(), std::int64_t(-1));
        cache.invalidate(state.stage);
    }

    ActiveSetUpdate rec;
    rec.iteration = iteration;
    rec.views     = subsample_views(views.cameras, static_cast<std::size_t>(config.subsample_count), seed);
    const auto norms = subsample_gradient_norms(cloud, views, rec.views, cache, state, background, lambda_ssim,
                                                &rec.mean_loss, &rec.splat_pixel_pairs);
    if (!state.thresholds_set) {
        state.thresholds     = config.thresholds ? *config.thresholds : median_thresholds(norms, config.threshold_fraction);
        state.thresholds_set = true;
    }
    const ActiveMask next = classify_active(norms, state.thresholds, state.active);
    ++state.stage;
    for (std::size_t i = 0; i < next.size(); ++i) {
        if (state.active[i] && !next[i]) {
            state.frozen_stage[i] = state.stage;
            ++rec.frozen_this_stage;
        }
    }
    state.active     = next;
    rec.stage        = state.stage;
    rec.active_count = state.active_count();
    rec.thresholds   = state.thresholds;
    return rec;
}

} // namespace soit

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/train.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace soit {

void TrainConfig::validate() const {
    if (iterations < 0)
        throw InvalidParameter("train: iterations must be non-negative");
    if (active.activation_iteration < 0 || active.activation_iteration > iterations)
        throw InvalidParameter("train: activation iteration K must lie in [0, iterations]");
    if (active.update_interval <= 0)
        throw InvalidParameter("train: update interval must be positive");
    if (active.subsample_count <= 0)
        throw InvalidParameter("train: subsample count must be positive");
    if (!(active.threshold_fraction >= 0))
        throw InvalidParameter("train: threshold fraction must be non-negative");
    if (!(lambda_ssim >= 0 && lambda_ssim <= 1))
        throw InvalidParameter("train: lambda_ssim must lie in [0, 1]");
    lr.validate();
    densify.validate();
}

double scene_extent(std::span<const Camera> cameras) {
    if (cameras.empty())
        return 1.0;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto &c : cameras)
        mean += c.focal_point();
    mean /= static_cast<double>(cameras.size());
    double radius = 0;
    for (const auto &c : cameras)
        radius = std::max(radius, (c.focal_point() - mean).norm());
    return 1.1 * (radius > 0 ? radius : 1.0);
}

GaussianCloud<float> init_from_points(const PointCloud &points, std::span<const Camera> cameras) {
    const std::size_t n = points.size();
    if (n == 0)
        throw InvalidParameter("init_from_points: the point cloud is empty");
    GaussianCloud<float> cloud(n);

    std::vector<double> knn(n, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double best[3] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity()};
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i)
                continue;
            const double d2 = (points.positions[i] - points.positions[j]).cast<double>().squaredNorm();
            if (d2 < best[2]) {
                best[2] = d2;
                if (best[2] < best[1])
                    std::swap(best[1], best[2]);
                if (best[1] < best[0])
                    std::swap(best[0], best[1]);
            }
        }
        double sum = 0;
        int cnt    = 0;
        for (double b : best)
            if (std::isfinite(b)) {
                sum += b;
                ++cnt;
            }
        knn[i] = cnt ? sum / cnt : 1e-4;
    }

    const float weight_dc = static_cast<float>(inverse_softplus(1.0) / kShC0);
    for (std::size_t i = 0; i < n; ++i) {
        const float log_s = static_cast<float>(std::log(std::sqrt(std::max(knn[i], 1e-7))));
        for (int c = 0; c < 3; ++c) {
            cloud.mu[3 * i + c]                 = points.positions[i][c];
            cloud.log_scale[3 * i + c]          = log_s;
            cloud.sh_color[kColorWidth * i + c] = static_cast<float>((points.colors[i][c] - 0.5) / kShC0);
        }
        cloud.quat[4 * i]             = 1.0f;
        cloud.opacity_logit[i]        = static_cast<float>(logit(0.1));
        cloud.weight_sh[kShCoeffs * i] = weight_dc;
    }

    std::vector<double> depths;
    for (const auto &cam : cameras) {
        const Eigen::Matrix3d r = cam.rotation();
        const Eigen::Vector3d t = cam.translation();
        for (const auto &p : points.positions) {
            const double d = (r * p.cast<double>() + t).z();
            if (d > cam.near)
                depths.push_back(d);
        }
    }
    double sigma = 1.0;
    if (!depths.empty()) {
        const std::size_t k = std::min(depths.size() - 1, static_cast<std::size_t>(0.9 * depths.size()));
        std::nth_element(depths.begin(), depths.begin() + static_cast<std::ptrdiff_t>(k), depths.end());
        sigma = depths[k];
    }
    cloud.log_sigma = static_cast<float>(std::log(sigma));
    return cloud;
}

EvalResult evaluate(const GaussianCloud<float> &cloud, const Dataset &data, std::span<const std::size_t> views,
                    const Vec3<float> &background) {
    EvalResult res;
    RenderOptions opts;
    opts.keep_accumulators = false;
    for (std::size_t v : views) {
        const Image<float> img = render_oit(cloud, data.cameras.at(v), background, nullptr, opts).image;
        res.psnr.push_back(psnr(img, data.images.at(v)));
        res.ssim.push_back(ssim(img, data.images.at(v)));
    }
    if (!views.empty()) {
        res.mean_psnr = std::accumulate(res.psnr.begin(), res.psnr.end(), 0.0) / static_cast<double>(views.size());
        res.mean_ssim = std::accumulate(res.ssim.begin(), res.ssim.end(), 0.0) / static_cast<double>(views.size());
    }
    return res;
}

namespace {

/// Shuffled pass over the training views, refilled when exhausted.
class ViewSampler {
  public:
    ViewSampler(std::size_t n, std::uint64_t seed) : n_(n), rng_(seed) {}
    std::size_t next() {
        if (stack_.empty()) {
            stack_.resize(n_);
            std::iota(stack_.begin(), stack_.end(), std::size_t(0));
            std::shuffle(stack_.begin(), stack_.end(), rng_);
        }
        const std::size_t v = stack_.back();
        stack_.pop_back();
        return v;
    }

  private:
    std::size_t n_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> stack_;
};

} // namespace

TrainResult train(const Dataset &data, const TrainConfig &config_in, std::optional<GaussianCloud<float>> init,
                  const ProgressFn &progress) {
    TrainConfig config = config_in;
    config.validate();
    if (data.train.size() < 2 && data.size() < 2)
        throw InvalidParameter("train: need at least two views");

    const std::vector<Camera> cams        = data.train_cameras();
    const std::vector<Image<float>> imgs  = data.train_images();
    const ViewSet views{cams, imgs};
    const double extent = scene_extent(cams);
    config.lr.spatial_scale = extent;
    if (config.lr.position_max_steps <= 0)
        config.lr.position_max_steps = std::max(1, config.iterations);
    config.densify.until_iteration = std::min(config.densify.until_iteration, config.active.activation_iteration);

    TrainResult res;
    if (init) {
        res.cloud = std::move(*init);
    } else {
        if (!data.init_points)
            throw InvalidParameter("train: the dataset has no init points and no initial cloud was given");
        res.cloud = init_from_points(*data.init_points, cams);
    }
    res.cloud.validate();
    const std::size_t n0 = res.cloud.size();
    res.adam.reset(n0);
    res.active.reset(n0);
    DensifyStats stats;
    stats.reset(n0);
    PreRenderCache cache;
    cache.reset(cams.size());

    ViewSampler sampler(cams.size(), config.seed ^ 0x5157A11E5EEDull);
    std::mt19937_64 densify_rng(config.seed ^ 0xD3E51F1ull);
    const auto t_start = std::chrono::steady_clock::now();
    const int k_act    = config.active.activation_iteration;

    for (int it = 0; it < config.iterations; ++it) {
        const auto t0       = std::chrono::steady_clock::now();
        const bool phase2   = config.active_set_enabled && it >= k_act;
        std::uint64_t pairs = 0;

        if (phase2 && (it - k_act) % config.active.update_interval == 0) {
            ActiveSetUpdate up = update_active_set(res.cloud, views, cache, res.active, config.active,
                                                   config.background, config.lambda_ssim,
                                                   config.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(it),
                                                   it);
            pairs += up.splat_pixel_pairs;
            res.updates.push_back(std::move(up));
            if (config.halt_when_empty && res.active.active_count() == 0) {
                res.halted_early = true;
                break;
            }
        }

        const std::size_t v = sampler.next();
        const Camera &cam   = cams[v];
        RenderOutput<float> out;
        if (phase2) {
            auto &entry = cache.entry(v, cam);
            if (entry.stamp < res.active.stage) {
                const ActiveMask fresh = res.active.frozen_since(entry.stamp);
                out = render_with_prerender(res.cloud, res.active.active, cam, entry, res.active.stage,
                                            config.background, std::span<const std::uint8_t>(fresh));
            } else {
                out = render_with_prerender(res.cloud, res.active.active, cam, entry, res.active.stage,
                                            config.background);
            }
            if (config.verify_cache) {
                RenderOptions o;
                o.keep_accumulators = false;
                const Image<float> full = render_oit(res.cloud, cam, config.background, nullptr, o).image;
                for (std::size_t k = 0; k < full.data.size(); ++k)
                    res.max_cache_error =
                        std::max(res.max_cache_error, static_cast<double>(std::abs(full.data[k] - out.image.data[k])));
                if (res.max_cache_error > config.verify_tolerance)
                    throw ContractViolation("train: cached render deviates from the full render by " +
                                            std::to_string(res.max_cache_error) + " at iteration " +
                                            std::to_string(it));
            }
        } else {
            out = render_oit(res.cloud, cam, config.background);
        }
        pairs += out.splat_pixel_pairs;

        const LossResult<float> loss = image_loss(out.image, imgs[v], config.lambda_ssim);
        GradientBuffer<float> grads(res.cloud.size());
        backward_oit(res.cloud, cam, out.acc, loss.grad, config.background, res.active.active, grads);

        const bool update_sigma = config.learn_sigma && !res.active.any_frozen();
        adam_step(res.cloud, grads, res.adam, res.active.active, config.lr, it, update_sigma);

        if (config.densify_enabled && it < config.densify.until_iteration) {
            stats.add(grads);
            if (config.densify.due(it)) {
                DensifyResult d = densify_and_prune(res.cloud, stats, config.densify, extent, densify_rng);
                res.adam.remap(d.source, d.fresh);
                res.active.remap(d.source);
                stats.reset(res.cloud.size());
                res.densified_clones += d.cloned;
                res.densified_splits += d.split;
                res.pruned += d.pruned;
            }
        }

        IterationRecord rec;
        rec.iteration         = it;
        rec.loss              = loss.value;
        rec.active_count      = res.active.active_count();
        rec.splat_pixel_pairs = pairs;
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        res.iterations.push_back(rec);
        res.iterations_run = it + 1;
        if (progress)
            progress(rec);
        if (config.eval_every > 0 && (it + 1) % config.eval_every == 0 && !data.test.empty()) {
            const EvalResult e = evaluate(res.cloud, data, data.test, config.background);
            res.evals.push_back({it + 1, e.mean_psnr, e.mean_ssim});
        }
    }
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

} // namespace soit

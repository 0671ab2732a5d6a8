// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/densify.hpp>

#include <cmath>

namespace soit {

void DensifyConfig::validate() const {
    if (!(probability >= 0 && probability <= 1))
        throw InvalidParameter("densify: sampling probability must lie in [0, 1]");
    if (!(grad_threshold >= 0) || !(prune_opacity >= 0) || !(percent_dense > 0))
        throw InvalidParameter("densify: thresholds must be non-negative");
}

void DensifyStats::reset(std::size_t n) {
    grad_sum.assign(n, 0.0);
    count.assign(n, 0);
}

void DensifyStats::add(const GradientBuffer<float> &grads) {
    if (grads.size() != grad_sum.size())
        throw ContractViolation("DensifyStats::add: gradient buffer size does not match the statistics");
    for (std::size_t i = 0; i < grad_sum.size(); ++i) {
        if (!grads.visible[i])
            continue;
        grad_sum[i] += grads.screen_grad[i];
        ++count[i];
    }
}

DensifyResult densify_and_prune(GaussianCloud<float> &cloud, const DensifyStats &stats, const DensifyConfig &config,
                                double scene_extent, std::mt19937_64 &rng) {
    config.validate();
    const std::size_t n = cloud.size();
    if (stats.grad_sum.size() != n)
        throw ContractViolation("densify_and_prune: statistics do not match the cloud");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<std::size_t> clones, splits;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(stats.mean(i) >= config.grad_threshold) || stats.count[i] == 0)
            continue;
        if (!(unit(rng) < config.probability))
            continue;
        if (cloud.scale(i).maxCoeff() <= config.percent_dense * scene_extent)
            clones.push_back(i);
        else
            splits.push_back(i);
    }

    std::vector<std::uint8_t> is_split(n, 0);
    for (std::size_t i : splits)
        is_split[i] = 1;

    DensifyResult res;
    for (std::size_t i = 0; i < n; ++i)
        if (!is_split[i]) {
            res.source.push_back(i);
            res.fresh.push_back(0);
        }
    for (std::size_t i : clones) {
        res.source.push_back(i);
        res.fresh.push_back(1);
    }
    const std::size_t split_begin = res.source.size();
    for (std::size_t i : splits)
        for (int k = 0; k < 2; ++k) {
            res.source.push_back(i);
            res.fresh.push_back(1);
        }

    GaussianCloud<float> grown;
    static_cast<GaussianParams<float> &>(grown) = cloud.gather(res.source);
    for (std::size_t k = split_begin; k < res.source.size(); ++k) {
        const std::size_t parent = res.source[k];
        const Vec3<float> s      = cloud.scale(parent);
        const Mat3<float> r      = quat_to_rotation<float>(cloud.rotation(parent).normalized());
        const Vec3<float> z(static_cast<float>(normal(rng)), static_cast<float>(normal(rng)),
                            static_cast<float>(normal(rng)));
        const Vec3<float> mu = r * s.cwiseProduct(z) + cloud.position(parent);
        for (int c = 0; c < 3; ++c) {
            grown.mu[3 * k + c]        = mu[c];
            grown.log_scale[3 * k + c] = std::log(s[c] / 1.6f);
        }
    }
    res.cloned = clones.size();
    res.split  = splits.size();

    std::vector<std::size_t> keep;
    std::vector<std::uint8_t> keep_fresh;
    std::vector<std::size_t> final_source;
    for (std::size_t k = 0; k < grown.size(); ++k) {
        if (grown.opacity(k) < config.prune_opacity) {
            ++res.pruned;
            continue;
        }
        keep.push_back(k);
        final_source.push_back(res.source[k]);
        keep_fresh.push_back(res.fresh[k]);
    }
    static_cast<GaussianParams<float> &>(cloud) = grown.gather(keep);
    res.source = std::move(final_source);
    res.fresh  = std::move(keep_fresh);
    return res;
}

} // namespace soit

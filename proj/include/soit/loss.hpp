// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <soit/common.hpp>

namespace soit {

inline constexpr int kSsimWindow     = 11;
inline constexpr double kSsimSigma   = 1.5;
inline constexpr double kSsimC1      = 0.01 * 0.01;
inline constexpr double kSsimC2      = 0.03 * 0.03;
inline constexpr double kDefaultLambdaSsim = 0.2;

template <typename T> struct LossResult {
    double value = 0;
    double l1    = 0;
    double ssim  = 0;
    Image<T> grad; // dL/dC, same shape as the image
};

/// L = (1 - lambda) * mean|C - target| + lambda * (1 - SSIM(C, target)), with the analytic gradient.
/// SSIM uses an 11x11 Gaussian window (sigma 1.5), zero padding, per channel, averaged over every
/// pixel and channel.
template <typename T>
LossResult<T> image_loss(const Image<T> &image, const Image<T> &target, double lambda_ssim = kDefaultLambdaSsim,
                         bool with_grad = true);

/// Mean windowed SSIM over pixels and channels.
template <typename T> double ssim(const Image<T> &a, const Image<T> &b);

/// Peak signal-to-noise ratio for a peak of 1. Returns +inf for identical images.
template <typename T> double psnr(const Image<T> &a, const Image<T> &b);

/// Normalized 1-D Gaussian taps of the SSIM window.
std::vector<double> ssim_taps();

} // namespace soit

// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include <soit/loss.hpp>

#include <cmath>
#include <limits>
#include <string>

namespace soit {

std::vector<double> ssim_taps() {
    std::vector<double> taps(kSsimWindow);
    const int half = kSsimWindow / 2;
    double sum     = 0;
    for (int k = 0; k < kSsimWindow; ++k) {
        const double d = k - half;
        taps[k]        = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += taps[k];
    }
    for (double &t : taps)
        t /= sum;
    return taps;
}

namespace {

/// Separable zero-padded Gaussian blur of one w x h plane.
template <typename T>
void blur(const std::vector<T> &in, std::vector<T> &out, std::vector<T> &tmp, int w, int h,
          const std::vector<T> &taps) {
    const int half = kSsimWindow / 2;
    tmp.assign(in.size(), T(0));
    out.assign(in.size(), T(0));
    for (int y = 0; y < h; ++y) {
        const T *row = in.data() + static_cast<std::size_t>(y) * w;
        T *dst       = tmp.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            const int k0 = std::max(0, half - x), k1 = std::min(kSsimWindow, w - x + half);
            T acc        = T(0);
            for (int k = k0; k < k1; ++k)
                acc += taps[k] * row[x + k - half];
            dst[x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        const int k0 = std::max(0, half - y), k1 = std::min(kSsimWindow, h - y + half);
        T *dst       = out.data() + static_cast<std::size_t>(y) * w;
        for (int k = k0; k < k1; ++k) {
            const T tap = taps[k];
            const T *src = tmp.data() + static_cast<std::size_t>(y + k - half) * w;
            for (int x = 0; x < w; ++x)
                dst[x] += tap * src[x];
        }
    }
}

template <typename T> void check_shapes(const Image<T> &a, const Image<T> &b, const char *what) {
    if (!a.same_shape(b))
        throw ContractViolation(std::string(what) + ": image is " + std::to_string(a.width) + "x" +
                                std::to_string(a.height) + "x" + std::to_string(a.channels) + " but target is " +
                                std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                                std::to_string(b.channels));
}

/// Mean SSIM over the image; adds d(mean SSIM)/dx * scale into grad when given.
template <typename T> double ssim_impl(const Image<T> &xi, const Image<T> &yi, Image<T> *grad, T scale) {
    const int w = xi.width, h = xi.height, nc = xi.channels;
    const std::size_t n = xi.pixel_count();
    std::vector<T> taps;
    for (double t : ssim_taps())
        taps.push_back(static_cast<T>(t));
    const T c1 = T(kSsimC1), c2 = T(kSsimC2);
    const T inv_total = T(1) / static_cast<T>(n * nc);

    std::vector<T> x(n), y(n), sq(n), mx, my, exx, eyy, exy, tmp;
    std::vector<T> dm(n), de(n), df(n), bm, be, bf;
    double total = 0;
    for (int c = 0; c < nc; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = xi.data[i * nc + c];
            y[i] = yi.data[i * nc + c];
        }
        blur(x, mx, tmp, w, h, taps);
        blur(y, my, tmp, w, h, taps);
        for (std::size_t i = 0; i < n; ++i)
            sq[i] = x[i] * x[i];
        blur(sq, exx, tmp, w, h, taps);
        for (std::size_t i = 0; i < n; ++i)
            sq[i] = y[i] * y[i];
        blur(sq, eyy, tmp, w, h, taps);
        for (std::size_t i = 0; i < n; ++i)
            sq[i] = x[i] * y[i];
        blur(sq, exy, tmp, w, h, taps);

        for (std::size_t i = 0; i < n; ++i) {
            const T m = mx[i], u = my[i];
            const T n1 = T(2) * m * u + c1;
            const T n2 = T(2) * (exy[i] - m * u) + c2;
            const T d1 = m * m + u * u + c1;
            const T d2 = (exx[i] - m * m) + (eyy[i] - u * u) + c2;
            const T s  = n1 * n2 / (d1 * d2);
            total += static_cast<double>(s);
            if (grad) {
                const T gs = scale * inv_total;
                dm[i]      = gs * s * (T(2) * u / n1 - T(2) * u / n2 - T(2) * m / d1 + T(2) * m / d2);
                de[i]      = gs * -s / d2;
                df[i]      = gs * T(2) * s / n2;
            }
        }
        if (grad) {
            // The window is symmetric, so the adjoint of the zero-padded blur is the same blur.
            blur(dm, bm, tmp, w, h, taps);
            blur(de, be, tmp, w, h, taps);
            blur(df, bf, tmp, w, h, taps);
            for (std::size_t i = 0; i < n; ++i)
                grad->data[i * nc + c] += bm[i] + T(2) * x[i] * be[i] + y[i] * bf[i];
        }
    }
    return total / static_cast<double>(n * nc);
}

} // namespace

template <typename T>
LossResult<T> image_loss(const Image<T> &image, const Image<T> &target, double lambda_ssim, bool with_grad) {
    check_shapes(image, target, "image_loss");
    if (!(lambda_ssim >= 0 && lambda_ssim <= 1))
        throw InvalidParameter("image_loss: lambda_ssim must lie in [0, 1]");
    LossResult<T> out;
    if (with_grad)
        out.grad = Image<T>(image.width, image.height, image.channels);
    const std::size_t count = image.data.size();
    const T l1_scale        = static_cast<T>((1.0 - lambda_ssim) / static_cast<double>(count));
    double l1               = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const T r = image.data[i] - target.data[i];
        l1 += std::abs(static_cast<double>(r));
        if (with_grad)
            out.grad.data[i] = r > T(0) ? l1_scale : (r < T(0) ? -l1_scale : T(0));
    }
    out.l1 = l1 / static_cast<double>(count);
    if (lambda_ssim > 0) {
        out.ssim = ssim_impl(image, target, with_grad ? &out.grad : nullptr, static_cast<T>(-lambda_ssim));
    } else {
        out.ssim = ssim_impl<T>(image, target, nullptr, T(0));
    }
    out.value = (1.0 - lambda_ssim) * out.l1 + lambda_ssim * (1.0 - out.ssim);
    return out;
}

template <typename T> double ssim(const Image<T> &a, const Image<T> &b) {
    check_shapes(a, b, "ssim");
    return ssim_impl<T>(a, b, nullptr, T(0));
}

template <typename T> double psnr(const Image<T> &a, const Image<T> &b) {
    check_shapes(a, b, "psnr");
    double se = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double r = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        se += r * r;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse == 0)
        return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

#define SOIT_INSTANTIATE(T)                                                                                       \
    template LossResult<T> image_loss<T>(const Image<T> &, const Image<T> &, double, bool);                      \
    template double ssim<T>(const Image<T> &, const Image<T> &);                                                  \
    template double psnr<T>(const Image<T> &, const Image<T> &);

SOIT_INSTANTIATE(float)
SOIT_INSTANTIATE(double)

} // namespace soit

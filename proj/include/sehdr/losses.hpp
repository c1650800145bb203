// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "sehdr/image.hpp"

namespace sehdr {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

namespace detail {

inline const std::array<double, kSsimWindow * kSsimWindow>& ssim_window() {
    static const auto w = [] {
        std::array<double, kSsimWindow * kSsimWindow> out{};
        std::array<double, kSsimWindow> g{};
        double sum1d = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double x = i - kSsimWindow / 2;
            g[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
            sum1d += g[static_cast<std::size_t>(i)];
        }
        double total = sum1d * sum1d;
        for (int r = 0; r < kSsimWindow; ++r) {
            for (int c = 0; c < kSsimWindow; ++c) {
                out[static_cast<std::size_t>(r * kSsimWindow + c)] =
                    g[static_cast<std::size_t>(r)] * g[static_cast<std::size_t>(c)] / total;
            }
        }
        return out;
    }();
    return w;
}

// Same-size convolution with zero padding. The Gaussian window is
// symmetric, so this map is its own adjoint and the backward pass can
// reuse it directly.
inline std::vector<double> conv_same_zero(const std::vector<double>& img, int width,
                                          int height) {
    const auto& w = ssim_window();
    const int k = kSsimWindow / 2;
    std::vector<double> out(img.size(), 0.0);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int i = -k; i <= k; ++i) {
                const int rr = r + i;
                if (rr < 0 || rr >= height) continue;
                for (int j = -k; j <= k; ++j) {
                    const int cc = c + j;
                    if (cc < 0 || cc >= width) continue;
                    acc += img[static_cast<std::size_t>(rr) * width + cc] *
                           w[static_cast<std::size_t>((i + k) * kSsimWindow + (j + k))];
                }
            }
            out[static_cast<std::size_t>(r) * width + c] = acc;
        }
    }
    return out;
}

inline std::vector<double> channel_of(const ImagePlane& img, int ch) {
    std::vector<double> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = img.pixels[i][ch];
    return out;
}

}  // namespace detail

// Mean absolute error over pixels and channels.
inline double l1_loss(const ImagePlane& a, const ImagePlane& b) {
    check_same_shape(a, b, "l1_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += (a.pixels[i] - b.pixels[i]).cwiseAbs().sum();
    }
    return acc / (3.0 * static_cast<double>(a.size()));
}

// d l1 / d a; sign subgradient, 0 where the arguments agree exactly.
inline ImagePlane l1_backward(const ImagePlane& a, const ImagePlane& b) {
    check_same_shape(a, b, "l1_backward");
    ImagePlane grad(a.width, a.height, a.domain);
    const double norm = 1.0 / (3.0 * static_cast<double>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const double d = a.pixels[i][c] - b.pixels[i][c];
            grad.pixels[i][c] = d > 0.0 ? norm : (d < 0.0 ? -norm : 0.0);
        }
    }
    return grad;
}

// Per-channel SSIM maps averaged over channels and pixels. Optionally
// accumulates d ssim / d a and d ssim / d b into caller buffers.
inline double ssim(const ImagePlane& a, const ImagePlane& b, ImagePlane* da = nullptr,
                   ImagePlane* db = nullptr) {
    check_same_shape(a, b, "ssim");
    const int w = a.width;
    const int h = a.height;
    const std::size_t n = a.size();
    if (da != nullptr) *da = ImagePlane(w, h, a.domain);
    if (db != nullptr) *db = ImagePlane(w, h, b.domain);
    double total = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        const std::vector<double> xa = detail::channel_of(a, ch);
        const std::vector<double> xb = detail::channel_of(b, ch);
        std::vector<double> aa(n), bb(n), ab(n);
        for (std::size_t i = 0; i < n; ++i) {
            aa[i] = xa[i] * xa[i];
            bb[i] = xb[i] * xb[i];
            ab[i] = xa[i] * xb[i];
        }
        const std::vector<double> mu_a = detail::conv_same_zero(xa, w, h);
        const std::vector<double> mu_b = detail::conv_same_zero(xb, w, h);
        const std::vector<double> raw_aa = detail::conv_same_zero(aa, w, h);
        const std::vector<double> raw_bb = detail::conv_same_zero(bb, w, h);
        const std::vector<double> raw_ab = detail::conv_same_zero(ab, w, h);

        std::vector<double> d_mu_a, d_mu_b, d_raw_aa, d_raw_bb, d_raw_ab;
        const bool want_grad = da != nullptr || db != nullptr;
        if (want_grad) {
            d_mu_a.assign(n, 0.0);
            d_mu_b.assign(n, 0.0);
            d_raw_aa.assign(n, 0.0);
            d_raw_bb.assign(n, 0.0);
            d_raw_ab.assign(n, 0.0);
        }
        const double g = 1.0 / (3.0 * static_cast<double>(n));  // mean over maps and channels
        for (std::size_t i = 0; i < n; ++i) {
            const double va = raw_aa[i] - mu_a[i] * mu_a[i];
            const double vb = raw_bb[i] - mu_b[i] * mu_b[i];
            const double vab = raw_ab[i] - mu_a[i] * mu_b[i];
            const double a1 = 2.0 * mu_a[i] * mu_b[i] + kSsimC1;
            const double a2 = 2.0 * vab + kSsimC2;
            const double b1 = mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kSsimC1;
            const double b2 = va + vb + kSsimC2;
            const double m = (a1 * a2) / (b1 * b2);
            total += m * g;
            if (!want_grad) continue;
            const double dm_dva = -m / b2;
            const double dm_dvab = 2.0 * a1 / (b1 * b2);
            const double dm_dmua = 2.0 * mu_b[i] * a2 / (b1 * b2) - 2.0 * mu_a[i] * m / b1;
            const double dm_dmub = 2.0 * mu_a[i] * a2 / (b1 * b2) - 2.0 * mu_b[i] * m / b1;
            // chain variances back to the raw convolution outputs
            d_raw_aa[i] = g * dm_dva;
            d_raw_bb[i] = g * dm_dva;
            d_raw_ab[i] = g * dm_dvab;
            d_mu_a[i] = g * (dm_dmua - dm_dva * 2.0 * mu_a[i] - dm_dvab * mu_b[i]);
            d_mu_b[i] = g * (dm_dmub - dm_dva * 2.0 * mu_b[i] - dm_dvab * mu_a[i]);
        }
        if (!want_grad) continue;
        const std::vector<double> back_mu_a = detail::conv_same_zero(d_mu_a, w, h);
        const std::vector<double> back_mu_b = detail::conv_same_zero(d_mu_b, w, h);
        const std::vector<double> back_aa = detail::conv_same_zero(d_raw_aa, w, h);
        const std::vector<double> back_bb = detail::conv_same_zero(d_raw_bb, w, h);
        const std::vector<double> back_ab = detail::conv_same_zero(d_raw_ab, w, h);
        for (std::size_t i = 0; i < n; ++i) {
            if (da != nullptr) {
                da->pixels[i][ch] += back_mu_a[i] + back_aa[i] * 2.0 * xa[i] + back_ab[i] * xb[i];
            }
            if (db != nullptr) {
                db->pixels[i][ch] += back_mu_b[i] + back_bb[i] * 2.0 * xb[i] + back_ab[i] * xa[i];
            }
        }
    }
    return total;
}

inline double d_ssim(const ImagePlane& a, const ImagePlane& b) {
    return 0.5 * (1.0 - ssim(a, b));
}

struct LossResult {
    double value = 0.0;
    double l1 = 0.0;
    double ssim = 0.0;
    ImagePlane da;  // d value / d a
};

// L1 plus lambda-weighted structural dissimilarity, with the gradient
// taken with respect to the first (rendered) argument.
inline LossResult reconstruction_loss(const ImagePlane& a, const ImagePlane& b,
                                      double lambda) {
    LossResult out;
    out.l1 = l1_loss(a, b);
    ImagePlane dssim_da;
    out.ssim = ssim(a, b, &dssim_da);
    out.value = out.l1 + lambda * 0.5 * (1.0 - out.ssim);
    out.da = l1_backward(a, b);
    const double scale = -0.5 * lambda;
    for (std::size_t i = 0; i < out.da.size(); ++i) {
        out.da.pixels[i] += scale * dssim_da.pixels[i];
    }
    return out;
}

}  // namespace sehdr

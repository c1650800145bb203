// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sehdr/image.hpp"
#include "sehdr/losses.hpp"
#include "sehdr/response.hpp"

namespace sehdr {

inline constexpr double kPsnrCap = 99.0;

// PSNR over [0,1] images; identical inputs report the cap instead of infinity.
inline double psnr(const ImagePlane& a, const ImagePlane& b) {
    check_same_shape(a, b, "psnr");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        acc += (a.pixels[i] - b.pixels[i]).squaredNorm();
    }
    const double mse = acc / (3.0 * static_cast<double>(a.pixels.size()));
    if (!(mse > 0.0)) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

struct EvalRow {
    int view = 0;
    double psnr_mu = 0.0;
    double ssim_mu = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double norm_lo = 0.0;  // joint normalization bounds, recorded in the header
    double norm_hi = 0.0;
    bool ldr_only = false;
};

namespace detail {

inline void joint_min_max(const std::vector<ImagePlane>& a, const std::vector<ImagePlane>& b,
                          double& lo, double& hi) {
    lo = std::numeric_limits<double>::infinity();
    hi = -std::numeric_limits<double>::infinity();
    auto scan = [&](const std::vector<ImagePlane>& imgs) {
        for (const auto& img : imgs) {
            for (const auto& p : img.pixels) {
                lo = std::min(lo, p.minCoeff());
                hi = std::max(hi, p.maxCoeff());
            }
        }
    };
    scan(a);
    scan(b);
}

inline ImagePlane normalize_mu(const ImagePlane& img, double lo, double hi) {
    ImagePlane out(img.width, img.height, ColorDomain::Ldr);
    const double inv = hi > lo ? 1.0 / (hi - lo) : 0.0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            out.pixels[i][c] = mu_law((img.pixels[i][c] - lo) * inv);
        }
    }
    return out;
}

}  // namespace detail

// HDR evaluation: one joint min-max normalization across every prediction and
// reference, then the mu-law map, then PSNR/SSIM per view.
inline EvalReport evaluate_views(const std::vector<ImagePlane>& predictions,
                                 const std::vector<ImagePlane>& references,
                                 const std::vector<int>& view_ids) {
    if (predictions.size() != references.size() || predictions.size() != view_ids.size()) {
        throw std::invalid_argument("evaluate_views: list sizes differ");
    }
    if (predictions.empty()) throw std::invalid_argument("evaluate_views: no views");
    EvalReport report;
    detail::joint_min_max(predictions, references, report.norm_lo, report.norm_hi);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        check_same_shape(predictions[i], references[i], "evaluate_views");
        const ImagePlane pa = detail::normalize_mu(predictions[i], report.norm_lo, report.norm_hi);
        const ImagePlane pb = detail::normalize_mu(references[i], report.norm_lo, report.norm_hi);
        report.rows.push_back({view_ids[i], psnr(pa, pb), ssim(pa, pb)});
    }
    for (const auto& row : report.rows) {
        report.mean_psnr += row.psnr_mu;
        report.mean_ssim += row.ssim_mu;
    }
    report.mean_psnr /= static_cast<double>(report.rows.size());
    report.mean_ssim /= static_cast<double>(report.rows.size());
    return report;
}

// Display-domain fallback when no HDR references exist: straight PSNR/SSIM
// between [0,1] images, no normalization or mu-law.
inline EvalReport evaluate_views_ldr(const std::vector<ImagePlane>& predictions,
                                     const std::vector<ImagePlane>& references,
                                     const std::vector<int>& view_ids) {
    if (predictions.size() != references.size() || predictions.size() != view_ids.size()) {
        throw std::invalid_argument("evaluate_views_ldr: list sizes differ");
    }
    if (predictions.empty()) throw std::invalid_argument("evaluate_views_ldr: no views");
    EvalReport report;
    report.ldr_only = true;
    report.norm_lo = 0.0;
    report.norm_hi = 1.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        check_same_shape(predictions[i], references[i], "evaluate_views_ldr");
        report.rows.push_back({view_ids[i], psnr(predictions[i], references[i]),
                               ssim(predictions[i], references[i])});
    }
    for (const auto& row : report.rows) {
        report.mean_psnr += row.psnr_mu;
        report.mean_ssim += row.ssim_mu;
    }
    report.mean_psnr /= static_cast<double>(report.rows.size());
    report.mean_ssim /= static_cast<double>(report.rows.size());
    return report;
}

inline std::string format_report_csv(const EvalReport& report) {
    std::ostringstream out;
    out.precision(10);
    out << (report.ldr_only ? "view,psnr_ldr,ssim_ldr\n" : "view,psnr_mu,ssim_mu\n");
    for (const auto& row : report.rows) {
        out << row.view << "," << row.psnr_mu << "," << row.ssim_mu << "\n";
    }
    return out.str();
}

inline std::string format_report_summary(const EvalReport& report) {
    std::ostringstream out;
    out.precision(10);
    out << "sehdr evaluation summary\n";
    if (report.ldr_only) {
        out << "domain: ldr (no HDR references found)\n";
    } else {
        out << "domain: mu-law over joint min-max normalization, lo=" << report.norm_lo
            << " hi=" << report.norm_hi << "\n";
    }
    out << "views: " << report.rows.size() << "\n";
    out << "mean_psnr: " << report.mean_psnr << "\n";
    out << "mean_ssim: " << report.mean_ssim << "\n";
    out << "note: multi-scene results average across generator seeds; "
           "this report covers a single seed.\n";
    return out.str();
}

}  // namespace sehdr

// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sehdr/camera.hpp"
#include "sehdr/common.hpp"
#include "sehdr/gaussian.hpp"
#include "sehdr/image.hpp"

namespace sehdr {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovFloor = 0.3;        // 2D covariance diagonal floor, px^2
inline constexpr double kEtaCutoff = 1.0 / 255.0;
inline constexpr double kTransmittanceStop = 1e-4;

struct Splat {
    int index = 0;  // original gaussian index in the source set
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
    Eigen::Matrix2d conic = Eigen::Matrix2d::Identity();
    double depth = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();  // view-evaluated, pre-clamp
    double alpha = 0.0;
    Eigen::Vector3d viewdir = Eigen::Vector3d::UnitZ();
};

struct SplatList {
    int width = 0;
    int height = 0;
    std::vector<Splat> splats;  // ascending depth, ties by index
};

inline std::vector<Eigen::Vector3d> view_directions(const GaussianSet& set, const Camera& cam) {
    const Eigen::Vector3d c = cam.center();
    std::vector<Eigen::Vector3d> dirs(static_cast<std::size_t>(set.count()));
    for (int i = 0; i < set.count(); ++i) {
        dirs[static_cast<std::size_t>(i)] =
            (set.gaussians[static_cast<std::size_t>(i)].mean - c).normalized();
    }
    return dirs;
}

// EWA projection: camera-space mean, perspective Jacobian at the mean,
// cov2d = J W Sigma W^T J^T plus the low-pass floor. Gaussians closer than
// the near plane are culled.
inline SplatList project(const GaussianSet& set, const Camera& cam) {
    cam.validate();
    set.validate();
    SplatList out;
    out.width = cam.width;
    out.height = cam.height;
    const Eigen::Vector3d cam_center = cam.center();
    for (int i = 0; i < set.count(); ++i) {
        const Gaussian& g = set.gaussians[static_cast<std::size_t>(i)];
        const Eigen::Vector3d p = cam.world_to_cam(g.mean);
        if (p.z() < kNearPlane) continue;
        const double z = p.z();
        const double inv_z = 1.0 / z;
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx * inv_z, 0.0, -cam.fx * p.x() * inv_z * inv_z,
            0.0, cam.fy * inv_z, -cam.fy * p.y() * inv_z * inv_z;
        const Eigen::Matrix3d cov_cam = cam.rotation * covariance(g) * cam.rotation.transpose();
        Eigen::Matrix2d cov2d = jac * cov_cam * jac.transpose();
        cov2d(0, 0) += kCovFloor;
        cov2d(1, 1) += kCovFloor;

        Splat s;
        s.index = i;
        s.mean2d = Eigen::Vector2d(cam.fx * p.x() * inv_z + cam.cx,
                                   cam.fy * p.y() * inv_z + cam.cy);
        s.cov2d = cov2d;
        s.conic = cov2d.inverse();
        s.depth = z;
        s.viewdir = (g.mean - cam_center).normalized();
        s.color = eval_sh(g.sh, set.sh_degree, s.viewdir);
        s.alpha = sigmoid(g.opacity_logit);
        out.splats.push_back(s);
    }
    std::sort(out.splats.begin(), out.splats.end(), [](const Splat& a, const Splat& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.index < b.index;
    });
    return out;
}

// Replaces view-evaluated colors with externally computed per-Gaussian
// colors (used to render several radiance readings of one geometry).
inline void set_splat_colors(SplatList& splats, const std::vector<Eigen::Vector3d>& colors) {
    for (auto& s : splats.splats) {
        s.color = colors.at(static_cast<std::size_t>(s.index));
    }
}

struct Contrib {
    int splat = 0;        // position in SplatList
    double eta = 0.0;
    double t_before = 0.0;
};

struct RenderTrace {
    int width = 0;
    int height = 0;
    std::vector<std::vector<Contrib>> pixels;  // row-major
};

namespace detail {

// Conservative per-splat pixel bounds: outside the box eta < 1/255 is
// guaranteed, so skipping is exactly the cutoff rule, not an approximation.
struct SplatBounds {
    int c_lo = 0, c_hi = -1, r_lo = 0, r_hi = -1;
    bool empty = true;
};

inline SplatBounds splat_bounds(const Splat& s, int width, int height) {
    SplatBounds b;
    if (255.0 * s.alpha < 1.0) return b;  // eta < cutoff everywhere
    const double q_max = 2.0 * std::log(255.0 * s.alpha);
    const double ext_x = std::sqrt(std::max(q_max * s.cov2d(0, 0), 0.0)) + 1.0;
    const double ext_y = std::sqrt(std::max(q_max * s.cov2d(1, 1), 0.0)) + 1.0;
    b.c_lo = std::max(0, static_cast<int>(std::floor(s.mean2d.x() - ext_x - 0.5)));
    b.c_hi = std::min(width - 1, static_cast<int>(std::ceil(s.mean2d.x() + ext_x - 0.5)));
    b.r_lo = std::max(0, static_cast<int>(std::floor(s.mean2d.y() - ext_y - 0.5)));
    b.r_hi = std::min(height - 1, static_cast<int>(std::ceil(s.mean2d.y() + ext_y - 0.5)));
    b.empty = b.c_lo > b.c_hi || b.r_lo > b.r_hi;
    return b;
}

}  // namespace detail

// Front-to-back alpha blending per pixel. Deterministic for any thread
// count: rows are independent and each pixel accumulates sequentially.
inline ImagePlane rasterize(const SplatList& splats, const Camera& cam,
                            RenderTrace* trace = nullptr) {
    ImagePlane img(cam.width, cam.height, ColorDomain::LinearHdr);
    if (trace != nullptr) {
        trace->width = cam.width;
        trace->height = cam.height;
        trace->pixels.assign(img.size(), {});
    }
    std::vector<detail::SplatBounds> bounds(splats.splats.size());
    for (std::size_t s = 0; s < splats.splats.size(); ++s) {
        bounds[s] = detail::splat_bounds(splats.splats[s], cam.width, cam.height);
    }
    parallel_rows(cam.height, [&](int r) {
        const double py = r + 0.5;
        for (int c = 0; c < cam.width; ++c) {
            const double px = c + 0.5;
            Eigen::Vector3d acc = Eigen::Vector3d::Zero();
            double transmittance = 1.0;
            std::vector<Contrib>* plist =
                trace ? &trace->pixels[static_cast<std::size_t>(r) * cam.width + c] : nullptr;
            for (std::size_t s = 0; s < splats.splats.size(); ++s) {
                const detail::SplatBounds& b = bounds[s];
                if (b.empty || c < b.c_lo || c > b.c_hi || r < b.r_lo || r > b.r_hi) continue;
                const Splat& sp = splats.splats[s];
                const Eigen::Vector2d d(px - sp.mean2d.x(), py - sp.mean2d.y());
                const double q = d.dot(sp.conic * d);
                const double eta = sp.alpha * std::exp(-0.5 * q);
                if (eta < kEtaCutoff) continue;
                acc += sp.color.cwiseMax(0.0) * (eta * transmittance);
                if (plist != nullptr) {
                    plist->push_back({static_cast<int>(s), eta, transmittance});
                }
                transmittance *= 1.0 - eta;
                if (transmittance < kTransmittanceStop) break;
            }
            img.at(r, c) = acc;
        }
    });
    return img;
}

struct RawRasterGrads {
    std::vector<Eigen::Vector3d> dcolor;  // per splat, clamp-masked
    std::vector<double> dalpha;           // per splat
};

// Adjoint of the blend: per pixel a reverse walk over the recorded
// contributions with a suffix accumulator. Rows are computed into private
// buffers (parallel-safe) and merged in fixed row order.
inline RawRasterGrads rasterize_backward_raw(const SplatList& splats, const Camera& cam,
                                             const RenderTrace& trace,
                                             const ImagePlane& dimage) {
    if (trace.width != cam.width || trace.height != cam.height ||
        trace.pixels.size() != static_cast<std::size_t>(cam.width) * cam.height) {
        throw std::invalid_argument("rasterize_backward: trace does not match camera");
    }
    check_same_shape(dimage, ImagePlane(cam.width, cam.height, ColorDomain::LinearHdr),
                     "rasterize_backward");
    const std::size_t n = splats.splats.size();
    std::vector<std::vector<Eigen::Vector3d>> row_dcolor(
        static_cast<std::size_t>(cam.height));
    std::vector<std::vector<double>> row_dalpha(static_cast<std::size_t>(cam.height));
    parallel_rows(cam.height, [&](int r) {
        auto& dcol = row_dcolor[static_cast<std::size_t>(r)];
        auto& dalp = row_dalpha[static_cast<std::size_t>(r)];
        dcol.assign(n, Eigen::Vector3d::Zero());
        dalp.assign(n, 0.0);
        for (int c = 0; c < cam.width; ++c) {
            const auto& contribs = trace.pixels[static_cast<std::size_t>(r) * cam.width + c];
            if (contribs.empty()) continue;
            const Eigen::Vector3d g = dimage.at(r, c);
            Eigen::Vector3d suffix = Eigen::Vector3d::Zero();
            for (std::size_t i = contribs.size(); i-- > 0;) {
                const Contrib& ct = contribs[i];
                const Splat& sp = splats.splats[static_cast<std::size_t>(ct.splat)];
                const Eigen::Vector3d clamped = sp.color.cwiseMax(0.0);
                const double weight = ct.eta * ct.t_before;
                // color gradient, clamp subgradient 0 at or below zero
                for (int ch = 0; ch < 3; ++ch) {
                    if (sp.color[ch] > 0.0) {
                        dcol[static_cast<std::size_t>(ct.splat)][ch] += g[ch] * weight;
                    }
                }
                // d pixel / d eta = color * T_before - suffix / (1 - eta)
                const double one_minus = 1.0 - ct.eta;
                Eigen::Vector3d dpix_deta = clamped * ct.t_before;
                if (one_minus > 0.0) {
                    dpix_deta -= suffix / one_minus;
                }  // else all later contributions were zero, suffix == 0
                const double deta = g.dot(dpix_deta);
                dalp[static_cast<std::size_t>(ct.splat)] += deta * (ct.eta / sp.alpha);
                suffix += clamped * weight;
            }
        }
    });
    RawRasterGrads out;
    out.dcolor.assign(n, Eigen::Vector3d::Zero());
    out.dalpha.assign(n, 0.0);
    for (int r = 0; r < cam.height; ++r) {
        for (std::size_t s = 0; s < n; ++s) {
            out.dcolor[s] += row_dcolor[static_cast<std::size_t>(r)][s];
            out.dalpha[s] += row_dalpha[static_cast<std::size_t>(r)][s];
        }
    }
    return out;
}

struct SceneGrads {
    std::vector<std::vector<Eigen::Vector3d>> dsh;  // [gaussian][coefficient]
    std::vector<double> dopacity_logit;             // [gaussian]
};

// Chains the raw blend adjoints through the SH basis and the opacity
// sigmoid back to the source set's parameters.
inline SceneGrads rasterize_backward(const GaussianSet& set, const SplatList& splats,
                                     const Camera& cam, const RenderTrace& trace,
                                     const ImagePlane& dimage) {
    RawRasterGrads raw = rasterize_backward_raw(splats, cam, trace, dimage);
    const int k = sh_coeff_count(set.sh_degree);
    SceneGrads out;
    out.dsh.assign(static_cast<std::size_t>(set.count()),
                   std::vector<Eigen::Vector3d>(static_cast<std::size_t>(k),
                                                Eigen::Vector3d::Zero()));
    out.dopacity_logit.assign(static_cast<std::size_t>(set.count()), 0.0);
    for (std::size_t s = 0; s < splats.splats.size(); ++s) {
        const Splat& sp = splats.splats[s];
        double basis[16];
        sh_basis(set.sh_degree, sp.viewdir, basis);
        for (int kk = 0; kk < k; ++kk) {
            out.dsh[static_cast<std::size_t>(sp.index)][static_cast<std::size_t>(kk)] +=
                basis[kk] * raw.dcolor[s];
        }
        const double a = sp.alpha;
        out.dopacity_logit[static_cast<std::size_t>(sp.index)] +=
            raw.dalpha[s] * a * (1.0 - a);
    }
    return out;
}

}  // namespace sehdr

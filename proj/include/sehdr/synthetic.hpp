// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "sehdr/camera.hpp"
#include "sehdr/common.hpp"
#include "sehdr/gaussian.hpp"
#include "sehdr/image.hpp"
#include "sehdr/renderer.hpp"
#include "sehdr/response.hpp"

namespace sehdr {

// Synthetic ground-truth generator: a cluster of Gaussians over a large
// ground plane, viewed from an elevated camera ring. The LDR views are the
// single-exposure captures a trainer sees; the HDR renders are the held-back
// references used for evaluation only.
struct SyntheticSpec {
    int count = 12;
    double extent = 1.0;
    double span = 1000.0;    // ratio of brightest to darkest radiance target
    double hdr_max = 0.9;    // brightest radiance target (absolute anchor)
    int cameras = 8;
    double radius = 3.2;
    Eigen::Vector3d look_at = Eigen::Vector3d::Zero();
    int image_width = 64;
    int image_height = 64;
    std::string crf = "gamma-2.4";
    // Capture duration. The default pushes the brightest radiance just past
    // sensor range (hdr_max * exposure > 1), so the bright core clips to a
    // fully saturated capture in every view regardless of its footprint,
    // while everything below the knee stays recoverable.
    double exposure = 1.25;
    double noise_sigma = 0.0;
    int sh_degree = 1;
    std::uint64_t seed = 1;

    void validate() const {
        if (count < 1) throw std::invalid_argument("SyntheticSpec: count must be >= 1");
        if (!(span >= 1.0)) throw std::invalid_argument("SyntheticSpec: span must be >= 1");
        if (cameras < 2) throw std::invalid_argument("SyntheticSpec: need >= 2 cameras");
        if (!(extent > 0.0)) throw std::invalid_argument("SyntheticSpec: extent must be > 0");
        if (!(hdr_max > 0.0)) throw std::invalid_argument("SyntheticSpec: hdr_max must be > 0");
        if (!(radius > 0.0)) throw std::invalid_argument("SyntheticSpec: radius must be > 0");
        if (image_width <= 0 || image_height <= 0) {
            throw std::invalid_argument("SyntheticSpec: bad image size");
        }
        if (!(exposure > 0.0)) throw std::invalid_argument("SyntheticSpec: exposure must be > 0");
        if (!(noise_sigma >= 0.0)) throw std::invalid_argument("SyntheticSpec: bad noise sigma");
        if (sh_degree < 0 || sh_degree > kMaxShDegree) {
            throw std::invalid_argument("SyntheticSpec: sh degree out of range");
        }
    }
};

struct SyntheticScene {
    GaussianSet truth;                  // LinearHdr radiance
    std::vector<Camera> cameras;
    std::vector<ImagePlane> ldr_views;  // quantized single-exposure captures
    std::vector<ImagePlane> hdr_refs;   // noiseless linear references
};

namespace detail {

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Gaussian radiance targets: indices 0..3 are structural (ground plane,
// brightest, darkest, dark partner), the rest draw log-uniform strictly
// inside the span so the forced pair pins the exact max/min ratio.
inline GaussianSet synth_gaussians(const SyntheticSpec& spec, Rng& rng) {
    GaussianSet set;
    set.sh_degree = spec.sh_degree;
    set.domain = ColorDomain::LinearHdr;
    const int k = sh_coeff_count(spec.sh_degree);
    const double e = spec.extent;
    const double lo = spec.hdr_max / spec.span;
    // span 1 promises a truly constant radiance field, so directional terms
    // and channel tints are suppressed there
    const bool flat = spec.span == 1.0;

    auto add = [&](const Eigen::Vector3d& mean, const Eigen::Vector3d& scale,
                   const Eigen::Quaterniond& rot, double alpha,
                   const Eigen::Vector3d& radiance) {
        Gaussian g;
        g.mean = mean;
        g.scale = scale;
        g.rotation = rot.normalized();
        g.opacity_logit = logit(alpha);
        g.sh.assign(static_cast<std::size_t>(k), Eigen::Vector3d::Zero());
        g.sh[0] = radiance / kSh0;
        for (int i = 1; i < k; ++i) {
            for (int c = 0; c < 3; ++c) {
                g.sh[i][c] = flat ? 0.0 : g.sh[0][c] * rng.uniform(0.01, 0.04);
            }
        }
        set.gaussians.push_back(std::move(g));
    };
    auto random_rot = [&]() {
        return Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    };
    // explicit return type: deduction would yield a lazy Eigen expression
    // referencing the destroyed temporary
    auto cluster_mean = [&]() -> Eigen::Vector3d {
        return spec.look_at + Eigen::Vector3d(rng.uniform(-0.5, 0.5) * e,
                                              rng.uniform(-0.5, 0.5) * e,
                                              rng.uniform(0.10, 0.45) * e);
    };
    auto cluster_scale = [&]() {
        return Eigen::Vector3d(rng.uniform(0.06, 0.11) * e, rng.uniform(0.06, 0.11) * e,
                               rng.uniform(0.06, 0.11) * e);
    };

    for (int i = 0; i < spec.count; ++i) {
        if (i == 0) {
            // ground plane: a squashed midtone Gaussian; for spanned scenes
            // its finite density support ends inside the ring frames, so
            // grazing rays record true black sky, while flat calibration
            // scenes widen it until every frame saturates edge to edge
            const double plane = flat ? 6.0 : 1.1;
            add(spec.look_at + Eigen::Vector3d(0.0, 0.0, -0.02 * e),
                Eigen::Vector3d(plane * e, plane * e, 0.02 * e), Eigen::Quaterniond::Identity(),
                0.995, Eigen::Vector3d::Constant((flat ? 1.0 : 0.105) * spec.hdr_max));
        } else if (i == 1) {
            // brightest member, pinned high and near-opaque; kept compact so
            // its falloff fringe (where capture and reconstruction blur
            // differently) stays a small fraction of its saturated core
            add(spec.look_at + Eigen::Vector3d(-0.20 * e, -0.20 * e, 0.55 * e),
                Eigen::Vector3d(rng.uniform(0.14, 0.18) * e, rng.uniform(0.14, 0.18) * e,
                                rng.uniform(0.14, 0.18) * e),
                random_rot(), 0.995, Eigen::Vector3d::Constant(spec.hdr_max));
        } else if (i == 2) {
            // darkest member, pinned near center so the probe view always
            // carries a dark region wider than its 1% quantile
            add(spec.look_at + Eigen::Vector3d(0.25 * e, 0.25 * e, 0.22 * e),
                Eigen::Vector3d(rng.uniform(0.11, 0.15) * e, rng.uniform(0.11, 0.15) * e,
                                rng.uniform(0.11, 0.15) * e),
                random_rot(), 0.93, Eigen::Vector3d::Constant(lo));
        } else if (i == 3) {
            // dark partner stacked on the darkest member: together they
            // occlude the plane so the dark region stays dark
            const Gaussian& dark = set.gaussians.back();
            add(dark.mean + Eigen::Vector3d(rng.uniform(-0.05, 0.05) * e,
                                            rng.uniform(-0.05, 0.05) * e,
                                            rng.uniform(0.04, 0.10) * e),
                Eigen::Vector3d(rng.uniform(0.11, 0.15) * e, rng.uniform(0.11, 0.15) * e,
                                rng.uniform(0.11, 0.15) * e),
                random_rot(), 0.93,
                Eigen::Vector3d::Constant(std::min(1.7 * lo, spec.hdr_max)));
        } else {
            // tinted mid members, drawn strictly inside the span so channel
            // tints cannot breach the forced extremes
            const double margin = flat ? 1.0 : std::min(1.16, std::sqrt(spec.span));
            const double range = spec.hdr_max / (lo * margin * margin);
            const double base = lo * margin * std::exp(rng.uniform(0.0, std::log(range)));
            Eigen::Vector3d radiance;
            for (int c = 0; c < 3; ++c) {
                radiance[c] = base * (flat ? 1.0 : rng.uniform(0.85, 1.15));
            }
            add(cluster_mean(), cluster_scale(), random_rot(), rng.uniform(0.88, 0.96),
                radiance);
        }
    }
    set.validate();
    return set;
}

inline std::vector<Camera> synth_cameras(const SyntheticSpec& spec) {
    std::vector<Camera> cams;
    cams.reserve(static_cast<std::size_t>(spec.cameras));
    for (int i = 0; i < spec.cameras; ++i) {
        // camera 0 sits steep with a narrow field so its frame is fully
        // covered by the plane; the others graze the horizon and keep a sky
        // band past the plane's density support that records true black
        const double elevation = i == 0 ? 0.90 : 0.44;
        const double focal = (i == 0 ? 1.60 : 0.95) * spec.image_width;
        const double az = 2.0 * std::numbers::pi * i / spec.cameras + 0.37;
        const Eigen::Vector3d eye =
            spec.look_at + spec.radius * Eigen::Vector3d(std::cos(az) * std::cos(elevation),
                                                         std::sin(az) * std::cos(elevation),
                                                         std::sin(elevation));
        cams.push_back(look_at(eye, spec.look_at, Eigen::Vector3d::UnitZ(), focal, focal,
                               spec.image_width, spec.image_height));
    }
    return cams;
}

inline ImagePlane synth_capture(const ImagePlane& hdr, const ResponseCurve& curve,
                                double exposure, double noise_sigma, Rng& rng) {
    ImagePlane ldr(hdr.width, hdr.height, ColorDomain::Ldr);
    for (std::size_t i = 0; i < hdr.pixels.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            double v = apply_crf(curve, hdr.pixels[i][c] * exposure);
            if (noise_sigma > 0.0) {
                v = std::min(1.0, std::max(0.0, v + noise_sigma * rng.normal()));
            }
            ldr.pixels[i][c] = std::round(v * 255.0) / 255.0;
        }
    }
    return ldr;
}

inline bool has_exposure_extremes(const std::vector<ImagePlane>& views) {
    for (const auto& view : views) {
        bool bright = false, dark = false;
        for (const auto& p : view.pixels) {
            if (p.maxCoeff() > 0.99) bright = true;
            if (p.minCoeff() < 0.01) dark = true;
            if (bright && dark) break;
        }
        if (bright && dark) return true;
    }
    return false;
}

}  // namespace detail

inline SyntheticScene generate(const SyntheticSpec& spec) {
    spec.validate();
    const CurveDatabase db = builtin_curves();
    const ResponseCurve& curve = db.by_name(spec.crf);
    // The over/under-exposure guarantee only applies to wide-span scenes;
    // resample the seed until one view holds both extremes. The gate runs on
    // noiseless captures so the accepted scene never depends on the noise
    // draw: noise only perturbs the final views, not the truth.
    const int attempts = spec.span >= 100.0 ? 32 : 1;
    SyntheticScene scene;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        Rng rng(fnv1a64("synth:" + std::to_string(spec.seed) + ":" + std::to_string(attempt)));
        scene = SyntheticScene{};
        scene.truth = detail::synth_gaussians(spec, rng);
        scene.cameras = detail::synth_cameras(spec);
        for (const Camera& cam : scene.cameras) {
            SplatList splats = project(scene.truth, cam);
            scene.hdr_refs.push_back(rasterize(splats, cam));
            scene.ldr_views.push_back(detail::synth_capture(scene.hdr_refs.back(), curve,
                                                            spec.exposure, 0.0, rng));
        }
        if (detail::has_exposure_extremes(scene.ldr_views)) break;
    }
    if (spec.noise_sigma > 0.0) {
        Rng noise_rng(fnv1a64("synth:noise:" + std::to_string(spec.seed)));
        scene.ldr_views.clear();
        for (const ImagePlane& hdr : scene.hdr_refs) {
            scene.ldr_views.push_back(detail::synth_capture(hdr, curve, spec.exposure,
                                                            spec.noise_sigma, noise_rng));
        }
    }
    return scene;
}

// Training start point: true geometry with radiance re-initialized to a flat
// midtone, so all tonal structure must be recovered from the LDR captures.
// perturb jitters log-radiance and opacity logits (log-domain, stays positive).
inline GaussianSet init_scene_from_truth(const GaussianSet& truth, double exposure,
                                         double init_radiance, double perturb,
                                         std::uint64_t seed) {
    truth.validate();
    if (!(exposure > 0.0)) throw std::invalid_argument("init_scene_from_truth: bad exposure");
    if (!(init_radiance > 0.0)) {
        throw std::invalid_argument("init_scene_from_truth: init radiance must be > 0");
    }
    GaussianSet s = truth;
    s.domain = ColorDomain::LinearExposureScaled;
    s.exposure = exposure;
    Rng rng(fnv1a64("init:" + std::to_string(seed)));
    const double dc = init_radiance * exposure / kSh0;
    for (auto& g : s.gaussians) {
        for (std::size_t i = 0; i < g.sh.size(); ++i) {
            const double base = i == 0 ? dc : 1e-3 * dc;
            for (int c = 0; c < 3; ++c) {
                const double jitter = perturb > 0.0 ? std::exp(perturb * rng.normal()) : 1.0;
                g.sh[i][c] = base * jitter;
            }
        }
        if (perturb > 0.0) g.opacity_logit += perturb * rng.normal();
    }
    s.validate();
    return s;
}

}  // namespace sehdr

// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sehdr/bracketing.hpp"
#include "sehdr/losses.hpp"
#include "sehdr/neef.hpp"
#include "sehdr/renderer.hpp"
#include "sehdr/scene_io.hpp"

namespace sehdr {

inline constexpr char kCheckpointMagic[9] = "SEHDRCK1";
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

enum class TrainMode {
    SelfSupervised,  // linear consistency against the rendered base exposure
    HdrSupervised,   // linear term against a provided radiance reference
};

struct TrainConfig {
    int iterations = 200;
    double lr_sh = 2.5e-3;
    double lr_opacity = 5e-2;
    double lr_sigma = 1e-3;
    double lr_theta = 1e-3;
    double lambda = 0.2;  // structural dissimilarity weight inside each loss
    double beta = 1.0;    // weight of the linear consistency loss
    TrainMode mode = TrainMode::SelfSupervised;
    bool full_batch = false;
    bool coupled_hdr = false;  // let the linear loss also pull on the fused render
    std::uint64_t seed = 0;
};

struct TrainView {
    Camera camera;
    ImagePlane ldr;      // observed display image at the base exposure
    ImagePlane hdr_ref;  // radiance reference, used by HdrSupervised only
    bool has_hdr_ref = false;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;

    void init(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

// Everything the optimizer owns. Trainable values are the base-exposure
// log radiance table, the opacity logits, and the fusion parameters;
// means, scales, and rotations stay fixed.
struct TrainState {
    GaussianSet geometry;  // sh mirrors exp(log_sh), kept in sync after steps
    std::vector<double> log_sh;
    ExposurePlan plan;
    ResponseCurve curve;
    NeEFParams neef;
    TrainConfig config;
    AdamState adam_sh, adam_opacity, adam_sigma, adam_theta;
    std::uint64_t adam_t = 0;
    int iteration = 0;
    std::uint64_t config_hash = 0;
};

struct TrainGrads {
    std::vector<double> log_sh;
    std::vector<double> opacity;
    std::array<double, 3> log_sigma = {0.0, 0.0, 0.0};
    std::array<MlpGrads, 3> mlps;
};

struct TrainLosses {
    double ldr = 0.0;
    double linear = 0.0;
    double total = 0.0;
};

struct TrainLogRow {
    int iteration = 0;
    double loss_ldr = 0.0;
    double loss_linear = 0.0;
    double total = 0.0;
};

inline void sync_geometry_sh(TrainState& s) {
    const int k = sh_coeff_count(s.geometry.sh_degree);
    for (int g = 0; g < s.geometry.count(); ++g) {
        for (int kk = 0; kk < k; ++kk) {
            for (int c = 0; c < 3; ++c) {
                s.geometry.gaussians[static_cast<std::size_t>(g)]
                    .sh[static_cast<std::size_t>(kk)][c] =
                    std::exp(s.log_sh[(static_cast<std::size_t>(g) * k + kk) * 3 + c]);
            }
        }
    }
}

// Builds a state from a base-exposure scene whose radiance is strictly
// positive; the scene becomes the canonical geometry.
inline TrainState init_train_state(const GaussianSet& base_scene, const ExposurePlan& plan,
                                   const ResponseCurve& curve, const TrainConfig& config) {
    base_scene.validate();
    plan.validate();
    curve.validate();
    if (base_scene.domain != ColorDomain::LinearExposureScaled) {
        throw std::invalid_argument("init_train_state: scene must be exposure-scaled");
    }
    TrainState s;
    s.geometry = base_scene;
    s.log_sh = log_radiance_of(base_scene);
    s.plan = plan;
    s.curve = curve;
    s.config = config;
    s.neef = NeEFParams::create(plan.exposure_count(), config.seed);
    s.adam_sh.init(s.log_sh.size());
    s.adam_opacity.init(static_cast<std::size_t>(base_scene.count()));
    s.adam_sigma.init(3);
    s.adam_theta.init(3 * s.neef.mlps[0].param_count());
    return s;
}

// Stateless per-epoch view order; derived from (seed, epoch) only so a
// resumed run visits exactly the views the uninterrupted run would.
inline std::vector<int> epoch_order(std::uint64_t seed, int epoch, int count) {
    Rng rng(fnv1a64("epoch:" + std::to_string(seed) + ":" + std::to_string(epoch)));
    std::vector<int> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    return order;
}

namespace detail {

inline void scale_mlp_grads(MlpGrads& g, double s) {
    g.w1 *= s;
    g.w2 *= s;
    g.w3 *= s;
    g.b1 *= s;
    g.b2 *= s;
    g.b3 *= s;
}

// Chains raw blend color adjoints into a flat per-coefficient table
// through the spherical-harmonic basis at each splat's view direction.
inline void chain_colors_to_coeffs(const SplatList& splats, int degree,
                                   const std::vector<Eigen::Vector3d>& dcolor,
                                   std::vector<Eigen::Vector3d>& dcoeff) {
    const int k = sh_coeff_count(degree);
    for (std::size_t j = 0; j < splats.splats.size(); ++j) {
        if (dcolor[j] == Eigen::Vector3d::Zero()) continue;
        const Splat& sp = splats.splats[j];
        double basis[16];
        sh_basis(degree, sp.viewdir, basis);
        for (int kk = 0; kk < k; ++kk) {
            dcoeff[static_cast<std::size_t>(sp.index) * k + kk] += basis[kk] * dcolor[j];
        }
    }
}

inline void chain_alpha_to_logits(const SplatList& splats, const std::vector<double>& dalpha,
                                  std::vector<double>& dlogit) {
    for (std::size_t j = 0; j < splats.splats.size(); ++j) {
        const double a = splats.splats[j].alpha;
        dlogit[static_cast<std::size_t>(splats.splats[j].index)] += dalpha[j] * a * (1.0 - a);
    }
}

}  // namespace detail

// One full objective evaluation over the selected views, averaged.
// Gradient output is optional so finite-difference probes can reuse the
// exact forward path.
inline TrainLosses compute_loss_and_grads(const TrainState& s,
                                          const std::vector<TrainView>& views,
                                          const std::vector<int>& selected,
                                          TrainGrads* grads = nullptr) {
    if (selected.empty()) throw std::invalid_argument("compute_loss_and_grads: no views");
    const GaussianSet& geom = s.geometry;
    const int k = sh_coeff_count(geom.sh_degree);
    const std::size_t coeffs = static_cast<std::size_t>(geom.count()) * k;
    if (s.log_sh.size() != coeffs * 3) {
        throw std::invalid_argument("compute_loss_and_grads: log table size mismatch");
    }

    const BracketedScene b = bracket_logs(geom, s.log_sh, s.plan);
    const FuseResult fused = fuse(b, s.curve, s.neef, WeightMode::Softmax);
    const double dt1 = b.base_exposure();
    const std::vector<Eigen::Vector3d> base_lin = linear_radiance(b, b.base_index);

    std::vector<double> dfused;
    std::vector<Eigen::Vector3d> dcoeff_fused;  // per coefficient, fused table
    std::vector<Eigen::Vector3d> dcoeff_base;   // per coefficient, base linear table
    std::vector<double> dlogit;
    if (grads != nullptr) {
        dcoeff_fused.assign(coeffs, Eigen::Vector3d::Zero());
        dcoeff_base.assign(coeffs, Eigen::Vector3d::Zero());
        dlogit.assign(static_cast<std::size_t>(geom.count()), 0.0);
    }

    TrainLosses total;
    for (int vi : selected) {
        const TrainView& view = views.at(static_cast<std::size_t>(vi));
        if (view.ldr.width != view.camera.width || view.ldr.height != view.camera.height) {
            throw std::invalid_argument("compute_loss_and_grads: view image shape mismatch");
        }
        if (s.config.mode == TrainMode::HdrSupervised && !view.has_hdr_ref) {
            throw std::invalid_argument("compute_loss_and_grads: missing radiance reference");
        }

        SplatList sp_hdr = project(geom, view.camera);
        SplatList sp_ldr = sp_hdr;
        SplatList sp_base = sp_hdr;
        for (std::size_t j = 0; j < sp_hdr.splats.size(); ++j) {
            const int i = sp_hdr.splats[j].index;
            double basis[16];
            sh_basis(geom.sh_degree, sp_hdr.splats[j].viewdir, basis);
            Eigen::Vector3d hdr = Eigen::Vector3d::Zero();
            Eigen::Vector3d base = Eigen::Vector3d::Zero();
            for (int kk = 0; kk < k; ++kk) {
                hdr += basis[kk] *
                       fused.scene.gaussians[static_cast<std::size_t>(i)]
                           .sh[static_cast<std::size_t>(kk)];
                base += basis[kk] * base_lin[static_cast<std::size_t>(i) * k + kk];
            }
            Eigen::Vector3d ldr;
            for (int c = 0; c < 3; ++c) ldr[c] = apply_crf(s.curve, hdr[c] * dt1);
            sp_hdr.splats[j].color = hdr;
            sp_ldr.splats[j].color = ldr;
            sp_base.splats[j].color = base;
        }

        RenderTrace tr_ldr, tr_hdr, tr_base;
        ImagePlane img_ldr = rasterize(sp_ldr, view.camera, &tr_ldr);
        ImagePlane img_hdr = rasterize(sp_hdr, view.camera, &tr_hdr);
        ImagePlane img_base = rasterize(sp_base, view.camera, &tr_base);

        const LossResult ldr_loss = reconstruction_loss(img_ldr, view.ldr, s.config.lambda);

        ImagePlane lin_a = img_hdr;
        lin_a.domain = ColorDomain::LinearExposureScaled;
        lin_a.exposure = dt1;
        for (auto& p : lin_a.pixels) p *= dt1;
        ImagePlane lin_b;
        if (s.config.mode == TrainMode::HdrSupervised) {
            lin_b = view.hdr_ref;
            for (auto& p : lin_b.pixels) p *= dt1;
        } else {
            lin_b = img_base;
        }
        check_same_shape(lin_a, lin_b, "compute_loss_and_grads");

        ImagePlane dssim_a, dssim_b;
        const double ssim_lin = ssim(lin_a, lin_b, &dssim_a, &dssim_b);
        const double lin_value =
            l1_loss(lin_a, lin_b) + s.config.lambda * 0.5 * (1.0 - ssim_lin);

        total.ldr += ldr_loss.value;
        total.linear += lin_value;

        if (grads == nullptr) continue;

        // display-domain loss through the tone curve into the fused table
        RawRasterGrads raw_ldr = rasterize_backward_raw(sp_ldr, view.camera, tr_ldr, ldr_loss.da);
        std::vector<Eigen::Vector3d> dhdr_color(sp_hdr.splats.size(), Eigen::Vector3d::Zero());
        for (std::size_t j = 0; j < sp_hdr.splats.size(); ++j) {
            for (int c = 0; c < 3; ++c) {
                const double x = sp_hdr.splats[j].color[c] * dt1;
                dhdr_color[j][c] = raw_ldr.dcolor[j][c] * crf_slope(s.curve, x) * dt1;
            }
        }
        detail::chain_colors_to_coeffs(sp_hdr, geom.sh_degree, dhdr_color, dcoeff_fused);
        detail::chain_alpha_to_logits(sp_ldr, raw_ldr.dalpha, dlogit);

        // linear consistency gradients on each side
        ImagePlane l1_grad = l1_backward(lin_a, lin_b);
        ImagePlane dlin_a = l1_grad;
        ImagePlane dlin_b = l1_grad;
        const double sscale = -0.5 * s.config.lambda;
        for (std::size_t i = 0; i < dlin_a.size(); ++i) {
            dlin_a.pixels[i] = s.config.beta * (l1_grad.pixels[i] + sscale * dssim_a.pixels[i]);
            dlin_b.pixels[i] = s.config.beta * (-l1_grad.pixels[i] + sscale * dssim_b.pixels[i]);
        }

        if (s.config.mode == TrainMode::SelfSupervised) {
            RawRasterGrads raw_base =
                rasterize_backward_raw(sp_base, view.camera, tr_base, dlin_b);
            detail::chain_colors_to_coeffs(sp_base, geom.sh_degree, raw_base.dcolor,
                                           dcoeff_base);
            detail::chain_alpha_to_logits(sp_base, raw_base.dalpha, dlogit);
        }
        const bool pull_hdr =
            s.config.mode == TrainMode::HdrSupervised || s.config.coupled_hdr;
        if (pull_hdr) {
            for (auto& p : dlin_a.pixels) p *= dt1;  // lin_a = dt1 * img_hdr
            RawRasterGrads raw_h = rasterize_backward_raw(sp_hdr, view.camera, tr_hdr, dlin_a);
            detail::chain_colors_to_coeffs(sp_hdr, geom.sh_degree, raw_h.dcolor, dcoeff_fused);
            detail::chain_alpha_to_logits(sp_hdr, raw_h.dalpha, dlogit);
        }
    }

    const double inv = 1.0 / static_cast<double>(selected.size());
    total.ldr *= inv;
    total.linear *= inv;
    total.total = total.ldr + s.config.beta * total.linear;

    if (grads != nullptr) {
        std::vector<double> dfused_flat(coeffs * 3, 0.0);
        for (std::size_t t = 0; t < coeffs; ++t) {
            for (int c = 0; c < 3; ++c) dfused_flat[t * 3 + c] = dcoeff_fused[t][c] * inv;
        }
        NeEFGrads ng = neef_backward(s.curve, s.neef, fused.trace, dfused_flat);
        grads->log_sh.assign(coeffs * 3, 0.0);
        for (std::size_t t = 0; t < coeffs; ++t) {
            for (int c = 0; c < 3; ++c) {
                // fused path plus the direct base-render path, both in log space
                grads->log_sh[t * 3 + c] =
                    ng.dlog_base[t * 3 + c] +
                    dcoeff_base[t][c] * inv * base_lin[t][c];
            }
        }
        grads->opacity.assign(dlogit.size(), 0.0);
        for (std::size_t i = 0; i < dlogit.size(); ++i) grads->opacity[i] = dlogit[i] * inv;
        grads->log_sigma = ng.dlog_sigma;
        grads->mlps = std::move(ng.mlps);
    }
    return total;
}

namespace detail {

inline void adam_update(double* x, const double* g, AdamState& st, std::size_t n, double lr,
                        std::uint64_t t) {
    if (st.m.size() != n) throw std::invalid_argument("adam_update: moment size mismatch");
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));
    for (std::size_t i = 0; i < n; ++i) {
        st.m[i] = kAdamBeta1 * st.m[i] + (1.0 - kAdamBeta1) * g[i];
        st.v[i] = kAdamBeta2 * st.v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
        const double mhat = st.m[i] / c1;
        const double vhat = st.v[i] / c2;
        x[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

}  // namespace detail

inline TrainLogRow train_step(TrainState& s, const std::vector<TrainView>& views) {
    if (views.empty()) throw std::invalid_argument("train_step: no views");
    std::vector<int> selected;
    if (s.config.full_batch) {
        selected.resize(views.size());
        std::iota(selected.begin(), selected.end(), 0);
    } else {
        const int vcount = static_cast<int>(views.size());
        const int epoch = s.iteration / vcount;
        const int pos = s.iteration % vcount;
        selected = {epoch_order(s.config.seed, epoch, vcount)[static_cast<std::size_t>(pos)]};
    }

    TrainGrads g;
    const TrainLosses losses = compute_loss_and_grads(s, views, selected, &g);
    if (!std::isfinite(losses.total)) {
        throw NumericError("train_step: non-finite loss at iteration " +
                           std::to_string(s.iteration));
    }
    for (double v : g.log_sh) {
        if (!std::isfinite(v)) {
            throw NumericError("train_step: non-finite radiance gradient at iteration " +
                               std::to_string(s.iteration));
        }
    }

    s.adam_t += 1;
    detail::adam_update(s.log_sh.data(), g.log_sh.data(), s.adam_sh, s.log_sh.size(),
                        s.config.lr_sh, s.adam_t);

    std::vector<double> logits(static_cast<std::size_t>(s.geometry.count()));
    for (std::size_t i = 0; i < logits.size(); ++i) {
        logits[i] = s.geometry.gaussians[i].opacity_logit;
    }
    detail::adam_update(logits.data(), g.opacity.data(), s.adam_opacity, logits.size(),
                        s.config.lr_opacity, s.adam_t);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        s.geometry.gaussians[i].opacity_logit = logits[i];
    }

    detail::adam_update(s.neef.log_sigma.data(), g.log_sigma.data(), s.adam_sigma, 3,
                        s.config.lr_sigma, s.adam_t);

    const std::size_t per = s.neef.mlps[0].param_count();
    std::vector<double> theta(3 * per), dtheta(3 * per);
    for (int c = 0; c < 3; ++c) {
        s.neef.mlps[static_cast<std::size_t>(c)].flatten(theta.data() + c * per);
        flatten_grads(g.mlps[static_cast<std::size_t>(c)], dtheta.data() + c * per);
    }
    detail::adam_update(theta.data(), dtheta.data(), s.adam_theta, theta.size(),
                        s.config.lr_theta, s.adam_t);
    for (int c = 0; c < 3; ++c) {
        s.neef.mlps[static_cast<std::size_t>(c)].unflatten(theta.data() + c * per);
    }

    TrainLogRow row{s.iteration, losses.ldr, losses.linear, losses.total};
    s.iteration += 1;
    sync_geometry_sh(s);
    return row;
}

inline std::vector<TrainLogRow> train(TrainState& s, const std::vector<TrainView>& views,
                                      int iterations) {
    std::vector<TrainLogRow> rows;
    rows.reserve(static_cast<std::size_t>(iterations));
    for (int i = 0; i < iterations; ++i) rows.push_back(train_step(s, views));
    return rows;
}

// One line per iteration, no header: iteration,ldr,linear,total.
inline std::string format_loss_log(const std::vector<TrainLogRow>& rows) {
    std::ostringstream oss;
    oss.precision(17);
    for (const auto& r : rows) {
        oss << r.iteration << ',' << r.loss_ldr << ',' << r.loss_linear << ',' << r.total
            << '\n';
    }
    return oss.str();
}

inline void write_loss_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
    detail::atomic_write(path, format_loss_log(rows));
}

namespace detail {

inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const std::string& buf, std::size_t& pos) {
    if (pos + 8 > buf.size()) throw IoError("checkpoint: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    }
    pos += 8;
    return v;
}

inline void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

inline double get_f64(const std::string& buf, std::size_t& pos) {
    return std::bit_cast<double>(get_u64(buf, pos));
}

inline void put_vec(std::string& buf, const std::vector<double>& v) {
    put_u64(buf, v.size());
    for (double x : v) put_f64(buf, x);
}

inline std::vector<double> get_vec(const std::string& buf, std::size_t& pos) {
    const std::uint64_t n = get_u64(buf, pos);
    if (pos + 8 * n > buf.size()) throw IoError("checkpoint: truncated array");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = get_f64(buf, pos);
    return v;
}

}  // namespace detail

// Self-contained training snapshot; resuming from it reproduces the
// uninterrupted run bit for bit.
inline std::string encode_checkpoint(const TrainState& s) {
    std::string buf;
    buf.append(kCheckpointMagic, 8);
    detail::put_u32(buf, 1u);
    detail::put_u64(buf, s.config_hash);
    detail::put_u32(buf, static_cast<std::uint32_t>(s.iteration));
    detail::put_u64(buf, s.adam_t);
    detail::put_u32(buf, static_cast<std::uint32_t>(s.geometry.count()));
    detail::put_u32(buf, static_cast<std::uint32_t>(s.geometry.sh_degree));
    detail::put_f64(buf, s.plan.base_exposure);
    detail::put_vec(buf, s.plan.ratios);
    for (const auto& g : s.geometry.gaussians) {
        for (int i = 0; i < 3; ++i) detail::put_f64(buf, g.mean[i]);
        for (int i = 0; i < 3; ++i) detail::put_f64(buf, g.scale[i]);
        detail::put_f64(buf, g.rotation.w());
        detail::put_f64(buf, g.rotation.x());
        detail::put_f64(buf, g.rotation.y());
        detail::put_f64(buf, g.rotation.z());
        detail::put_f64(buf, g.opacity_logit);
    }
    detail::put_vec(buf, s.log_sh);
    for (int c = 0; c < 3; ++c) detail::put_f64(buf, s.neef.log_sigma[static_cast<std::size_t>(c)]);
    detail::put_u32(buf, static_cast<std::uint32_t>(s.neef.mlps[0].input_width()));
    detail::put_u32(buf, static_cast<std::uint32_t>(s.neef.mlps[0].output_width()));
    std::vector<double> theta(s.neef.mlps[0].param_count());
    for (int c = 0; c < 3; ++c) {
        s.neef.mlps[static_cast<std::size_t>(c)].flatten(theta.data());
        detail::put_vec(buf, theta);
    }
    detail::put_u32(buf, static_cast<std::uint32_t>(s.curve.name.size()));
    buf.append(s.curve.name);
    detail::put_vec(buf, s.curve.samples);
    for (const AdamState* a : {&s.adam_sh, &s.adam_opacity, &s.adam_sigma, &s.adam_theta}) {
        detail::put_vec(buf, a->m);
        detail::put_vec(buf, a->v);
    }
    return buf;
}

inline TrainState decode_checkpoint(const std::string& buf, const TrainConfig& config) {
    if (buf.size() < 12 || buf.compare(0, 8, kCheckpointMagic, 8) != 0) {
        throw IoError("checkpoint: bad magic");
    }
    std::size_t pos = 8;
    if (detail::get_u32(buf, pos) != 1u) throw IoError("checkpoint: unsupported version");
    TrainState s;
    s.config = config;
    s.config_hash = detail::get_u64(buf, pos);
    s.iteration = static_cast<int>(detail::get_u32(buf, pos));
    s.adam_t = detail::get_u64(buf, pos);
    const std::uint32_t count = detail::get_u32(buf, pos);
    const std::uint32_t degree = detail::get_u32(buf, pos);
    if (degree > static_cast<std::uint32_t>(kMaxShDegree)) {
        throw IoError("checkpoint: bad degree");
    }
    s.plan.base_exposure = detail::get_f64(buf, pos);
    s.plan.ratios = detail::get_vec(buf, pos);
    s.plan.validate();
    const int k = sh_coeff_count(static_cast<int>(degree));
    s.geometry.sh_degree = static_cast<int>(degree);
    s.geometry.domain = ColorDomain::LinearExposureScaled;
    s.geometry.exposure = s.plan.base_exposure;
    s.geometry.gaussians.resize(count);
    for (auto& g : s.geometry.gaussians) {
        for (int i = 0; i < 3; ++i) g.mean[i] = detail::get_f64(buf, pos);
        for (int i = 0; i < 3; ++i) g.scale[i] = detail::get_f64(buf, pos);
        const double w = detail::get_f64(buf, pos);
        const double x = detail::get_f64(buf, pos);
        const double y = detail::get_f64(buf, pos);
        const double z = detail::get_f64(buf, pos);
        g.rotation = Eigen::Quaterniond(w, x, y, z);
        g.opacity_logit = detail::get_f64(buf, pos);
        g.sh.assign(static_cast<std::size_t>(k), Eigen::Vector3d::Zero());
    }
    s.log_sh = detail::get_vec(buf, pos);
    if (s.log_sh.size() != static_cast<std::size_t>(count) * k * 3) {
        throw IoError("checkpoint: radiance table size mismatch");
    }
    for (int c = 0; c < 3; ++c) s.neef.log_sigma[static_cast<std::size_t>(c)] =
        detail::get_f64(buf, pos);
    const std::uint32_t n_in = detail::get_u32(buf, pos);
    const std::uint32_t n_out = detail::get_u32(buf, pos);
    if (n_in != 2 * n_out ||
        static_cast<int>(n_out) != s.plan.exposure_count()) {
        throw IoError("checkpoint: fusion width mismatch");
    }
    for (int c = 0; c < 3; ++c) {
        Mlp m = Mlp::create(static_cast<int>(n_in), static_cast<int>(n_out));
        const std::vector<double> theta = detail::get_vec(buf, pos);
        if (theta.size() != m.param_count()) throw IoError("checkpoint: parameter count");
        m.unflatten(theta.data());
        s.neef.mlps[static_cast<std::size_t>(c)] = std::move(m);
    }
    const std::uint32_t name_len = detail::get_u32(buf, pos);
    if (pos + name_len > buf.size()) throw IoError("checkpoint: truncated name");
    s.curve.name = buf.substr(pos, name_len);
    pos += name_len;
    s.curve.samples = detail::get_vec(buf, pos);
    s.curve.validate();
    for (AdamState* a : {&s.adam_sh, &s.adam_opacity, &s.adam_sigma, &s.adam_theta}) {
        a->m = detail::get_vec(buf, pos);
        a->v = detail::get_vec(buf, pos);
        if (a->m.size() != a->v.size()) throw IoError("checkpoint: moment size mismatch");
    }
    if (pos != buf.size()) throw IoError("checkpoint: trailing bytes");
    if (s.adam_sh.m.size() != s.log_sh.size() || s.adam_opacity.m.size() != count ||
        s.adam_sigma.m.size() != 3 ||
        s.adam_theta.m.size() != 3 * s.neef.mlps[0].param_count()) {
        throw IoError("checkpoint: moment shapes disagree with parameters");
    }
    sync_geometry_sh(s);
    s.geometry.validate();
    return s;
}

inline void write_checkpoint(const std::string& path, const TrainState& s) {
    detail::atomic_write(path, encode_checkpoint(s));
}

inline TrainState read_checkpoint(const std::string& path, const TrainConfig& config) {
    return decode_checkpoint(detail::read_all(path), config);
}

}  // namespace sehdr

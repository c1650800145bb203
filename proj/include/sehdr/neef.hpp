// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "sehdr/bracketing.hpp"
#include "sehdr/mlp.hpp"
#include "sehdr/response.hpp"

namespace sehdr {

// Neural exposure-fusion parameters: one well-exposedness width and one MLP
// per color channel. Widths live in log space so optimizer steps keep them
// positive; MLPs share a shape but not parameters.
struct NeEFParams {
    std::array<double, 3> log_sigma;
    std::array<Mlp, 3> mlps;

    static NeEFParams create(int exposure_count, std::uint64_t seed) {
        if (exposure_count < 1) throw std::invalid_argument("NeEFParams: needs >= 1 exposure");
        NeEFParams p;
        p.log_sigma = {std::log(0.2), std::log(0.2), std::log(0.2)};
        Rng rng(seed);
        for (int c = 0; c < 3; ++c) {
            p.mlps[c] = Mlp::create(2 * exposure_count, exposure_count);
            p.mlps[c].init(rng);
        }
        return p;
    }

    int exposure_count() const { return mlps[0].output_width(); }
    double sigma(int c) const { return std::exp(log_sigma[static_cast<std::size_t>(c)]); }
};

inline double well_exposedness(double ldr, double sigma_c) {
    const double d = ldr - 0.5;
    return std::exp(-(d * d) / (2.0 * sigma_c * sigma_c));
}

enum class WeightMode {
    Softmax,           // trained path: softmax over MLP-modulated raws
    OracleNormalized,  // raw/sum(raw) normalization, for oracle comparisons
};

// Per (coefficient, channel) forward state kept for the backward pass.
struct FusionEntry {
    Eigen::VectorXd lin;    // linear radiance per exposure (pre tone map)
    Eigen::VectorXd z;      // tone-mapped values f(lin)
    Eigen::VectorXd gamma;  // well-exposedness
    Eigen::VectorXd m;      // MLP outputs
    Eigen::VectorXd raw;    // m * gamma, pre-normalization
    Eigen::VectorXd w;      // fusion weights
    MlpTrace mlp;
    double fused = 0.0;
};

struct FusionTrace {
    int exposure_count = 0;
    WeightMode mode = WeightMode::Softmax;
    std::vector<FusionEntry> entries;  // [coefficient * 3 + channel]
};

struct FuseResult {
    GaussianSet scene;  // LinearHDR, geometry bit-identical to input
    FusionTrace trace;
};

// Weight pipeline for one (coefficient, channel): MLP over the stacked
// [gamma, ldr] input, per-exposure gamma product, then normalization.
// When entry is given, intermediates are recorded for the backward pass.
inline Eigen::VectorXd fusion_weights(const Eigen::VectorXd& gamma, const Eigen::VectorXd& ldr,
                                      const Mlp& mlp, WeightMode mode,
                                      FusionEntry* entry = nullptr) {
    const int n = static_cast<int>(gamma.size());
    if (ldr.size() != n) throw std::invalid_argument("fusion_weights: gamma/ldr width mismatch");
    if (mlp.output_width() != n || mlp.input_width() != 2 * n) {
        throw std::invalid_argument("fusion_weights: MLP width mismatch");
    }
    Eigen::VectorXd u(2 * n);
    u.head(n) = gamma;
    u.tail(n) = ldr;
    MlpTrace local;
    MlpTrace* tr = entry ? &entry->mlp : &local;
    Eigen::VectorXd m = mlp.forward(u, tr);
    Eigen::VectorXd raw = m.cwiseProduct(gamma);
    Eigen::VectorXd w(n);
    if (mode == WeightMode::Softmax) {
        const double top = raw.maxCoeff();
        double denom = 0.0;
        for (int p = 0; p < n; ++p) {
            w[p] = std::exp(raw[p] - top);
            denom += w[p];
        }
        w /= denom;
    } else {
        const double denom = raw.sum();
        if (!(denom > 0.0)) {
            throw std::invalid_argument("fusion_weights: oracle normalization needs positive raws");
        }
        w = raw / denom;
    }
    if (entry != nullptr) {
        entry->m = std::move(m);
        entry->raw = std::move(raw);
        entry->w = w;
    }
    return w;
}

inline FuseResult fuse(const BracketedScene& b, const ResponseCurve& curve,
                       const NeEFParams& params, WeightMode mode = WeightMode::Softmax) {
    const GaussianSet& geom = *b.geometry;
    const int n = b.exposure_count();
    if (params.exposure_count() != n) {
        throw std::invalid_argument("fuse: NeEF width disagrees with exposure count");
    }
    const int k = sh_coeff_count(geom.sh_degree);
    const std::size_t coeffs = static_cast<std::size_t>(geom.count()) * k;

    FuseResult out;
    out.scene = geom;
    out.scene.domain = ColorDomain::LinearHdr;
    out.scene.exposure = 0.0;
    out.trace.exposure_count = n;
    out.trace.mode = mode;
    out.trace.entries.resize(coeffs * 3);

    for (std::size_t t = 0; t < coeffs; ++t) {
        for (int c = 0; c < 3; ++c) {
            FusionEntry& e = out.trace.entries[t * 3 + c];
            const double sigma = params.sigma(c);
            e.lin.resize(n);
            e.z.resize(n);
            e.gamma.resize(n);
            for (int p = 0; p < n; ++p) {
                e.lin[p] = std::exp(b.log_radiance[static_cast<std::size_t>(p)][t * 3 + c]);
                e.z[p] = apply_crf(curve, e.lin[p]);
                e.gamma[p] = well_exposedness(e.z[p], sigma);
            }
            fusion_weights(e.gamma, e.z, params.mlps[static_cast<std::size_t>(c)], mode, &e);
            e.fused = e.w.dot(e.z);
            const int g = static_cast<int>(t) / k;
            const int kk = static_cast<int>(t) % k;
            out.scene.gaussians[static_cast<std::size_t>(g)].sh[static_cast<std::size_t>(kk)][c] =
                e.fused;
        }
    }
    return out;
}

// Straight-line Mertens-style oracle: weights are well-exposedness only,
// normalized per channel. Kept deliberately independent of fuse().
inline GaussianSet fuse_oracle(const BracketedScene& b, const ResponseCurve& curve,
                               const std::array<double, 3>& sigma) {
    const GaussianSet& geom = *b.geometry;
    const int n = b.exposure_count();
    const int k = sh_coeff_count(geom.sh_degree);
    GaussianSet out = geom;
    out.domain = ColorDomain::LinearHdr;
    out.exposure = 0.0;
    for (int g = 0; g < geom.count(); ++g) {
        for (int kk = 0; kk < k; ++kk) {
            const std::size_t t = static_cast<std::size_t>(g) * k + kk;
            for (int c = 0; c < 3; ++c) {
                double num = 0.0;
                double den = 0.0;
                std::vector<double> zs(static_cast<std::size_t>(n));
                std::vector<double> gs(static_cast<std::size_t>(n));
                for (int p = 0; p < n; ++p) {
                    const double lin =
                        std::exp(b.log_radiance[static_cast<std::size_t>(p)][t * 3 + c]);
                    zs[static_cast<std::size_t>(p)] = apply_crf(curve, lin);
                    gs[static_cast<std::size_t>(p)] =
                        well_exposedness(zs[static_cast<std::size_t>(p)], sigma[c]);
                }
                for (int p = 0; p < n; ++p) {
                    num += gs[static_cast<std::size_t>(p)] * zs[static_cast<std::size_t>(p)];
                    den += gs[static_cast<std::size_t>(p)];
                }
                out.gaussians[static_cast<std::size_t>(g)].sh[static_cast<std::size_t>(kk)][c] =
                    num / den;
            }
        }
    }
    return out;
}

struct NeEFGrads {
    std::array<double, 3> dlog_sigma = {0.0, 0.0, 0.0};
    std::array<MlpGrads, 3> mlps;
    std::vector<double> dlog_base;  // same layout as the base log block
};

// Adjoints of the full fusion chain: weighted sum -> softmax -> gamma
// product -> MLP -> well-exposedness -> CRF slope -> log shift. Upstream is
// d loss / d fused per (coefficient, channel).
inline NeEFGrads neef_backward(const ResponseCurve& curve, const NeEFParams& params,
                               const FusionTrace& trace,
                               const std::vector<double>& dfused) {
    if (trace.mode != WeightMode::Softmax) {
        throw std::invalid_argument("neef_backward: only the softmax path is trainable");
    }
    const int n = trace.exposure_count;
    if (trace.entries.size() != dfused.size()) {
        throw std::invalid_argument("neef_backward: upstream size mismatch");
    }
    NeEFGrads grads;
    for (int c = 0; c < 3; ++c) grads.mlps[static_cast<std::size_t>(c)] =
        params.mlps[static_cast<std::size_t>(c)].zero_grads();
    grads.dlog_base.assign(trace.entries.size(), 0.0);

    for (std::size_t idx = 0; idx < trace.entries.size(); ++idx) {
        const double g_up = dfused[idx];
        if (g_up == 0.0) continue;
        const FusionEntry& e = trace.entries[idx];
        const int c = static_cast<int>(idx % 3);
        const double sigma = params.sigma(c);

        // fused = w . z
        Eigen::VectorXd dw = g_up * e.z;
        Eigen::VectorXd dz = g_up * e.w;
        // softmax adjoint
        const double mix = dw.dot(e.w);
        Eigen::VectorXd draw = e.w.cwiseProduct(dw - Eigen::VectorXd::Constant(n, mix));
        // raw = m * gamma
        Eigen::VectorXd dm = draw.cwiseProduct(e.gamma);
        Eigen::VectorXd dgamma = draw.cwiseProduct(e.m);
        // MLP
        Eigen::VectorXd du = params.mlps[static_cast<std::size_t>(c)].backward(
            e.mlp, dm, grads.mlps[static_cast<std::size_t>(c)]);
        dgamma += du.head(n);
        dz += du.tail(n);
        // gamma = exp(-(z-0.5)^2 / (2 sigma^2))
        double dsigma = 0.0;
        for (int p = 0; p < n; ++p) {
            const double d = e.z[p] - 0.5;
            const double gp = e.gamma[p];
            dz[p] += dgamma[p] * gp * (-d / (sigma * sigma));
            dsigma += dgamma[p] * gp * (d * d) / (sigma * sigma * sigma);
        }
        grads.dlog_sigma[static_cast<std::size_t>(c)] += dsigma * sigma;
        // z = f(lin), lin = exp(log base + shift)
        double dlog = 0.0;
        for (int p = 0; p < n; ++p) {
            dlog += dz[p] * crf_slope(curve, e.lin[p]) * e.lin[p];
        }
        grads.dlog_base[idx] += dlog;
    }
    return grads;
}

}  // namespace sehdr

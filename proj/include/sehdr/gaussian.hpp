// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sehdr/image.hpp"

namespace sehdr {

inline constexpr int kMaxShDegree = 3;

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// Real spherical harmonic constants, degree 0..3, in the usual splatting
// ordering (m = -l..l per band, Condon-Shortley folded into the constants).
inline constexpr double kSh0 = 0.28209479177387814;
inline constexpr double kSh1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kSh2 = {
    1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
    -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kSh3 = {
    -0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
    0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
    -0.5900435899266435};

// Basis values for a unit direction. Degree is validated, direction is
// assumed normalized by the caller.
inline void sh_basis(int degree, const Eigen::Vector3d& dir, double* out) {
    if (degree < 0 || degree > kMaxShDegree) {
        throw std::invalid_argument("sh_basis: degree out of range");
    }
    const double x = dir.x(), y = dir.y(), z = dir.z();
    out[0] = kSh0;
    if (degree < 1) return;
    out[1] = -kSh1 * y;
    out[2] = kSh1 * z;
    out[3] = -kSh1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    out[4] = kSh2[0] * x * y;
    out[5] = kSh2[1] * y * z;
    out[6] = kSh2[2] * (2.0 * zz - xx - yy);
    out[7] = kSh2[3] * x * z;
    out[8] = kSh2[4] * (xx - yy);
    if (degree < 3) return;
    out[9] = kSh3[0] * y * (3.0 * xx - yy);
    out[10] = kSh3[1] * x * y * z;
    out[11] = kSh3[2] * y * (4.0 * zz - xx - yy);
    out[12] = kSh3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = kSh3[4] * x * (4.0 * zz - xx - yy);
    out[14] = kSh3[5] * z * (xx - yy);
    out[15] = kSh3[6] * x * (xx - 3.0 * yy);
}

struct Gaussian {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();   // per-axis stddev, > 0
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();  // unit, wxyz
    double opacity_logit = 0.0;
    // sh[k] is the RGB triple of coefficient k, k < (degree+1)^2.
    std::vector<Eigen::Vector3d> sh;
};

// World-space covariance R * diag(scale^2) * R^T. The quaternion is
// normalized here so covariance stays PSD even after file round trips.
inline Eigen::Matrix3d covariance(const Gaussian& g) {
    Eigen::Matrix3d r = g.rotation.normalized().toRotationMatrix();
    Eigen::Vector3d s2 = g.scale.cwiseProduct(g.scale);
    return r * s2.asDiagonal() * r.transpose();
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// View-dependent color; negative channels are kept (the rasterizer clamps).
inline Eigen::Vector3d eval_sh(const std::vector<Eigen::Vector3d>& sh, int degree,
                               const Eigen::Vector3d& dir) {
    double basis[16];
    sh_basis(degree, dir, basis);
    const int n = sh_coeff_count(degree);
    if (static_cast<int>(sh.size()) < n) {
        throw std::invalid_argument("eval_sh: coefficient count below degree");
    }
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (int k = 0; k < n; ++k) c += basis[k] * sh[k];
    return c;
}

struct GaussianSet {
    std::vector<Gaussian> gaussians;
    int sh_degree = 0;
    ColorDomain domain = ColorDomain::LinearHdr;
    double exposure = 0.0;  // meaningful only for LinearExposureScaled

    int count() const { return static_cast<int>(gaussians.size()); }

    void validate() const {
        if (sh_degree < 0 || sh_degree > kMaxShDegree) {
            throw std::invalid_argument("GaussianSet: sh_degree out of range");
        }
        if (domain == ColorDomain::Ldr) {
            throw std::invalid_argument("GaussianSet: Ldr is not a radiance domain");
        }
        const std::size_t k = static_cast<std::size_t>(sh_coeff_count(sh_degree));
        for (const auto& g : gaussians) {
            if (g.sh.size() != k) {
                throw std::invalid_argument("GaussianSet: sh size mismatches degree");
            }
            if (!g.mean.allFinite() || !g.scale.allFinite() ||
                !g.rotation.coeffs().allFinite() || !std::isfinite(g.opacity_logit)) {
                throw std::invalid_argument("GaussianSet: non-finite field");
            }
            if (g.scale.minCoeff() <= 0.0) {
                throw std::invalid_argument("GaussianSet: non-positive scale");
            }
            for (const auto& c : g.sh) {
                if (!c.allFinite()) throw std::invalid_argument("GaussianSet: non-finite sh");
            }
        }
    }
};

}  // namespace sehdr

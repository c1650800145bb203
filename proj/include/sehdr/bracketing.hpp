// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sehdr/common.hpp"
#include "sehdr/gaussian.hpp"

namespace sehdr {

// Exposure schedule around a base exposure. Ratios are Δt_j/Δt_1 for the
// derived channels; exposures are global, one schedule for the whole scene
// (a per-Gaussian schedule is a possible reading we deliberately left out).
struct ExposurePlan {
    double base_exposure = 1.0;
    std::vector<double> ratios;  // n-1 entries, positive, distinct, != 1

    int exposure_count() const { return static_cast<int>(ratios.size()) + 1; }

    void validate() const {
        if (!(base_exposure > 0.0) || !std::isfinite(base_exposure)) {
            throw std::invalid_argument("ExposurePlan: base exposure must be positive");
        }
        if (ratios.empty()) throw std::invalid_argument("ExposurePlan: needs >= 2 exposures");
        for (double r : ratios) {
            if (!(r > 0.0) || !std::isfinite(r)) {
                throw std::invalid_argument("ExposurePlan: nonpositive ratio");
            }
            if (r == 1.0) throw std::invalid_argument("ExposurePlan: ratio 1 duplicates base");
        }
        for (std::size_t i = 0; i < ratios.size(); ++i) {
            for (std::size_t j = i + 1; j < ratios.size(); ++j) {
                if (ratios[i] == ratios[j]) {
                    throw std::invalid_argument("ExposurePlan: duplicate ratio");
                }
            }
        }
    }

    // All exposures ascending and the index the base landed at.
    std::pair<std::vector<double>, int> sorted_exposures() const {
        validate();
        std::vector<double> ex;
        ex.push_back(base_exposure);
        for (double r : ratios) ex.push_back(r * base_exposure);
        std::sort(ex.begin(), ex.end());
        const int base_index = static_cast<int>(
            std::lower_bound(ex.begin(), ex.end(), base_exposure) - ex.begin());
        return {ex, base_index};
    }
};

// Seeded log-uniform ratio sampler over [lo, hi]; draws keep away from 1
// so plans stay valid.
inline std::vector<double> sample_log_uniform_ratios(std::uint64_t seed, int count,
                                                     double lo = 0.125, double hi = 8.0) {
    if (count < 1 || !(lo > 0.0) || !(hi > lo)) {
        throw std::invalid_argument("sample_log_uniform_ratios: bad arguments");
    }
    Rng rng(seed);
    std::vector<double> out;
    while (static_cast<int>(out.size()) < count) {
        const double r = std::exp(rng.uniform(std::log(lo), std::log(hi)));
        if (std::abs(r - 1.0) < 1e-6) continue;
        bool dup = false;
        for (double o : out) dup = dup || o == r;
        if (!dup) out.push_back(r);
    }
    return out;
}

// Bracketed multi-exposure channels. Radiance is stored as log-values, one
// flat block per exposure, indexed [gaussian * coeffs * 3]; the geometry is
// shared with the base set, never copied.
struct BracketedScene {
    const GaussianSet* geometry = nullptr;
    std::vector<double> exposures;               // ascending
    int base_index = 0;
    std::vector<std::vector<double>> log_radiance;  // [exposure][N*K*3]

    int exposure_count() const { return static_cast<int>(exposures.size()); }
    double base_exposure() const { return exposures[static_cast<std::size_t>(base_index)]; }

    std::size_t values_per_exposure() const {
        return log_radiance.empty() ? 0 : log_radiance.front().size();
    }
};

// Core derivation in log space. The base block is copied verbatim, derived
// blocks add the constant log-ratio, so the base channel is bit-identical
// to the input by construction.
inline BracketedScene bracket_logs(const GaussianSet& geometry,
                                   const std::vector<double>& base_log,
                                   const ExposurePlan& plan) {
    plan.validate();
    auto [exposures, base_index] = plan.sorted_exposures();
    BracketedScene b;
    b.geometry = &geometry;
    b.exposures = std::move(exposures);
    b.base_index = base_index;
    b.log_radiance.resize(b.exposures.size());
    const double log_base = std::log(plan.base_exposure);
    for (std::size_t j = 0; j < b.exposures.size(); ++j) {
        if (static_cast<int>(j) == base_index) {
            b.log_radiance[j] = base_log;
            continue;
        }
        const double shift = std::log(b.exposures[j]) - log_base;
        auto& block = b.log_radiance[j];
        block.resize(base_log.size());
        for (std::size_t t = 0; t < base_log.size(); ++t) block[t] = base_log[t] + shift;
    }
    return b;
}

// Flatten a set's linear radiance into logs; requires strict positivity.
inline std::vector<double> log_radiance_of(const GaussianSet& set) {
    const int k = sh_coeff_count(set.sh_degree);
    std::vector<double> logs;
    logs.reserve(static_cast<std::size_t>(set.count()) * k * 3);
    for (const auto& g : set.gaussians) {
        for (int i = 0; i < k; ++i) {
            for (int c = 0; c < 3; ++c) {
                const double v = g.sh[i][c];
                if (!(v > 0.0)) {
                    throw std::invalid_argument("bracket: base radiance must be positive");
                }
                logs.push_back(std::log(v));
            }
        }
    }
    return logs;
}

inline BracketedScene bracket(const GaussianSet& base, const ExposurePlan& plan) {
    if (base.domain != ColorDomain::LinearExposureScaled) {
        throw std::invalid_argument("bracket: base must be exposure-scaled linear radiance");
    }
    if (std::abs(base.exposure - plan.base_exposure) >
        1e-6 * std::max(1.0, std::abs(plan.base_exposure))) {
        throw std::invalid_argument("bracket: set exposure disagrees with plan base exposure");
    }
    return bracket_logs(base, log_radiance_of(base), plan);
}

// Linear radiance of one exposure channel as per-coefficient triples.
inline std::vector<Eigen::Vector3d> linear_radiance(const BracketedScene& b, int exposure) {
    const auto& block = b.log_radiance.at(static_cast<std::size_t>(exposure));
    std::vector<Eigen::Vector3d> out(block.size() / 3);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = Eigen::Vector3d(std::exp(block[3 * i]), std::exp(block[3 * i + 1]),
                                 std::exp(block[3 * i + 2]));
    }
    return out;
}

// Test oracle: worst relative violation of c^l_j / Δt_j == c^l_1 / Δt_1.
inline double exposure_consistency_residual(const BracketedScene& b) {
    constexpr double eps = 1e-12;
    const auto& base = b.log_radiance.at(static_cast<std::size_t>(b.base_index));
    const double dt1 = b.base_exposure();
    double worst = 0.0;
    for (std::size_t j = 0; j < b.log_radiance.size(); ++j) {
        const double dtj = b.exposures[j];
        for (std::size_t t = 0; t < base.size(); ++t) {
            const double ref = std::exp(base[t]) / dt1;
            const double got = std::exp(b.log_radiance[j][t]) / dtj;
            worst = std::max(worst, std::abs(got - ref) / std::max(ref, eps));
        }
    }
    return worst;
}

}  // namespace sehdr

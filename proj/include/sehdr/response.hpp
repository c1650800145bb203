// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sehdr/image.hpp"

namespace sehdr {

inline constexpr double kCrfEps = 1e-6;  // floor wherever logs of inverted values appear
inline constexpr int kCrfSamples = 1024;

// Camera response function as K uniformly spaced samples of f over [0,1].
// Strictly increasing with f(0)=0 and f(1)=1; evaluated by piecewise-linear
// interpolation, inverted by segment search.
struct ResponseCurve {
    std::string name;
    std::vector<double> samples;

    void validate() const {
        if (samples.size() < 2) throw std::invalid_argument("ResponseCurve: needs >= 2 samples");
        if (std::abs(samples.front()) > 1e-6 || std::abs(samples.back() - 1.0) > 1e-6) {
            throw std::invalid_argument("ResponseCurve " + name + ": endpoints not 0/1");
        }
        for (std::size_t i = 1; i < samples.size(); ++i) {
            if (!(samples[i] > samples[i - 1])) {
                throw std::invalid_argument("ResponseCurve " + name + ": not strictly increasing");
            }
            if (!std::isfinite(samples[i])) {
                throw std::invalid_argument("ResponseCurve " + name + ": non-finite sample");
            }
        }
    }
};

// Inputs outside [0,1] saturate; endpoints stay exact (f(0)=0, f(1)=1) so
// quantization and saturation behave like real capture.
inline double clamp_crf_input(double x) {
    return std::clamp(x, 0.0, 1.0);
}

inline double apply_crf(const ResponseCurve& curve, double x) {
    x = clamp_crf_input(x);
    const int k = static_cast<int>(curve.samples.size());
    const double t = x * (k - 1);
    int j = static_cast<int>(t);
    if (j > k - 2) j = k - 2;
    const double frac = t - j;
    return curve.samples[j] + frac * (curve.samples[j + 1] - curve.samples[j]);
}

// d apply_crf / dx at x; zero in the saturated regions, segment slope
// inside (right-continuous at knots, matching apply_crf's indexing).
inline double crf_slope(const ResponseCurve& curve, double x) {
    if (x < 0.0 || x > 1.0) return 0.0;
    const int k = static_cast<int>(curve.samples.size());
    const double t = x * (k - 1);
    int j = static_cast<int>(t);
    if (j > k - 2) j = k - 2;
    return (curve.samples[j + 1] - curve.samples[j]) * (k - 1);
}

inline double invert_crf(const ResponseCurve& curve, double z) {
    const int k = static_cast<int>(curve.samples.size());
    if (z <= curve.samples.front()) return 0.0;
    if (z >= curve.samples.back()) return 1.0;
    // first sample strictly greater than z; segment [j-1, j] brackets z
    const auto it = std::upper_bound(curve.samples.begin(), curve.samples.end(), z);
    const int j = static_cast<int>(it - curve.samples.begin());
    const double lo = curve.samples[j - 1], hi = curve.samples[j];
    const double frac = (z - lo) / (hi - lo);
    return (static_cast<double>(j - 1) + frac) / (k - 1);
}

namespace detail {

template <typename Fn>
ResponseCurve sample_curve(const std::string& name, Fn&& f) {
    ResponseCurve c;
    c.name = name;
    c.samples.resize(kCrfSamples);
    for (int i = 0; i < kCrfSamples; ++i) {
        c.samples[i] = f(static_cast<double>(i) / (kCrfSamples - 1));
    }
    // pin endpoints exactly; analytic forms below already hit them
    c.samples.front() = 0.0;
    c.samples.back() = 1.0;
    c.validate();
    return c;
}

}  // namespace detail

struct CurveDatabase {
    std::vector<ResponseCurve> curves;

    const ResponseCurve& by_name(const std::string& name) const {
        for (const auto& c : curves) {
            if (c.name == name) return c;
        }
        throw std::invalid_argument("curve database: no curve named " + name);
    }

    void validate() const {
        if (curves.empty()) throw std::invalid_argument("curve database: empty");
        for (const auto& c : curves) c.validate();
    }
};

// Built-in mini database of analytic curves; an external sampled-curve file
// can replace it through the config.
inline CurveDatabase builtin_curves() {
    CurveDatabase db;
    db.curves.push_back(detail::sample_curve("identity", [](double x) { return x; }));
    for (double g : {1.8, 2.2, 2.4}) {
        std::ostringstream name;
        name << "gamma-" << g;
        db.curves.push_back(
            detail::sample_curve(name.str(), [g](double x) { return std::pow(x, 1.0 / g); }));
    }
    auto logistic = [](double a, double x) {
        auto s = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
        return (s(a * (x - 0.5)) - s(-0.5 * a)) / (s(0.5 * a) - s(-0.5 * a));
    };
    db.curves.push_back(detail::sample_curve("sigmoid-a",
                                             [&](double x) { return logistic(6.0, x); }));
    db.curves.push_back(detail::sample_curve("sigmoid-b",
                                             [&](double x) { return logistic(10.0, x); }));
    // film-like shoulder curves: fast toe, compressed highlights
    db.curves.push_back(detail::sample_curve(
        "film-a", [](double x) { return (1.0 + 0.18) * x / (x + 0.18); }));
    db.curves.push_back(detail::sample_curve(
        "film-b", [](double x) { return (1.0 + 0.5) * x / (x + 0.5); }));
    db.validate();
    return db;
}

// Curve file: per block `name`, `K`, K ascending floats; blank-line separated.
inline CurveDatabase parse_curve_database(std::istream& in) {
    CurveDatabase db;
    std::string line;
    std::vector<std::string> block;
    auto flush = [&db](std::vector<std::string>& lines) {
        if (lines.empty()) return;
        ResponseCurve c;
        c.name = lines[0];
        if (lines.size() < 2) throw IoError("curve file: block '" + c.name + "' missing count");
        std::size_t k = 0;
        try {
            k = std::stoul(lines[1]);
        } catch (...) {
            throw IoError("curve file: bad sample count in block '" + c.name + "'");
        }
        std::vector<double> vals;
        for (std::size_t i = 2; i < lines.size(); ++i) {
            std::istringstream ls(lines[i]);
            double v;
            while (ls >> v) vals.push_back(v);
            if (!ls.eof()) throw IoError("curve file: bad float in block '" + c.name + "'");
        }
        if (vals.size() != k) {
            throw IoError("curve file: block '" + c.name + "' sample count mismatch");
        }
        c.samples = std::move(vals);
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw IoError(std::string("curve file: ") + e.what());
        }
        db.curves.push_back(std::move(c));
        lines.clear();
    };
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) {
            flush(block);
        } else {
            block.push_back(line);
        }
    }
    flush(block);
    if (db.curves.empty()) throw IoError("curve file: no curves found");
    return db;
}

inline std::string format_curve_database(const CurveDatabase& db) {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t i = 0; i < db.curves.size(); ++i) {
        if (i) out << "\n";
        out << db.curves[i].name << "\n" << db.curves[i].samples.size() << "\n";
        for (double v : db.curves[i].samples) out << v << "\n";
    }
    return out.str();
}

// Linear-interpolated quantile over all channel samples, numpy convention.
inline double image_quantile(const ImagePlane& img, double q) {
    std::vector<double> vals;
    vals.reserve(img.pixels.size() * 3);
    for (const auto& p : img.pixels) {
        vals.push_back(p[0]);
        vals.push_back(p[1]);
        vals.push_back(p[2]);
    }
    if (vals.empty()) throw std::invalid_argument("image_quantile: empty image");
    std::sort(vals.begin(), vals.end());
    const double pos = q * (static_cast<double>(vals.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= vals.size()) return vals.back();
    const double frac = pos - static_cast<double>(lo);
    return vals[lo] + frac * (vals[lo + 1] - vals[lo]);
}

inline double curve_roughness(const ResponseCurve& c) {
    double acc = 0.0;
    for (std::size_t i = 1; i + 1 < c.samples.size(); ++i) {
        const double d2 = c.samples[i + 1] - 2.0 * c.samples[i] + c.samples[i - 1];
        acc += d2 * d2;
    }
    return acc;
}

// Score used by select_crf: recovered dynamic range of the probe under the
// candidate inverse, minus a smoothness penalty. Inverted quantiles are
// floored at kCrfEps so the log stays finite on black probes.
inline double crf_score(const ResponseCurve& c, double q01, double q99) {
    const double lo = std::max(invert_crf(c, q01), kCrfEps);
    const double hi = std::max(invert_crf(c, q99), kCrfEps);
    return std::log(hi / lo) - 10.0 * curve_roughness(c);
}

inline const ResponseCurve& select_crf(const CurveDatabase& db, const ImagePlane& probe) {
    db.validate();
    const double q01 = image_quantile(probe, 0.01);
    const double q99 = image_quantile(probe, 0.99);
    const ResponseCurve* best = nullptr;
    double best_score = 0.0;
    for (const auto& c : db.curves) {
        const double s = crf_score(c, q01, q99);
        // ties broken by name order so selection is total
        if (best == nullptr || s > best_score ||
            (s == best_score && c.name < best->name)) {
            best = &c;
            best_score = s;
        }
    }
    return *best;
}

inline double mu_law(double e) {
    constexpr double mu = 5000.0;
    return std::log1p(mu * e) / std::log1p(mu);
}

inline ImagePlane mu_law_image(const ImagePlane& img) {
    ImagePlane out = img;
    out.domain = ColorDomain::Ldr;
    for (auto& p : out.pixels) {
        p = Eigen::Vector3d(mu_law(p[0]), mu_law(p[1]), mu_law(p[2]));
    }
    return out;
}

// Reinhard preview: min-max normalize, then E/(1+E); range [0, 0.5].
// A constant image maps to zeros.
inline ImagePlane reinhard_tonemap(const ImagePlane& img) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& p : img.pixels) {
        lo = std::min(lo, p.minCoeff());
        hi = std::max(hi, p.maxCoeff());
    }
    ImagePlane out(img.width, img.height, ColorDomain::Ldr);
    if (!(hi > lo)) return out;
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const double e = (img.pixels[i][c] - lo) * inv;
            out.pixels[i][c] = e / (1.0 + e);
        }
    }
    return out;
}

}  // namespace sehdr

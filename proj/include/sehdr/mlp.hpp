// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sehdr/common.hpp"

namespace sehdr {

inline constexpr int kMlpHidden = 16;

struct MlpTrace {
    Eigen::VectorXd u;   // input
    Eigen::VectorXd a1;  // post-tanh, layer 1
    Eigen::VectorXd a2;  // post-tanh, layer 2
};

struct MlpGrads {
    Eigen::MatrixXd w1, w2, w3;
    Eigen::VectorXd b1, b2, b3;

    void add(const MlpGrads& o) {
        w1 += o.w1;
        w2 += o.w2;
        w3 += o.w3;
        b1 += o.b1;
        b2 += o.b2;
        b3 += o.b3;
    }
};

// Fixed-shape fusion MLP: n_in -> 16 -> 16 -> n_out, tanh hidden layers,
// identity output. Doubles throughout; adjoints are exact.
struct Mlp {
    Eigen::MatrixXd w1, w2, w3;
    Eigen::VectorXd b1, b2, b3;

    int input_width() const { return static_cast<int>(w1.cols()); }
    int output_width() const { return static_cast<int>(w3.rows()); }

    static Mlp create(int n_in, int n_out) {
        Mlp m;
        m.w1.setZero(kMlpHidden, n_in);
        m.w2.setZero(kMlpHidden, kMlpHidden);
        m.w3.setZero(n_out, kMlpHidden);
        m.b1.setZero(kMlpHidden);
        m.b2.setZero(kMlpHidden);
        m.b3.setZero(n_out);
        return m;
    }

    // Seeded init: weights uniform in [-0.5, 0.5]/sqrt(fan_in) filled in a
    // fixed row-major order, biases zero.
    void init(Rng& rng) {
        auto fill = [&rng](Eigen::MatrixXd& w) {
            const double s = 1.0 / std::sqrt(static_cast<double>(w.cols()));
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                for (Eigen::Index c = 0; c < w.cols(); ++c) {
                    w(r, c) = rng.uniform(-0.5, 0.5) * s;
                }
            }
        };
        fill(w1);
        fill(w2);
        fill(w3);
        b1.setZero();
        b2.setZero();
        b3.setZero();
    }

    // Freezes the network to a constant output regardless of input.
    void set_constant_output(double v) {
        w1.setZero();
        w2.setZero();
        w3.setZero();
        b1.setZero();
        b2.setZero();
        b3.setConstant(v);
    }

    Eigen::VectorXd forward(const Eigen::VectorXd& u, MlpTrace* trace = nullptr) const {
        if (u.size() != w1.cols()) throw std::invalid_argument("Mlp: input width mismatch");
        Eigen::VectorXd a1 = (w1 * u + b1).array().tanh();
        Eigen::VectorXd a2 = (w2 * a1 + b2).array().tanh();
        Eigen::VectorXd y = w3 * a2 + b3;
        if (trace != nullptr) {
            trace->u = u;
            trace->a1 = std::move(a1);
            trace->a2 = std::move(a2);
        }
        return y;
    }

    // Accumulates parameter gradients into acc and returns d loss / d input.
    Eigen::VectorXd backward(const MlpTrace& trace, const Eigen::VectorXd& dy,
                             MlpGrads& acc) const {
        Eigen::VectorXd da2 = w3.transpose() * dy;
        Eigen::VectorXd dz2 =
            da2.cwiseProduct(Eigen::VectorXd::Ones(da2.size()) - trace.a2.cwiseProduct(trace.a2));
        Eigen::VectorXd da1 = w2.transpose() * dz2;
        Eigen::VectorXd dz1 =
            da1.cwiseProduct(Eigen::VectorXd::Ones(da1.size()) - trace.a1.cwiseProduct(trace.a1));
        acc.w3 += dy * trace.a2.transpose();
        acc.b3 += dy;
        acc.w2 += dz2 * trace.a1.transpose();
        acc.b2 += dz2;
        acc.w1 += dz1 * trace.u.transpose();
        acc.b1 += dz1;
        return w1.transpose() * dz1;
    }

    MlpGrads zero_grads() const {
        MlpGrads g;
        g.w1.setZero(w1.rows(), w1.cols());
        g.w2.setZero(w2.rows(), w2.cols());
        g.w3.setZero(w3.rows(), w3.cols());
        g.b1.setZero(b1.size());
        g.b2.setZero(b2.size());
        g.b3.setZero(b3.size());
        return g;
    }

    std::size_t param_count() const {
        return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size() +
                                        w3.size() + b3.size());
    }

    // Flat parameter order: w1 row-major, b1, w2, b2, w3, b3. Shared by the
    // optimizer, the checkpoint format, and finite-difference probes.
    void flatten(double* out) const {
        std::size_t t = 0;
        auto put_m = [&](const Eigen::MatrixXd& w) {
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                for (Eigen::Index c = 0; c < w.cols(); ++c) out[t++] = w(r, c);
            }
        };
        auto put_v = [&](const Eigen::VectorXd& v) {
            for (Eigen::Index i = 0; i < v.size(); ++i) out[t++] = v[i];
        };
        put_m(w1);
        put_v(b1);
        put_m(w2);
        put_v(b2);
        put_m(w3);
        put_v(b3);
    }

    void unflatten(const double* in) {
        std::size_t t = 0;
        auto get_m = [&](Eigen::MatrixXd& w) {
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = in[t++];
            }
        };
        auto get_v = [&](Eigen::VectorXd& v) {
            for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = in[t++];
        };
        get_m(w1);
        get_v(b1);
        get_m(w2);
        get_v(b2);
        get_m(w3);
        get_v(b3);
    }
};

inline void flatten_grads(const MlpGrads& g, double* out) {
    std::size_t t = 0;
    auto put_m = [&](const Eigen::MatrixXd& w) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) out[t++] = w(r, c);
        }
    };
    auto put_v = [&](const Eigen::VectorXd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) out[t++] = v[i];
    };
    put_m(g.w1);
    put_v(g.b1);
    put_m(g.w2);
    put_v(g.b2);
    put_m(g.w3);
    put_v(g.b3);
}

}  // namespace sehdr

// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sehdr {

// Bad CLI arguments or malformed config. Mapped to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unreadable, unwritable, or malformed files. Mapped to exit code 2.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where the pipeline requires finite ones. Exit code 1.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic RNG used everywhere; never seeded from the clock.
// Unit uniforms come from the top 53 bits so streams are reproducible
// across platforms, normals use Box-Muller without a cached spare.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        double u1 = 1.0 - uniform();  // (0,1], keeps log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    // tiny compared to 2^64 and determinism matters more than bias < 1e-15.
    std::uint64_t uniform_int(std::uint64_t n) { return gen_() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_int(i)]);
        }
    }

    std::uint64_t raw() { return gen_(); }

  private:
    std::mt19937_64 gen_;
};

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Worker count for row-parallel rasterization. Parsed fresh on every call
// because tests toggle it in-process to check thread invariance.
inline int thread_count() {
    const char* env = std::getenv("SEHDR_THREADS");
    if (env == nullptr) return 1;
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || v < 1) return 1;
    if (v > 64) v = 64;
    return static_cast<int>(v);
}

// Runs fn(row) for every row. Each call must touch disjoint state; the
// renderer guarantees that by giving every row its own pixels and, in the
// backward pass, its own gradient buffer merged serially afterwards.
template <typename Fn>
void parallel_rows(int rows, Fn&& fn) {
    int workers = thread_count();
    if (workers <= 1 || rows <= 1) {
        for (int r = 0; r < rows; ++r) fn(r);
        return;
    }
    if (workers > rows) workers = rows;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([w, workers, rows, &fn] {
            for (int r = w; r < rows; r += workers) fn(r);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace sehdr

// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sehdr/common.hpp"

namespace sehdr {

// Radiometric domain of a pixel or radiance buffer.
//  LinearExposureScaled: linear values already multiplied by an exposure time.
//  LinearHdr:            linear scene radiance, exposure-free.
//  Ldr:                  tone-mapped display values in [0,1].
enum class ColorDomain : int {
    LinearExposureScaled = 0,
    LinearHdr = 1,
    Ldr = 2,
};

struct ImagePlane {
    int width = 0;
    int height = 0;
    ColorDomain domain = ColorDomain::LinearHdr;
    double exposure = 0.0;  // meaningful only for LinearExposureScaled
    std::vector<Eigen::Vector3d> pixels;  // row-major, pixels[r*width+c]

    ImagePlane() = default;
    ImagePlane(int w, int h, ColorDomain d, double exp = 0.0)
        : width(w), height(h), domain(d), exposure(exp) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("ImagePlane: non-positive size");
        pixels.assign(static_cast<std::size_t>(w) * h, Eigen::Vector3d::Zero());
    }

    Eigen::Vector3d& at(int r, int c) {
        return pixels[static_cast<std::size_t>(r) * width + c];
    }
    const Eigen::Vector3d& at(int r, int c) const {
        return pixels[static_cast<std::size_t>(r) * width + c];
    }

    std::size_t size() const { return pixels.size(); }

    bool finite() const {
        for (const auto& p : pixels) {
            if (!p.allFinite()) return false;
        }
        return true;
    }
};

inline void check_same_shape(const ImagePlane& a, const ImagePlane& b, const char* who) {
    if (a.width != b.width || a.height != b.height) {
        throw std::invalid_argument(std::string(who) + ": image shapes differ");
    }
}

}  // namespace sehdr

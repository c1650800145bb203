// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sehdr/gaussian.hpp"

namespace sehdr {

// Scene container, format "SEHDRSC1".
//   header (32 bytes): magic[8], u32 version=1, u32 count, u32 sh_degree,
//                      u32 domain, f32 exposure, u32 reserved=0
//   body: per Gaussian, little-endian f32:
//     mean xyz, scale xyz, rotation wxyz, opacity_logit, sh[k] rgb for all k.
// Everything is stored in f32; Gaussian fields survive a round trip exactly
// because writers cast once and readers widen the same bits.

inline constexpr char kSceneMagic[8] = {'S', 'E', 'H', 'D', 'R', 'S', 'C', '1'};

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    buf.append(b, 4);
}

inline void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

inline std::uint32_t get_u32(const std::string& buf, std::size_t& pos) {
    if (pos + 4 > buf.size()) throw IoError("scene file: truncated");
    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
    pos += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32(const std::string& buf, std::size_t& pos) {
    std::uint32_t bits = get_u32(buf, pos);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

// All artifact writers go through a temp-file rename so partial output is
// never visible under the final name.
inline void atomic_write(const std::string& path, const std::string& data) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        if (!fs::exists(target.parent_path(), ec)) {
            throw IoError("cannot write " + path + ": directory does not exist");
        }
    }
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path);
}

inline std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

}  // namespace detail

inline std::string encode_scene(const GaussianSet& set) {
    set.validate();
    std::string buf;
    buf.append(kSceneMagic, 8);
    detail::put_u32(buf, 1u);
    detail::put_u32(buf, static_cast<std::uint32_t>(set.count()));
    detail::put_u32(buf, static_cast<std::uint32_t>(set.sh_degree));
    detail::put_u32(buf, static_cast<std::uint32_t>(set.domain));
    detail::put_f32(buf, set.domain == ColorDomain::LinearExposureScaled
                             ? static_cast<float>(set.exposure)
                             : 0.0f);
    detail::put_u32(buf, 0u);
    const int k = sh_coeff_count(set.sh_degree);
    for (const auto& g : set.gaussians) {
        for (int i = 0; i < 3; ++i) detail::put_f32(buf, static_cast<float>(g.mean[i]));
        for (int i = 0; i < 3; ++i) detail::put_f32(buf, static_cast<float>(g.scale[i]));
        detail::put_f32(buf, static_cast<float>(g.rotation.w()));
        detail::put_f32(buf, static_cast<float>(g.rotation.x()));
        detail::put_f32(buf, static_cast<float>(g.rotation.y()));
        detail::put_f32(buf, static_cast<float>(g.rotation.z()));
        detail::put_f32(buf, static_cast<float>(g.opacity_logit));
        for (int i = 0; i < k; ++i) {
            for (int c = 0; c < 3; ++c) detail::put_f32(buf, static_cast<float>(g.sh[i][c]));
        }
    }
    return buf;
}

inline GaussianSet decode_scene(const std::string& buf, const std::string& origin) {
    std::size_t pos = 0;
    if (buf.size() < 32 || std::memcmp(buf.data(), kSceneMagic, 8) != 0) {
        throw IoError(origin + ": bad magic, not a scene file");
    }
    pos = 8;
    const std::uint32_t version = detail::get_u32(buf, pos);
    if (version != 1u) throw IoError(origin + ": unsupported scene version");
    const std::uint32_t count = detail::get_u32(buf, pos);
    const std::uint32_t degree = detail::get_u32(buf, pos);
    const std::uint32_t domain = detail::get_u32(buf, pos);
    const float exposure = detail::get_f32(buf, pos);
    detail::get_u32(buf, pos);  // reserved
    if (degree > static_cast<std::uint32_t>(kMaxShDegree)) {
        throw IoError(origin + ": sh degree out of range");
    }
    if (domain > 1u) throw IoError(origin + ": bad color domain");
    if (count > 10'000'000u) throw IoError(origin + ": implausible gaussian count");
    GaussianSet set;
    set.sh_degree = static_cast<int>(degree);
    set.domain = static_cast<ColorDomain>(domain);
    set.exposure = exposure;
    const int k = sh_coeff_count(set.sh_degree);
    const std::size_t per = static_cast<std::size_t>(11 + 3 * k) * 4;
    if (buf.size() != 32 + per * count) throw IoError(origin + ": body size mismatch");
    set.gaussians.resize(count);
    for (auto& g : set.gaussians) {
        for (int i = 0; i < 3; ++i) g.mean[i] = detail::get_f32(buf, pos);
        for (int i = 0; i < 3; ++i) g.scale[i] = detail::get_f32(buf, pos);
        const double w = detail::get_f32(buf, pos);
        const double x = detail::get_f32(buf, pos);
        const double y = detail::get_f32(buf, pos);
        const double z = detail::get_f32(buf, pos);
        g.rotation = Eigen::Quaterniond(w, x, y, z);
        g.opacity_logit = detail::get_f32(buf, pos);
        g.sh.resize(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            for (int c = 0; c < 3; ++c) g.sh[i][c] = detail::get_f32(buf, pos);
        }
    }
    try {
        set.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(origin + ": " + e.what());
    }
    const double qn = 1.0;  // file quats are stored normalized; allow f32 slop
    for (const auto& g : set.gaussians) {
        if (std::abs(g.rotation.norm() - qn) > 1e-3) {
            throw IoError(origin + ": quaternion far from unit length");
        }
    }
    return set;
}

inline void write_scene(const std::string& path, const GaussianSet& set) {
    detail::atomic_write(path, encode_scene(set));
}

inline GaussianSet read_scene(const std::string& path) {
    return decode_scene(detail::read_all(path), path);
}

}  // namespace sehdr

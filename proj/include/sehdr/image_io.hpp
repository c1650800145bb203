// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "sehdr/camera.hpp"
#include "sehdr/common.hpp"
#include "sehdr/image.hpp"
#include "sehdr/scene_io.hpp"

namespace sehdr {

// Raster interchange formats.
//   PPM (P6, maxval 255): display images; quantization round(x*255), clamp.
//   PFM (color "PF", scale -1.0): float radiance, little-endian, rows stored
//   bottom-up per PFM convention. f32 payload survives a round trip bit-exactly.

inline constexpr double kByteScale = 255.0;

inline unsigned char quantize_byte(double x) {
    double q = std::llround(x * kByteScale);
    if (q < 0.0) q = 0.0;
    if (q > 255.0) q = 255.0;
    return static_cast<unsigned char>(q);
}

inline std::string encode_ppm(const ImagePlane& img) {
    if (img.width <= 0 || img.height <= 0) throw IoError("ppm: empty image");
    std::string buf = "P6\n" + std::to_string(img.width) + " " +
                      std::to_string(img.height) + "\n255\n";
    buf.reserve(buf.size() + img.pixels.size() * 3);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const Eigen::Vector3d& p = img.at(r, c);
            for (int ch = 0; ch < 3; ++ch) {
                buf.push_back(static_cast<char>(quantize_byte(p[ch])));
            }
        }
    }
    return buf;
}

namespace detail {

// Reads one whitespace-delimited header token; '#' starts a comment to EOL.
inline std::string pnm_token(const std::string& buf, std::size_t& pos, const std::string& origin) {
    while (pos < buf.size()) {
        const char ch = buf[pos];
        if (ch == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= buf.size()) throw IoError(origin + ": truncated header");
    std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    return buf.substr(start, pos - start);
}

inline int parse_pnm_int(const std::string& tok, const std::string& origin, const char* what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (...) {
        throw IoError(origin + ": bad " + what + " field '" + tok + "'");
    }
}

}  // namespace detail

inline ImagePlane decode_ppm(const std::string& buf, const std::string& origin) {
    std::size_t pos = 0;
    const std::string magic = detail::pnm_token(buf, pos, origin);
    if (magic != "P6") throw IoError(origin + ": not a P6 ppm (magic '" + magic + "')");
    const int w = detail::parse_pnm_int(detail::pnm_token(buf, pos, origin), origin, "width");
    const int h = detail::parse_pnm_int(detail::pnm_token(buf, pos, origin), origin, "height");
    const int maxval = detail::parse_pnm_int(detail::pnm_token(buf, pos, origin), origin, "maxval");
    if (w <= 0 || h <= 0) throw IoError(origin + ": non-positive dimensions");
    if (maxval != 255) throw IoError(origin + ": unsupported maxval " + std::to_string(maxval));
    if (pos >= buf.size()) throw IoError(origin + ": truncated header");
    ++pos;  // single whitespace byte separates header from raster
    const std::size_t need = static_cast<std::size_t>(w) * h * 3;
    if (buf.size() - pos != need) throw IoError(origin + ": raster size mismatch");
    ImagePlane img(w, h, ColorDomain::Ldr);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                img.at(r, c)[ch] =
                    static_cast<double>(static_cast<unsigned char>(buf[pos++])) / kByteScale;
            }
        }
    }
    return img;
}

inline std::string encode_pfm(const ImagePlane& img) {
    if (img.width <= 0 || img.height <= 0) throw IoError("pfm: empty image");
    std::string buf = "PF\n" + std::to_string(img.width) + " " +
                      std::to_string(img.height) + "\n-1.0\n";
    buf.reserve(buf.size() + img.pixels.size() * 12);
    for (int r = img.height - 1; r >= 0; --r) {
        for (int c = 0; c < img.width; ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                const float v = static_cast<float>(img.at(r, c)[ch]);
                std::uint32_t bits;
                std::memcpy(&bits, &v, 4);
                char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                             static_cast<char>((bits >> 16) & 0xff),
                             static_cast<char>((bits >> 24) & 0xff)};
                buf.append(b, 4);
            }
        }
    }
    return buf;
}

inline ImagePlane decode_pfm(const std::string& buf, const std::string& origin) {
    std::size_t pos = 0;
    const std::string magic = detail::pnm_token(buf, pos, origin);
    if (magic != "PF") {
        throw IoError(origin + ": not a color pfm (magic '" + magic + "')");
    }
    const int w = detail::parse_pnm_int(detail::pnm_token(buf, pos, origin), origin, "width");
    const int h = detail::parse_pnm_int(detail::pnm_token(buf, pos, origin), origin, "height");
    const std::string scale_tok = detail::pnm_token(buf, pos, origin);
    double scale = 0.0;
    try {
        scale = std::stod(scale_tok);
    } catch (...) {
        throw IoError(origin + ": bad scale field '" + scale_tok + "'");
    }
    if (w <= 0 || h <= 0) throw IoError(origin + ": non-positive dimensions");
    if (!(scale < 0.0)) throw IoError(origin + ": big-endian pfm unsupported (scale must be < 0)");
    if (pos >= buf.size()) throw IoError(origin + ": truncated header");
    ++pos;
    const std::size_t need = static_cast<std::size_t>(w) * h * 12;
    if (buf.size() - pos != need) throw IoError(origin + ": raster size mismatch");
    ImagePlane img(w, h, ColorDomain::LinearHdr);
    for (int r = h - 1; r >= 0; --r) {
        for (int c = 0; c < w; ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
                const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                                           (static_cast<std::uint32_t>(p[1]) << 8) |
                                           (static_cast<std::uint32_t>(p[2]) << 16) |
                                           (static_cast<std::uint32_t>(p[3]) << 24);
                float v;
                std::memcpy(&v, &bits, 4);
                img.at(r, c)[ch] = static_cast<double>(v);
                pos += 4;
            }
        }
    }
    return img;
}

inline void write_ppm(const std::string& path, const ImagePlane& img) {
    detail::atomic_write(path, encode_ppm(img));
}

inline ImagePlane read_ppm(const std::string& path) {
    return decode_ppm(detail::read_all(path), path);
}

inline void write_pfm(const std::string& path, const ImagePlane& img) {
    detail::atomic_write(path, encode_pfm(img));
}

inline ImagePlane read_pfm(const std::string& path) {
    return decode_pfm(detail::read_all(path), path);
}

// Camera rig text file, format "SEHDRCAM1": a count line, then per camera a
// block of size, intrinsics, world-to-camera rotation rows, and translation.
// Doubles print at 17 significant digits so the rig round-trips exactly.

inline std::string encode_cameras(const std::vector<Camera>& cams) {
    std::ostringstream out;
    out.precision(17);
    out << "SEHDRCAM1\n" << cams.size() << "\n";
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const Camera& cam = cams[i];
        cam.validate();
        out << "camera " << i << "\n";
        out << "size " << cam.width << " " << cam.height << "\n";
        out << "intrinsics " << cam.fx << " " << cam.fy << " " << cam.cx << " " << cam.cy << "\n";
        for (int r = 0; r < 3; ++r) {
            out << "rotation " << cam.rotation(r, 0) << " " << cam.rotation(r, 1) << " "
                << cam.rotation(r, 2) << "\n";
        }
        out << "translation " << cam.translation[0] << " " << cam.translation[1] << " "
            << cam.translation[2] << "\n";
    }
    return out.str();
}

inline std::vector<Camera> decode_cameras(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string magic;
    if (!(in >> magic) || magic != "SEHDRCAM1") {
        throw IoError(origin + ": bad magic, not a camera file");
    }
    std::size_t count = 0;
    if (!(in >> count) || count > 100000) throw IoError(origin + ": bad camera count");
    auto expect = [&](const char* word) {
        std::string tok;
        if (!(in >> tok) || tok != word) {
            throw IoError(origin + ": expected '" + word + "' got '" + tok + "'");
        }
    };
    std::vector<Camera> cams(count);
    for (std::size_t i = 0; i < count; ++i) {
        expect("camera");
        std::size_t idx = 0;
        if (!(in >> idx) || idx != i) throw IoError(origin + ": camera index out of order");
        Camera& cam = cams[i];
        expect("size");
        if (!(in >> cam.width >> cam.height)) throw IoError(origin + ": bad size");
        expect("intrinsics");
        if (!(in >> cam.fx >> cam.fy >> cam.cx >> cam.cy)) {
            throw IoError(origin + ": bad intrinsics");
        }
        for (int r = 0; r < 3; ++r) {
            expect("rotation");
            if (!(in >> cam.rotation(r, 0) >> cam.rotation(r, 1) >> cam.rotation(r, 2))) {
                throw IoError(origin + ": bad rotation row");
            }
        }
        expect("translation");
        if (!(in >> cam.translation[0] >> cam.translation[1] >> cam.translation[2])) {
            throw IoError(origin + ": bad translation");
        }
        try {
            cam.validate();
        } catch (const std::invalid_argument& e) {
            throw IoError(origin + ": " + e.what());
        }
    }
    std::string tail;
    if (in >> tail) throw IoError(origin + ": trailing content '" + tail + "'");
    return cams;
}

inline void write_cameras(const std::string& path, const std::vector<Camera>& cams) {
    detail::atomic_write(path, encode_cameras(cams));
}

inline std::vector<Camera> read_cameras(const std::string& path) {
    return decode_cameras(detail::read_all(path), path);
}

}  // namespace sehdr

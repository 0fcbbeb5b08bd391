#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathssl/error.hpp"

namespace pathssl {

/// Optical zoom level of a patch. Approximate sampling pitch:
/// 5x ~ 2 um/px, 10x ~ 1 um/px, 20x ~ 0.5 um/px, 40x ~ 0.25 um/px.
enum class Magnification : std::uint8_t { x5 = 0, x10 = 1, x20 = 2, x40 = 3 };

inline const char* to_string(Magnification m) {
    switch (m) {
        case Magnification::x5: return "5x";
        case Magnification::x10: return "10x";
        case Magnification::x20: return "20x";
        case Magnification::x40: return "40x";
    }
    return "?";
}

inline Magnification magnification_from_string(const std::string& s) {
    if (s == "5x") return Magnification::x5;
    if (s == "10x") return Magnification::x10;
    if (s == "20x") return Magnification::x20;
    if (s == "40x") return Magnification::x40;
    throw DataError("unknown magnification '" + s + "' (expected 5x|10x|20x|40x)");
}

/// Microns per pixel at a magnification, relative scale only.
inline double microns_per_pixel(Magnification m) {
    switch (m) {
        case Magnification::x5: return 2.0;
        case Magnification::x10: return 1.0;
        case Magnification::x20: return 0.5;
        case Magnification::x40: return 0.25;
    }
    return 1.0;
}

/// An RGB image tile with provenance. Pixels are stored row-major,
/// interleaved RGB, as sRGB-encoded reals in [0,1]. Every operation that
/// returns a Patch clamps back into [0,1] as part of its contract.
struct Patch {
    int height = 0;
    int width = 0;
    std::vector<float> pixels; // height*width*3
    std::string slide_id;
    std::string case_id;
    Magnification magnification = Magnification::x20;
    int origin_x = 0;
    int origin_y = 0;

    Patch() = default;
    Patch(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

    float& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    float at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    bool same_shape(const Patch& o) const { return height == o.height && width == o.width; }

    /// Copy of provenance fields onto a new image body.
    Patch like(int h, int w) const {
        Patch p(h, w);
        p.slide_id = slide_id;
        p.case_id = case_id;
        p.magnification = magnification;
        p.origin_x = origin_x;
        p.origin_y = origin_y;
        return p;
    }
};

inline void validate_patch(const Patch& p, const char* where) {
    if (p.height < 1 || p.width < 1)
        throw DataError(std::string(where) + ": patch must be at least 1x1");
    if (p.pixels.size() != static_cast<std::size_t>(p.height) * p.width * 3)
        throw DataError(std::string(where) + ": pixel buffer does not match dimensions");
}

inline void clamp_unit(Patch& p) {
    for (auto& v : p.pixels) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
}

} // namespace pathssl

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "pathssl/patch.hpp"
#include "pathssl/rng.hpp"

namespace pathssl {

/// The three color spaces used for stain augmentation.
enum class ColorSpace : std::uint8_t { LAB = 0, HSV = 1, HED = 2 };

inline const char* to_string(ColorSpace s) {
    switch (s) {
        case ColorSpace::LAB: return "lab";
        case ColorSpace::HSV: return "hsv";
        case ColorSpace::HED: return "hed";
    }
    return "?";
}

ColorSpace color_space_from_string(const std::string& s);

/// H x W x 3 array of doubles in some color space (not [0,1]-bounded).
struct PixelArray {
    int height = 0;
    int width = 0;
    std::vector<double> values; // row-major, interleaved channels

    PixelArray() = default;
    PixelArray(int h, int w) : height(h), width(w), values(static_cast<std::size_t>(h) * w * 3, 0.0) {}

    double& at(int y, int x, int c) {
        return values[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    double at(int y, int x, int c) const {
        return values[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

/// First and second order channel statistics in one color space.
struct ColorStats {
    ColorSpace space = ColorSpace::LAB;
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{}; // population std, >= 0
};

/// Gaussian fit over per-image channel statistics, one entry per channel.
struct ChannelFit {
    double mean_of_means = 0.0;
    double std_of_means = 0.0;  // >= 0
    double mean_of_stds = 0.0;
    double std_of_stds = 0.0;   // >= 0
};

struct SpaceTemplate {
    std::array<ChannelFit, 3> channels{};
};

/// Sampling distribution for RandStainNA targets: per color space, per
/// channel Gaussian fits over the color statistics of a set of images.
struct StainTemplate {
    SpaceTemplate lab;
    SpaceTemplate hsv;
    SpaceTemplate hed;
    int n_fit_images = 0;

    const SpaceTemplate& space(ColorSpace s) const {
        switch (s) {
            case ColorSpace::LAB: return lab;
            case ColorSpace::HSV: return hsv;
            default: return hed;
        }
    }
    SpaceTemplate& space(ColorSpace s) {
        switch (s) {
            case ColorSpace::LAB: return lab;
            case ColorSpace::HSV: return hsv;
            default: return hed;
        }
    }
};

/// Brightness/contrast/saturation scale ranges plus max hue rotation.
struct JitterStrength {
    double brightness = 0.0; // >= 0
    double contrast = 0.0;   // >= 0
    double saturation = 0.0; // >= 0
    double hue = 0.0;        // in [0, 0.5]

    static JitterStrength weak() { return {0.2, 0.2, 0.2, 0.05}; }
    static JitterStrength moderate() { return {0.4, 0.4, 0.4, 0.1}; }
    static JitterStrength strong() { return {0.8, 0.8, 0.8, 0.2}; }
};

/// Converts an sRGB patch into LAB (CIE 1976, D65), HSV (hexcone, hue
/// scaled to [0,1)), or HED (optical density through the inverse of the
/// row-normalized H&E+DAB stain matrix, OD floor 1e-6).
PixelArray convert(const Patch& patch, ColorSpace space);

/// Inverse of convert. Output pixels are clamped to [0,1].
Patch convert_back(const PixelArray& values, ColorSpace space);

/// Per-channel mean and population standard deviation in the given space.
ColorStats channel_stats(const Patch& patch, ColorSpace space);
ColorStats channel_stats(const PixelArray& values, ColorSpace space);

/// Gaussian fits over the per-image channel statistics of `patches`, for
/// all three color spaces. Within an image the std is population; across
/// images the fit uses sample (n-1) std. Requires at least 2 patches and
/// is invariant to their order. Callers wanting "a random selection of
/// training images" subsample before calling.
StainTemplate fit_template(std::span<const Patch> patches);

/// Per-channel affine transfer of mean/std statistics:
///   out = (in - source.mean) / max(source.std, 1e-6) * target.std + target.mean
/// Channels whose source and target stats are equal pass through untouched,
/// so transfer onto an image's own statistics is the exact identity.
PixelArray reinhard_transfer(const PixelArray& values, const ColorStats& source,
                             const ColorStats& target);

/// RandStainNA: picks one of the three color spaces uniformly at random,
/// samples a target mean and std per channel from the template's Gaussian
/// fits (negative sampled stds clamp to 0), Reinhard-transfers the patch
/// onto the target in that space, and converts back. Draw order per call:
/// space, then per channel mean then std. chosen_space, when non-null,
/// receives the sampled color space.
Patch randstainna(const Patch& patch, const StainTemplate& tmpl, Rng& rng,
                  ColorSpace* chosen_space = nullptr);

/// Single jitter components with pinned factors (also used by color_jitter).
Patch adjust_brightness(const Patch& patch, double factor);
Patch adjust_contrast(const Patch& patch, double factor);
Patch adjust_saturation(const Patch& patch, double factor);
Patch adjust_hue(const Patch& patch, double delta); // hue shift, wrapped mod 1

/// Standard SSL color jitter: with probability apply_probability, scales
/// brightness/contrast/saturation by factors drawn uniformly from
/// [max(0,1-s), 1+s] and rotates hue by a uniform draw from [-h, +h],
/// applying the four components in a uniformly shuffled order.
Patch color_jitter(const Patch& patch, const JitterStrength& strength,
                   double apply_probability, Rng& rng);

/// Template (de)serialization: a small documented JSON schema so templates
/// can be versioned and diffed. See README for the key layout.
std::string stain_template_to_json(const StainTemplate& tmpl);
StainTemplate stain_template_from_json(const std::string& text);
void save_stain_template(const std::string& path, const StainTemplate& tmpl);
StainTemplate load_stain_template(const std::string& path);

} // namespace pathssl

#include "pathssl/imagecolor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pathssl {

namespace {

constexpr double kOdFloor = 1e-6;   // optical density floor, keeps log finite
constexpr double kStdFloor = 1e-6;  // Reinhard division floor for flat channels

// sRGB <-> linear transfer
double srgb_decode(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}
double srgb_encode(double c) {
    return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

// Linear sRGB -> XYZ (D65). White point taken as the row sums so that
// RGB (1,1,1) lands exactly on it.
constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

struct Mat3 {
    double m[3][3];
};

Mat3 invert3(const Mat3& a) {
    const auto& m = a.m;
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    Mat3 r;
    r.m[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    r.m[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    r.m[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    r.m[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    r.m[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    r.m[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    r.m[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    r.m[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    r.m[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return r;
}

const Mat3& xyz_to_rgb() {
    static const Mat3 inv = [] {
        Mat3 fwd;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) fwd.m[i][j] = kRgbToXyz[i][j];
        return invert3(fwd);
    }();
    return inv;
}

// Row-normalized stain matrix (rows = H, E, DAB unit stain vectors) from
// the standard color-deconvolution constants.
const Mat3& hed_matrix() {
    static const Mat3 m = [] {
        Mat3 s{{{0.65, 0.70, 0.29}, {0.07, 0.99, 0.11}, {0.27, 0.57, 0.78}}};
        for (auto& row : s.m) {
            const double n = std::sqrt(row[0] * row[0] + row[1] * row[1] + row[2] * row[2]);
            for (auto& v : row) v /= n;
        }
        return s;
    }();
    return m;
}

const Mat3& hed_inverse() {
    static const Mat3 inv = invert3(hed_matrix());
    return inv;
}

constexpr double kLabDelta = 6.0 / 29.0;

double lab_f(double t) {
    return t > kLabDelta * kLabDelta * kLabDelta
               ? std::cbrt(t)
               : t / (3.0 * kLabDelta * kLabDelta) + 4.0 / 29.0;
}
double lab_f_inv(double t) {
    return t > kLabDelta ? t * t * t : 3.0 * kLabDelta * kLabDelta * (t - 4.0 / 29.0);
}

void rgb_to_lab(const double rgb[3], double out[3]) {
    double lin[3];
    for (int c = 0; c < 3; ++c) lin[c] = srgb_decode(rgb[c]);
    double xyz[3];
    for (int i = 0; i < 3; ++i)
        xyz[i] = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
    static const double white[3] = {
        kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
        kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
        kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2],
    };
    const double fx = lab_f(xyz[0] / white[0]);
    const double fy = lab_f(xyz[1] / white[1]);
    const double fz = lab_f(xyz[2] / white[2]);
    out[0] = 116.0 * fy - 16.0;
    out[1] = 500.0 * (fx - fy);
    out[2] = 200.0 * (fy - fz);
}

void lab_to_rgb(const double lab[3], double out[3]) {
    static const double white[3] = {
        kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
        kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
        kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2],
    };
    const double fy = (lab[0] + 16.0) / 116.0;
    const double fx = fy + lab[1] / 500.0;
    const double fz = fy - lab[2] / 200.0;
    const double xyz[3] = {white[0] * lab_f_inv(fx), white[1] * lab_f_inv(fy),
                           white[2] * lab_f_inv(fz)};
    const auto& inv = xyz_to_rgb();
    for (int i = 0; i < 3; ++i) {
        const double lin = inv.m[i][0] * xyz[0] + inv.m[i][1] * xyz[1] + inv.m[i][2] * xyz[2];
        out[i] = srgb_encode(std::max(lin, 0.0));
    }
}

void rgb_to_hsv(const double rgb[3], double out[3]) {
    const double r = rgb[0], g = rgb[1], b = rgb[2];
    const double maxc = std::max({r, g, b});
    const double minc = std::min({r, g, b});
    const double delta = maxc - minc;
    double h = 0.0;
    if (delta > 0.0) {
        if (maxc == r)
            h = (g - b) / delta;
        else if (maxc == g)
            h = 2.0 + (b - r) / delta;
        else
            h = 4.0 + (r - g) / delta;
        h /= 6.0;
        if (h < 0.0) h += 1.0;
    }
    out[0] = h;
    out[1] = maxc > 0.0 ? delta / maxc : 0.0;
    out[2] = maxc;
}

void hsv_to_rgb(const double hsv[3], double out[3]) {
    double h = hsv[0] - std::floor(hsv[0]); // wrap into [0,1)
    const double s = std::clamp(hsv[1], 0.0, 1.0);
    const double v = hsv[2];
    if (s <= 0.0) {
        out[0] = out[1] = out[2] = v;
        return;
    }
    h *= 6.0;
    const int i = std::min(static_cast<int>(h), 5);
    const double f = h - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: out[0] = v; out[1] = t; out[2] = p; break;
        case 1: out[0] = q; out[1] = v; out[2] = p; break;
        case 2: out[0] = p; out[1] = v; out[2] = t; break;
        case 3: out[0] = p; out[1] = q; out[2] = v; break;
        case 4: out[0] = t; out[1] = p; out[2] = v; break;
        default: out[0] = v; out[1] = p; out[2] = q; break;
    }
}

void rgb_to_hed(const double rgb[3], double out[3]) {
    double od[3];
    for (int c = 0; c < 3; ++c) od[c] = -std::log10(std::max(rgb[c], kOdFloor));
    const auto& inv = hed_inverse();
    // od is a row vector; hed = od * M^-1
    for (int j = 0; j < 3; ++j)
        out[j] = od[0] * inv.m[0][j] + od[1] * inv.m[1][j] + od[2] * inv.m[2][j];
}

void hed_to_rgb(const double hed[3], double out[3]) {
    const auto& m = hed_matrix();
    for (int j = 0; j < 3; ++j) {
        const double od = hed[0] * m.m[0][j] + hed[1] * m.m[1][j] + hed[2] * m.m[2][j];
        out[j] = std::pow(10.0, -od);
    }
}

double luma(const float* px) {
    return 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
}

nlohmann::json space_to_json(const SpaceTemplate& s) {
    nlohmann::json j;
    const char* keys[4] = {"mean_of_means", "std_of_means", "mean_of_stds", "std_of_stds"};
    for (int k = 0; k < 4; ++k) {
        nlohmann::json arr = nlohmann::json::array();
        for (int c = 0; c < 3; ++c) {
            const ChannelFit& f = s.channels[c];
            const double v = k == 0 ? f.mean_of_means
                           : k == 1 ? f.std_of_means
                           : k == 2 ? f.mean_of_stds
                                    : f.std_of_stds;
            arr.push_back(v);
        }
        j[keys[k]] = arr;
    }
    return j;
}

SpaceTemplate space_from_json(const nlohmann::json& j) {
    SpaceTemplate s;
    for (int c = 0; c < 3; ++c) {
        s.channels[c].mean_of_means = j.at("mean_of_means").at(c).get<double>();
        s.channels[c].std_of_means = j.at("std_of_means").at(c).get<double>();
        s.channels[c].mean_of_stds = j.at("mean_of_stds").at(c).get<double>();
        s.channels[c].std_of_stds = j.at("std_of_stds").at(c).get<double>();
    }
    return s;
}

} // namespace

ColorSpace color_space_from_string(const std::string& s) {
    if (s == "lab") return ColorSpace::LAB;
    if (s == "hsv") return ColorSpace::HSV;
    if (s == "hed") return ColorSpace::HED;
    throw DataError("unknown color space '" + s + "' (expected lab|hsv|hed)");
}

PixelArray convert(const Patch& patch, ColorSpace space) {
    validate_patch(patch, "convert");
    PixelArray out(patch.height, patch.width);
    const std::size_t n = static_cast<std::size_t>(patch.height) * patch.width;
    for (std::size_t i = 0; i < n; ++i) {
        const double rgb[3] = {patch.pixels[i * 3], patch.pixels[i * 3 + 1],
                               patch.pixels[i * 3 + 2]};
        double* dst = &out.values[i * 3];
        switch (space) {
            case ColorSpace::LAB: rgb_to_lab(rgb, dst); break;
            case ColorSpace::HSV: rgb_to_hsv(rgb, dst); break;
            case ColorSpace::HED: rgb_to_hed(rgb, dst); break;
        }
    }
    return out;
}

Patch convert_back(const PixelArray& values, ColorSpace space) {
    Patch out(values.height, values.width);
    const std::size_t n = static_cast<std::size_t>(values.height) * values.width;
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = &values.values[i * 3];
        double rgb[3];
        switch (space) {
            case ColorSpace::LAB: lab_to_rgb(src, rgb); break;
            case ColorSpace::HSV: hsv_to_rgb(src, rgb); break;
            case ColorSpace::HED: hed_to_rgb(src, rgb); break;
        }
        for (int c = 0; c < 3; ++c)
            out.pixels[i * 3 + c] = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
    }
    return out;
}

ColorStats channel_stats(const PixelArray& values, ColorSpace space) {
    ColorStats stats;
    stats.space = space;
    const std::size_t n = static_cast<std::size_t>(values.height) * values.width;
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += values.values[i * 3 + c];
        const double mean = sum / static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = values.values[i * 3 + c] - mean;
            var += d * d;
        }
        stats.mean[c] = mean;
        stats.stddev[c] = std::sqrt(var / static_cast<double>(n));
    }
    return stats;
}

ColorStats channel_stats(const Patch& patch, ColorSpace space) {
    return channel_stats(convert(patch, space), space);
}

StainTemplate fit_template(std::span<const Patch> patches) {
    if (patches.size() < 2)
        throw DataError("fit_template: needs at least 2 patches (got " +
                        std::to_string(patches.size()) + ")");
    StainTemplate tmpl;
    tmpl.n_fit_images = static_cast<int>(patches.size());
    const double n = static_cast<double>(patches.size());
    for (ColorSpace space : {ColorSpace::LAB, ColorSpace::HSV, ColorSpace::HED}) {
        std::array<std::vector<double>, 3> means, stds;
        for (const Patch& p : patches) {
            const ColorStats s = channel_stats(p, space);
            for (int c = 0; c < 3; ++c) {
                means[c].push_back(s.mean[c]);
                stds[c].push_back(s.stddev[c]);
            }
        }
        auto fit = [n](const std::vector<double>& xs) {
            double sum = 0.0;
            for (double x : xs) sum += x;
            const double mean = sum / n;
            double ss = 0.0;
            for (double x : xs) ss += (x - mean) * (x - mean);
            return std::pair<double, double>(mean, std::sqrt(ss / (n - 1.0)));
        };
        SpaceTemplate& st = tmpl.space(space);
        for (int c = 0; c < 3; ++c) {
            auto [mm, sm] = fit(means[c]);
            auto [ms, ss] = fit(stds[c]);
            st.channels[c] = {mm, sm, ms, ss};
        }
    }
    return tmpl;
}

PixelArray reinhard_transfer(const PixelArray& values, const ColorStats& source,
                             const ColorStats& target) {
    PixelArray out = values;
    const std::size_t n = static_cast<std::size_t>(values.height) * values.width;
    for (int c = 0; c < 3; ++c) {
        if (source.mean[c] == target.mean[c] && source.stddev[c] == target.stddev[c])
            continue; // exact identity for matching stats
        const double scale = target.stddev[c] / std::max(source.stddev[c], kStdFloor);
        const double shift = target.mean[c];
        const double center = source.mean[c];
        for (std::size_t i = 0; i < n; ++i)
            out.values[i * 3 + c] = (values.values[i * 3 + c] - center) * scale + shift;
    }
    return out;
}

Patch randstainna(const Patch& patch, const StainTemplate& tmpl, Rng& rng,
                  ColorSpace* chosen_space) {
    validate_patch(patch, "randstainna");
    const ColorSpace space = static_cast<ColorSpace>(rng.uniform_int(3));
    if (chosen_space) *chosen_space = space;
    const SpaceTemplate& st = tmpl.space(space);

    ColorStats target;
    target.space = space;
    for (int c = 0; c < 3; ++c) {
        const ChannelFit& f = st.channels[c];
        target.mean[c] = rng.normal(f.mean_of_means, f.std_of_means);
        target.stddev[c] = std::max(0.0, rng.normal(f.mean_of_stds, f.std_of_stds));
    }

    const PixelArray converted = convert(patch, space);
    const ColorStats source = channel_stats(converted, space);
    Patch out = convert_back(reinhard_transfer(converted, source, target), space);
    out.slide_id = patch.slide_id;
    out.case_id = patch.case_id;
    out.magnification = patch.magnification;
    out.origin_x = patch.origin_x;
    out.origin_y = patch.origin_y;
    return out;
}

Patch adjust_brightness(const Patch& patch, double factor) {
    if (factor == 1.0) return patch;
    Patch out = patch;
    for (auto& v : out.pixels) v = static_cast<float>(v * factor);
    clamp_unit(out);
    return out;
}

Patch adjust_contrast(const Patch& patch, double factor) {
    if (factor == 1.0) return patch;
    Patch out = patch;
    const std::size_t n = static_cast<std::size_t>(patch.height) * patch.width;
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += luma(&patch.pixels[i * 3]);
    m /= static_cast<double>(n);
    for (auto& v : out.pixels) v = static_cast<float>((v - m) * factor + m);
    clamp_unit(out);
    return out;
}

Patch adjust_saturation(const Patch& patch, double factor) {
    if (factor == 1.0) return patch;
    Patch out = patch;
    const std::size_t n = static_cast<std::size_t>(patch.height) * patch.width;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = luma(&patch.pixels[i * 3]);
        for (int c = 0; c < 3; ++c)
            out.pixels[i * 3 + c] = static_cast<float>((patch.pixels[i * 3 + c] - g) * factor + g);
    }
    clamp_unit(out);
    return out;
}

Patch adjust_hue(const Patch& patch, double delta) {
    if (delta == 0.0) return patch;
    Patch out = patch;
    const std::size_t n = static_cast<std::size_t>(patch.height) * patch.width;
    for (std::size_t i = 0; i < n; ++i) {
        double rgb[3] = {patch.pixels[i * 3], patch.pixels[i * 3 + 1], patch.pixels[i * 3 + 2]};
        double hsv[3];
        rgb_to_hsv(rgb, hsv);
        hsv[0] += delta;
        hsv[0] -= std::floor(hsv[0]);
        hsv_to_rgb(hsv, rgb);
        for (int c = 0; c < 3; ++c)
            out.pixels[i * 3 + c] = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
    }
    return out;
}

Patch color_jitter(const Patch& patch, const JitterStrength& strength,
                   double apply_probability, Rng& rng) {
    validate_patch(patch, "color_jitter");
    if (!(rng.uniform() < apply_probability)) return patch;

    const double fb = rng.uniform(std::max(0.0, 1.0 - strength.brightness), 1.0 + strength.brightness);
    const double fc = rng.uniform(std::max(0.0, 1.0 - strength.contrast), 1.0 + strength.contrast);
    const double fs = rng.uniform(std::max(0.0, 1.0 - strength.saturation), 1.0 + strength.saturation);
    const double dh = rng.uniform(-strength.hue, strength.hue);

    std::vector<int> order = {0, 1, 2, 3};
    rng.shuffle(order);

    Patch out = patch;
    for (int op : order) {
        switch (op) {
            case 0: out = adjust_brightness(out, fb); break;
            case 1: out = adjust_contrast(out, fc); break;
            case 2: out = adjust_saturation(out, fs); break;
            default: out = adjust_hue(out, dh); break;
        }
    }
    return out;
}

std::string stain_template_to_json(const StainTemplate& tmpl) {
    nlohmann::json j;
    j["format"] = "stain_template.v1";
    j["n_fit_images"] = tmpl.n_fit_images;
    j["lab"] = space_to_json(tmpl.lab);
    j["hsv"] = space_to_json(tmpl.hsv);
    j["hed"] = space_to_json(tmpl.hed);
    return j.dump(2);
}

StainTemplate stain_template_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("stain template: invalid JSON: ") + e.what());
    }
    if (j.value("format", "") != "stain_template.v1")
        throw DataError("stain template: missing or unknown 'format' (expected stain_template.v1)");
    StainTemplate tmpl;
    tmpl.n_fit_images = j.at("n_fit_images").get<int>();
    tmpl.lab = space_from_json(j.at("lab"));
    tmpl.hsv = space_from_json(j.at("hsv"));
    tmpl.hed = space_from_json(j.at("hed"));
    return tmpl;
}

void save_stain_template(const std::string& path, const StainTemplate& tmpl) {
    std::ofstream out(path);
    if (!out) throw DataError("save_stain_template: cannot write '" + path + "'");
    out << stain_template_to_json(tmpl) << "\n";
}

StainTemplate load_stain_template(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_stain_template: cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return stain_template_from_json(ss.str());
}

} // namespace pathssl

#include "pathssl/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace pathssl {

namespace {

// ITU-T T.81 Annex K.1 luminance quantization table.
constexpr int kBaseQuant[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,
    12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,
    14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,
    24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
};

// Half-sample symmetric reflection of an index into [0, n).
int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

// Orthonormal 8x8 DCT-II basis, row u: c(u) * cos((2x+1) u pi / 16) / 2.
struct DctBasis {
    double m[8][8];
    DctBasis() {
        for (int u = 0; u < 8; ++u) {
            const double cu = u == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
            for (int x = 0; x < 8; ++x)
                m[u][x] = 0.5 * cu * std::cos((2.0 * x + 1.0) * u * std::numbers::pi / 16.0);
        }
    }
};

const DctBasis& dct_basis() {
    static const DctBasis b;
    return b;
}

} // namespace

void PathBlurConfig::validate() const {
    if (sigma_lo < 0.0 || sigma_hi < sigma_lo)
        throw DataError("PathBlurConfig: need 0 <= sigma_lo <= sigma_hi");
    if (apply_probability < 0.0 || apply_probability > 1.0)
        throw DataError("PathBlurConfig: apply_probability must be in [0,1]");
    if (photon_scale <= 0.0) throw DataError("PathBlurConfig: photon_scale must be > 0");
    if (quality_lo < 1 || quality_hi > 100 || quality_hi < quality_lo)
        throw DataError("PathBlurConfig: need 1 <= quality_lo <= quality_hi <= 100");
}

Patch gaussian_blur(const Patch& patch, double sigma) {
    validate_patch(patch, "gaussian_blur");
    if (sigma < 0.0) throw DataError("gaussian_blur: sigma must be >= 0");
    if (sigma == 0.0) return patch;

    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[i + radius] = w;
        sum += w;
    }
    for (auto& w : kernel) w /= sum;

    const int h = patch.height, w = patch.width;
    std::vector<double> tmp(static_cast<std::size_t>(h) * w * 3);
    // horizontal pass
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k)
                    acc += kernel[k + radius] * patch.at(y, reflect_index(x + k, w), c);
                tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
            }
    // vertical pass
    Patch out = patch.like(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int yy = reflect_index(y + k, h);
                    acc += kernel[k + radius] * tmp[(static_cast<std::size_t>(yy) * w + x) * 3 + c];
                }
                out.at(y, x, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
    return out;
}

Patch poisson_noise(const Patch& patch, double photon_scale, Rng& rng) {
    validate_patch(patch, "poisson_noise");
    if (photon_scale <= 0.0) throw DataError("poisson_noise: photon_scale must be > 0");
    Patch out = patch;
    for (auto& v : out.pixels) {
        const double k = static_cast<double>(rng.poisson(static_cast<double>(v) * photon_scale));
        v = static_cast<float>(std::min(k / photon_scale, 1.0));
    }
    return out;
}

void jpeg_quant_table(int quality, int out[64]) {
    if (quality < 1 || quality > 100)
        throw DataError("jpeg quality must be in [1,100], got " + std::to_string(quality));
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    for (int i = 0; i < 64; ++i)
        out[i] = std::clamp((kBaseQuant[i] * scale + 50) / 100, 1, 255);
}

Patch jpeg_roundtrip(const Patch& patch, int quality) {
    validate_patch(patch, "jpeg_roundtrip");
    int quant[64];
    jpeg_quant_table(quality, quant);

    const int h = patch.height, w = patch.width;
    const int ph = (h + 7) / 8 * 8;
    const int pw = (w + 7) / 8 * 8;
    const auto& basis = dct_basis();

    Patch out = patch.like(h, w);
    std::vector<double> plane(static_cast<std::size_t>(ph) * pw);
    for (int c = 0; c < 3; ++c) {
        // pad by edge replication and level-shift to [-0.5, 0.5]
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x)
                plane[static_cast<std::size_t>(y) * pw + x] =
                    patch.at(std::min(y, h - 1), std::min(x, w - 1), c) - 0.5;

        for (int by = 0; by < ph; by += 8)
            for (int bx = 0; bx < pw; bx += 8) {
                double block[8][8], coef[8][8], tmp[8][8];
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        block[y][x] = plane[static_cast<std::size_t>(by + y) * pw + bx + x];
                // coef = B * block * B^T
                for (int u = 0; u < 8; ++u)
                    for (int x = 0; x < 8; ++x) {
                        double s = 0.0;
                        for (int y = 0; y < 8; ++y) s += basis.m[u][y] * block[y][x];
                        tmp[u][x] = s;
                    }
                for (int u = 0; u < 8; ++u)
                    for (int v = 0; v < 8; ++v) {
                        double s = 0.0;
                        for (int x = 0; x < 8; ++x) s += tmp[u][x] * basis.m[v][x];
                        coef[u][v] = s;
                    }
                // quantize / dequantize; table entries are in 8-bit units
                for (int u = 0; u < 8; ++u)
                    for (int v = 0; v < 8; ++v) {
                        const double step = quant[u * 8 + v] / 255.0;
                        coef[u][v] = std::round(coef[u][v] / step) * step;
                    }
                // block = B^T * coef * B
                for (int y = 0; y < 8; ++y)
                    for (int v = 0; v < 8; ++v) {
                        double s = 0.0;
                        for (int u = 0; u < 8; ++u) s += basis.m[u][y] * coef[u][v];
                        tmp[y][v] = s;
                    }
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        double s = 0.0;
                        for (int v = 0; v < 8; ++v) s += tmp[y][v] * basis.m[v][x];
                        plane[static_cast<std::size_t>(by + y) * pw + bx + x] = s;
                    }
            }

        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(y, x, c) = static_cast<float>(
                    std::clamp(plane[static_cast<std::size_t>(y) * pw + x] + 0.5, 0.0, 1.0));
    }
    return out;
}

Patch path_blur(const Patch& patch, const PathBlurConfig& cfg, Rng& rng) {
    cfg.validate();
    validate_patch(patch, "path_blur");
    if (!(rng.uniform() < cfg.apply_probability)) return patch;

    const double sigma = rng.uniform(cfg.sigma_lo, cfg.sigma_hi);
    Patch out = gaussian_blur(patch, sigma);
    if (cfg.poisson_enabled) out = poisson_noise(out, cfg.photon_scale, rng);
    if (cfg.jpeg_enabled) {
        const int quality =
            cfg.quality_lo + static_cast<int>(rng.uniform_int(
                                 static_cast<std::uint64_t>(cfg.quality_hi - cfg.quality_lo + 1)));
        out = jpeg_roundtrip(out, quality);
    }
    return out;
}

} // namespace pathssl

#pragma once

#include "pathssl/patch.hpp"
#include "pathssl/rng.hpp"

namespace pathssl {

/// Configuration of the PathBlur corruption chain:
/// Gaussian blur -> Poisson sensor noise -> JPEG quantization artifacts.
struct PathBlurConfig {
    double sigma_lo = 0.1;       // blur std range, pixels
    double sigma_hi = 2.0;
    double apply_probability = 0.5;
    bool poisson_enabled = true;
    double photon_scale = 255.0; // expected photon count at full intensity
    bool jpeg_enabled = true;
    int quality_lo = 30;         // JPEG quality range, [1,100]
    int quality_hi = 90;

    void validate() const;
};

/// Separable Gaussian convolution, kernel radius ceil(3*sigma), kernel
/// normalized to sum 1, reflect-padded borders. sigma = 0 is the identity.
Patch gaussian_blur(const Patch& patch, double sigma);

/// Per pixel/channel value x: draw k ~ Poisson(x * photon_scale) and
/// output min(k / photon_scale, 1).
Patch poisson_noise(const Patch& patch, double photon_scale, Rng& rng);

/// Block-DCT quantization round trip: the artifact model of JPEG without
/// entropy coding or chroma subsampling. Each channel independently is
/// padded to a multiple of 8 by edge replication, level-shifted to
/// [-0.5, 0.5], transformed by an 8x8 orthonormal type-II DCT, quantized
/// with the standard luminance table scaled by the standard quality rule
/// (scale = 5000/q for q < 50 else 200 - 2q, integer math, entries clamped
/// to [1, 255], steps taken as entry/255 in unit scale), dequantized,
/// inverse transformed, cropped and clamped.
Patch jpeg_roundtrip(const Patch& patch, int quality);

/// The full chain. With probability apply_probability: blur with sigma
/// drawn uniformly from the range, then Poisson noise if enabled, then a
/// JPEG round trip at a uniformly drawn quality if enabled. Otherwise the
/// input passes through unchanged.
Patch path_blur(const Patch& patch, const PathBlurConfig& cfg, Rng& rng);

/// The quantization table used by jpeg_roundtrip at a given quality,
/// in 8-bit units (exposed for tests).
void jpeg_quant_table(int quality, int out[64]);

} // namespace pathssl

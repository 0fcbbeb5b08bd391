#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pathssl/embeddings.hpp"
#include "pathssl/patch.hpp"
#include "pathssl/rng.hpp"
#include "pathssl/text_io.hpp"

namespace pathssl {

/// Procedural texture parameters for one synthetic tissue class.
///
/// A patch is a background wash at base_hue, a fixed sinusoidal value
/// modulation, Poisson-scattered nucleus-like ellipses, and Gaussian pixel
/// noise. Blob radii scale with magnification (20x radii are twice the 10x
/// radii) and the per-patch blob count scales with the field of view.
struct SynthClassParams {
    double base_hue = 0.92;       // [0,1) background wash hue
    double blob_density = 2.0;    // blobs per 10^4 px^2 at 10x
    double blob_radius_lo = 3.0;  // px at 10x
    double blob_radius_hi = 6.0;
    double texture_freq = 4.0;    // sinusoid cycles across the patch at 10x
    double noise_sigma = 0.02;    // Gaussian pixel noise std
    double blob_hue = 0.72;       // nucleus hue
    double blob_hue_jitter = 0.0; // half-width of uniform per-blob hue jitter

    // Optional center-region signal: extra blobs confined to the central
    // center_size x center_size pixel square (0 disables).
    int center_size = 0;
    double center_blob_density = 0.0; // blobs per 10^4 px^2 of the center region
    double center_blob_hue = 0.30;
    double center_blob_radius = 3.0;
};

// Wash/texture constants of the closed-form background (documented so
// tests can recompute pixels independently).
inline constexpr double kSynthWashSaturation = 0.10;
inline constexpr double kSynthWashValue = 0.92;
inline constexpr double kSynthTextureAmplitude = 0.04;

/// Deterministic synthetic patch. The rng fully determines the output;
/// callers derive it from (master seed, patch identifier).
Patch gen_patch(const SynthClassParams& params, Magnification magnification, Rng rng,
                int size = 224);

/// Deterministic toy ViT stand-in for a 224x224 patch: 16x16-pixel tokens
/// on a 14x14 grid, per-token color/texture statistics pushed through one
/// fixed random projection to d = 32, class vector = mean of the token
/// embeddings. Provenance fields are copied from the patch.
EmbeddingRecord toy_encoder(const Patch& patch, const std::string& patch_id,
                            bool keep_tokens = true);
inline constexpr int kToyEmbeddingDim = 32;
inline constexpr int kToyGridSide = 14;

/// One synthetic benchmark task: class parameters, split sizes, and the
/// magnifications to render.
struct SynthTask {
    std::string name;
    std::vector<std::string> class_names;
    std::vector<SynthClassParams> class_params;
    int train_slides = 20;
    int tune_slides = 10;
    int test_slides = 10;
    int patches_per_slide = 20;
    std::vector<Magnification> magnifications = {Magnification::x5, Magnification::x10,
                                                 Magnification::x20};
    double slide_hue_jitter = 0.0; // per-slide base hue offset std
    double weight = 1.0;           // probe composite weight
    std::string label_region = "whole"; // "whole" or "center_32px"
};

struct SynthBenchmark {
    std::string name;
    std::vector<SynthTask> tasks;

    std::string to_json() const;
    static SynthBenchmark from_json(const std::string& text);
};

/// The desk-scale probe benchmark defaults: three separable 3-class tasks
/// at three magnifications, sized to run end to end in minutes.
SynthBenchmark default_desk_benchmark();

/// A task whose class signal lives only in the central 32x32 pixels
/// (center 2x2 tokens), plus a whole-image control with the same classes.
SynthTask make_center_label_task(const std::string& name, int slides_per_split,
                                 int patches_per_slide);
SynthTask make_whole_image_control(const std::string& name, int slides_per_split,
                                   int patches_per_slide);

/// Deterministic corpus plan: one item per (task, split, slide, patch,
/// magnification) in a fixed enumeration order. Slides are dealt to
/// classes round-robin so labels are slide-pure and balanced.
struct CorpusItem {
    ManifestRow row;
    std::size_t task_idx = 0;
    std::size_t class_idx = 0;
};

std::vector<CorpusItem> plan_corpus(const SynthBenchmark& bench, std::uint64_t master_seed);

/// Renders one planned item. Pure function of (bench, item, master_seed).
Patch render_item(const SynthBenchmark& bench, const CorpusItem& item, std::uint64_t master_seed);

} // namespace pathssl

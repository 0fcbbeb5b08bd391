#pragma once

#include <cstdint>
#include <vector>

#include "pathssl/patch.hpp"
#include "pathssl/rng.hpp"

namespace pathssl {

/// Axis-aligned crop rectangle in source pixel coordinates.
struct CropRect {
    int x = 0;
    int y = 0;
    int w = 1;
    int h = 1;

    long long area() const { return static_cast<long long>(w) * h; }
    bool within(int src_w, int src_h) const {
        return x >= 0 && y >= 0 && w >= 1 && h >= 1 && x + w <= src_w && y + h <= src_h;
    }
};

long long intersection_area(const CropRect& a, const CropRect& b);

/// Inception-style random resized crop parameters.
struct CropConfig {
    int out_size = 224;
    double area_lo = 0.30; // fraction of source area
    double area_hi = 1.00;
    double aspect_lo = 3.0 / 4.0; // width / height
    double aspect_hi = 4.0 / 3.0;

    void validate() const;
};

/// The MSN view layout: 1 teacher global, 1 student global, 10 locals.
struct MultiCropBatch {
    Patch teacher_global;
    Patch student_global;
    std::vector<Patch> locals; // exactly 10
    std::string source_id;
    CropRect teacher_rect;
    CropRect student_rect;
    std::vector<CropRect> local_rects;
};

struct MultiCropConfig {
    CropConfig global{224, 0.30, 1.00, 3.0 / 4.0, 4.0 / 3.0};
    CropConfig local{96, 0.05, 0.30, 3.0 / 4.0, 4.0 / 3.0};
    int n_locals = 10;
    double min_overlap = 0.0; // fraction of the teacher-global area each local must cover
};

/// Bilinear resize of a crop window to out_size x out_size
/// (half-pixel-center convention). Exposed for reuse and tests.
Patch resize_crop(const Patch& src, const CropRect& rect, int out_size);

/// Samples the crop rectangle alone (useful for distributional tests).
CropRect random_resized_crop_rect(int src_w, int src_h, const CropConfig& cfg, Rng& rng);

/// Samples target area uniformly in area range x source area and aspect
/// log-uniformly, up to 10 attempts; on exhaustion falls back to the
/// largest centered crop with a valid aspect. Returns the rect and the
/// bilinear-resized view.
std::pair<CropRect, Patch> random_resized_crop(const Patch& patch, const CropConfig& cfg, Rng& rng);

/// Samples a local rect whose intersection with `global_rect` is at least
/// min_overlap * area(global_rect). Rejection-samples up to 100 attempts,
/// then moves the last candidate the minimal distance toward the global
/// rect's center that satisfies the constraint (growing it first in the
/// rare case its dimensions cannot reach the required intersection). The
/// returned rect always satisfies the constraint.
CropRect sample_overlapping_local(int src_w, int src_h, const CropRect& global_rect,
                                  const CropConfig& local_cfg, double min_overlap, Rng& rng);

struct OverlapCropPair {
    CropRect global_rect;
    CropRect local_rect;
    Patch global_view;
    Patch local_view;
};

/// A global crop plus a local crop constrained to cover at least
/// min_overlap of the global crop's area.
OverlapCropPair overlap_crop_pair(const Patch& patch, const CropConfig& global_cfg,
                                  const CropConfig& local_cfg, double min_overlap, Rng& rng);

/// Draws 1 teacher + 1 student global view and n_locals local views.
/// When cfg.min_overlap > 0 every local is constrained against the
/// teacher global rect.
MultiCropBatch make_multicrop(const Patch& patch, const MultiCropConfig& cfg, Rng& rng);

/// Uniformly samples round(fraction * grid_side^2) distinct token indices
/// from the grid_side^2 positions. Returned sorted ascending.
std::vector<std::uint32_t> token_mask(int grid_side, double fraction, Rng& rng);

} // namespace pathssl

#include "pathssl/views.hpp"

#include <algorithm>
#include <cmath>

namespace pathssl {

namespace {

// Largest crop of the source whose aspect ratio lies in [lo, hi], centered.
CropRect centered_fallback(int src_w, int src_h, const CropConfig& cfg) {
    int w = src_w, h = src_h;
    const double aspect = static_cast<double>(src_w) / src_h;
    if (aspect > cfg.aspect_hi) {
        w = std::max(1, static_cast<int>(std::lround(src_h * cfg.aspect_hi)));
    } else if (aspect < cfg.aspect_lo) {
        h = std::max(1, static_cast<int>(std::lround(src_w / cfg.aspect_lo)));
    }
    w = std::min(w, src_w);
    h = std::min(h, src_h);
    return {(src_w - w) / 2, (src_h - h) / 2, w, h};
}

// Intersection area required for a local rect against a global rect,
// as an exact integer threshold.
long long required_overlap(const CropRect& global_rect, double min_overlap) {
    const double need = min_overlap * static_cast<double>(global_rect.area());
    return static_cast<long long>(std::ceil(need - 1e-9));
}

// Integer position centering `len` against [pos, pos+glen), clamped to
// [0, limit]. Guarantees axis overlap of exactly min(len, glen).
int centered_position(int g_pos, int g_len, int len, int limit) {
    int p = g_pos + (g_len - len) / 2;
    return std::clamp(p, 0, limit);
}

} // namespace

long long intersection_area(const CropRect& a, const CropRect& b) {
    const long long ox = std::max(
        0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const long long oy = std::max(
        0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    return ox * oy;
}

void CropConfig::validate() const {
    if (out_size < 1) throw DataError("CropConfig: out_size must be >= 1");
    if (!(area_lo > 0.0 && area_lo <= area_hi && area_hi <= 1.0))
        throw DataError("CropConfig: need 0 < area_lo <= area_hi <= 1");
    if (!(aspect_lo > 0.0 && aspect_lo <= aspect_hi))
        throw DataError("CropConfig: need 0 < aspect_lo <= aspect_hi");
}

Patch resize_crop(const Patch& src, const CropRect& rect, int out_size) {
    validate_patch(src, "resize_crop");
    if (!rect.within(src.width, src.height))
        throw DataError("resize_crop: rect outside source bounds");
    Patch out = src.like(out_size, out_size);
    out.origin_x = src.origin_x + rect.x;
    out.origin_y = src.origin_y + rect.y;
    const double sx = static_cast<double>(rect.w) / out_size;
    const double sy = static_cast<double>(rect.h) / out_size;
    for (int y = 0; y < out_size; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(rect.h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, rect.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_size; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(rect.w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, rect.w - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double v00 = src.at(rect.y + y0, rect.x + x0, c);
                const double v01 = src.at(rect.y + y0, rect.x + x1, c);
                const double v10 = src.at(rect.y + y1, rect.x + x0, c);
                const double v11 = src.at(rect.y + y1, rect.x + x1, c);
                const double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                 wy * ((1 - wx) * v10 + wx * v11);
                out.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

CropRect random_resized_crop_rect(int src_w, int src_h, const CropConfig& cfg, Rng& rng) {
    cfg.validate();
    if (src_w <= 8 || src_h <= 8)
        throw DataError("random_resized_crop: source must be larger than 8x8");
    const double src_area = static_cast<double>(src_w) * src_h;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target_area = rng.uniform(cfg.area_lo, cfg.area_hi) * src_area;
        const double log_ratio = rng.uniform(std::log(cfg.aspect_lo), std::log(cfg.aspect_hi));
        const double aspect = std::exp(log_ratio);
        const int w = static_cast<int>(std::lround(std::sqrt(target_area * aspect)));
        const int h = static_cast<int>(std::lround(std::sqrt(target_area / aspect)));
        if (w >= 1 && h >= 1 && w <= src_w && h <= src_h) {
            const int x = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(src_w - w + 1)));
            const int y = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(src_h - h + 1)));
            return {x, y, w, h};
        }
    }
    return centered_fallback(src_w, src_h, cfg);
}

std::pair<CropRect, Patch> random_resized_crop(const Patch& patch, const CropConfig& cfg, Rng& rng) {
    const CropRect rect = random_resized_crop_rect(patch.width, patch.height, cfg, rng);
    return {rect, resize_crop(patch, rect, cfg.out_size)};
}

CropRect sample_overlapping_local(int src_w, int src_h, const CropRect& global_rect,
                                  const CropConfig& local_cfg, double min_overlap, Rng& rng) {
    if (min_overlap < 0.0 || min_overlap > 1.0)
        throw DataError("sample_overlapping_local: min_overlap must be in [0,1]");
    const long long need = required_overlap(global_rect, min_overlap);
    const double max_local_area =
        local_cfg.area_hi * static_cast<double>(src_w) * src_h;
    if (static_cast<double>(need) > max_local_area + 1e-9)
        throw DataError("overlap constraint infeasible: max local area " +
                        std::to_string(static_cast<long long>(max_local_area)) +
                        " < required intersection " + std::to_string(need));

    CropRect local;
    for (int attempt = 0; attempt < 100; ++attempt) {
        local = random_resized_crop_rect(src_w, src_h, local_cfg, rng);
        if (intersection_area(local, global_rect) >= need) return local;
    }

    // Deterministic fallback. First make sure the candidate's dimensions can
    // reach the required intersection at all, growing toward the source size
    // if not (a rect matching the global rect always suffices).
    auto max_reachable = [&](const CropRect& r) {
        return static_cast<long long>(std::min(r.w, global_rect.w)) *
               std::min(r.h, global_rect.h);
    };
    while (max_reachable(local) < need) {
        const int nw = std::min(src_w, std::max(local.w + 1, static_cast<int>(std::lround(local.w * 1.25))));
        const int nh = std::min(src_h, std::max(local.h + 1, static_cast<int>(std::lround(local.h * 1.25))));
        local.w = nw;
        local.h = nh;
        local.x = std::min(local.x, src_w - local.w);
        local.y = std::min(local.y, src_h - local.h);
    }

    // Then translate the minimal fraction of the way toward the position
    // centered on the global rect (where the intersection is maximal).
    const int cx = centered_position(global_rect.x, global_rect.w, local.w, src_w - local.w);
    const int cy = centered_position(global_rect.y, global_rect.h, local.h, src_h - local.h);
    auto place = [&](double t) {
        CropRect r = local;
        r.x = static_cast<int>(std::lround(local.x + t * (cx - local.x)));
        r.y = static_cast<int>(std::lround(local.y + t * (cy - local.y)));
        return r;
    };
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 50; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (intersection_area(place(mid), global_rect) >= need)
            hi = mid;
        else
            lo = mid;
    }
    CropRect placed = place(hi);
    while (intersection_area(placed, global_rect) < need && hi < 1.0) {
        hi = std::min(1.0, hi + 1e-3); // absorb integer rounding at the boundary
        placed = place(hi);
    }
    return placed;
}

OverlapCropPair overlap_crop_pair(const Patch& patch, const CropConfig& global_cfg,
                                  const CropConfig& local_cfg, double min_overlap, Rng& rng) {
    OverlapCropPair pair;
    pair.global_rect = random_resized_crop_rect(patch.width, patch.height, global_cfg, rng);
    if (min_overlap <= 0.0) {
        pair.local_rect = random_resized_crop_rect(patch.width, patch.height, local_cfg, rng);
    } else {
        pair.local_rect = sample_overlapping_local(patch.width, patch.height, pair.global_rect,
                                                   local_cfg, min_overlap, rng);
    }
    pair.global_view = resize_crop(patch, pair.global_rect, global_cfg.out_size);
    pair.local_view = resize_crop(patch, pair.local_rect, local_cfg.out_size);
    return pair;
}

MultiCropBatch make_multicrop(const Patch& patch, const MultiCropConfig& cfg, Rng& rng) {
    cfg.global.validate();
    cfg.local.validate();
    MultiCropBatch batch;
    batch.source_id = patch.slide_id.empty() ? patch.case_id : patch.slide_id;

    batch.teacher_rect = random_resized_crop_rect(patch.width, patch.height, cfg.global, rng);
    batch.teacher_global = resize_crop(patch, batch.teacher_rect, cfg.global.out_size);
    batch.student_rect = random_resized_crop_rect(patch.width, patch.height, cfg.global, rng);
    batch.student_global = resize_crop(patch, batch.student_rect, cfg.global.out_size);

    batch.locals.reserve(cfg.n_locals);
    batch.local_rects.reserve(cfg.n_locals);
    for (int i = 0; i < cfg.n_locals; ++i) {
        CropRect rect;
        if (cfg.min_overlap > 0.0) {
            rect = sample_overlapping_local(patch.width, patch.height, batch.teacher_rect,
                                            cfg.local, cfg.min_overlap, rng);
        } else {
            rect = random_resized_crop_rect(patch.width, patch.height, cfg.local, rng);
        }
        batch.local_rects.push_back(rect);
        batch.locals.push_back(resize_crop(patch, rect, cfg.local.out_size));
    }
    return batch;
}

std::vector<std::uint32_t> token_mask(int grid_side, double fraction, Rng& rng) {
    if (grid_side < 1) throw DataError("token_mask: grid_side must be >= 1");
    if (fraction < 0.0 || fraction > 1.0)
        throw DataError("token_mask: fraction must be in [0,1]");
    const std::size_t total = static_cast<std::size_t>(grid_side) * grid_side;
    const std::size_t count =
        static_cast<std::size_t>(std::lround(fraction * static_cast<double>(total)));
    auto picks = rng.sample_without_replacement(total, count);
    std::vector<std::uint32_t> out(picks.begin(), picks.end());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace pathssl

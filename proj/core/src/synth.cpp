#include "pathssl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "pathssl/error.hpp"
#include "pathssl/imagecolor.hpp"

namespace pathssl {

namespace {

void hsv_to_rgb_unit(double h, double s, double v, double out[3]) {
    h -= std::floor(h);
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

struct Blob {
    double cx, cy, rx, ry, theta;
    double hue, value;
};

void draw_blob(Patch& patch, const Blob& blob) {
    double rgb[3];
    hsv_to_rgb_unit(blob.hue, 0.55, blob.value, rgb);
    const double cos_t = std::cos(blob.theta);
    const double sin_t = std::sin(blob.theta);
    const double reach = std::max(blob.rx, blob.ry) + 1.5;
    const int y0 = std::max(0, static_cast<int>(std::floor(blob.cy - reach)));
    const int y1 = std::min(patch.height - 1, static_cast<int>(std::ceil(blob.cy + reach)));
    const int x0 = std::max(0, static_cast<int>(std::floor(blob.cx - reach)));
    const int x1 = std::min(patch.width - 1, static_cast<int>(std::ceil(blob.cx + reach)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - blob.cx;
            const double dy = y + 0.5 - blob.cy;
            const double u = (dx * cos_t + dy * sin_t) / blob.rx;
            const double v = (-dx * sin_t + dy * cos_t) / blob.ry;
            const double d = std::sqrt(u * u + v * v);
            if (d >= 1.1) continue;
            const double alpha = 0.85 * std::clamp((1.1 - d) / 0.2, 0.0, 1.0);
            for (int c = 0; c < 3; ++c)
                patch.at(y, x, c) =
                    static_cast<float>((1.0 - alpha) * patch.at(y, x, c) + alpha * rgb[c]);
        }
}

// Fixed projection from the 15 raw token features to the toy embedding.
const std::vector<double>& toy_projection() {
    static const std::vector<double> proj = [] {
        Rng rng(0x746F79656E63ULL);
        std::vector<double> p(static_cast<std::size_t>(kToyEmbeddingDim) * 15);
        const double scale = 1.0 / std::sqrt(15.0);
        for (auto& v : p) v = rng.normal() * scale;
        return p;
    }();
    return proj;
}

} // namespace

Patch gen_patch(const SynthClassParams& params, Magnification magnification, Rng rng, int size) {
    if (size < 16) throw DataError("gen_patch: size must be >= 16");
    const double scale = microns_per_pixel(Magnification::x10) / microns_per_pixel(magnification);

    Patch patch(size, size);
    patch.magnification = magnification;

    // Closed-form background: wash + sinusoidal value modulation.
    const double freq = params.texture_freq / scale;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double mod = kSynthTextureAmplitude *
                               std::sin(2.0 * std::numbers::pi * freq * x / size) *
                               std::sin(2.0 * std::numbers::pi * freq * y / size);
            double rgb[3];
            hsv_to_rgb_unit(params.base_hue, kSynthWashSaturation, kSynthWashValue + mod, rgb);
            for (int c = 0; c < 3; ++c) patch.at(y, x, c) = static_cast<float>(rgb[c]);
        }

    // Poisson-scattered nuclei; count follows the field of view, radii the
    // magnification.
    const double fov_area = static_cast<double>(size) * size / (scale * scale);
    const std::uint64_t n_blobs = rng.poisson(params.blob_density * fov_area / 1e4);
    for (std::uint64_t b = 0; b < n_blobs; ++b) {
        Blob blob;
        blob.cx = rng.uniform(0.0, size);
        blob.cy = rng.uniform(0.0, size);
        const double r = rng.uniform(params.blob_radius_lo, params.blob_radius_hi) * scale;
        const double ratio = rng.uniform(0.6, 1.0);
        blob.rx = r;
        blob.ry = r * ratio;
        blob.theta = rng.uniform(0.0, std::numbers::pi);
        blob.hue = params.blob_hue +
                   (params.blob_hue_jitter > 0.0
                        ? rng.uniform(-params.blob_hue_jitter, params.blob_hue_jitter)
                        : 0.0);
        blob.value = 0.35 + rng.uniform(-0.05, 0.05);
        draw_blob(patch, blob);
    }

    // Center-region signal, confined to the central square.
    if (params.center_size > 0 && params.center_blob_density > 0.0) {
        const double half = params.center_size / 2.0;
        const double c0 = size / 2.0;
        const double center_area = static_cast<double>(params.center_size) * params.center_size;
        const std::uint64_t n_center = rng.poisson(params.center_blob_density * center_area / 1e4);
        for (std::uint64_t b = 0; b < n_center; ++b) {
            Blob blob;
            blob.cx = c0 + rng.uniform(-half, half);
            blob.cy = c0 + rng.uniform(-half, half);
            blob.rx = params.center_blob_radius;
            blob.ry = params.center_blob_radius * rng.uniform(0.7, 1.0);
            blob.theta = rng.uniform(0.0, std::numbers::pi);
            blob.hue = params.center_blob_hue;
            blob.value = 0.45 + rng.uniform(-0.05, 0.05);
            draw_blob(patch, blob);
        }
    }

    if (params.noise_sigma > 0.0) {
        for (auto& v : patch.pixels)
            v = static_cast<float>(v + rng.normal() * params.noise_sigma);
    }
    clamp_unit(patch);
    return patch;
}

EmbeddingRecord toy_encoder(const Patch& patch, const std::string& patch_id, bool keep_tokens) {
    if (patch.height != 224 || patch.width != 224)
        throw DataError("toy_encoder: expected a 224x224 patch, got " +
                        std::to_string(patch.height) + "x" + std::to_string(patch.width));
    constexpr int kTokenPx = 16;
    constexpr int g = kToyGridSide;
    constexpr int d = kToyEmbeddingDim;

    const PixelArray hsv = convert(patch, ColorSpace::HSV);
    const auto& proj = toy_projection();

    EmbeddingRecord rec;
    rec.patch_id = patch_id;
    rec.slide_id = patch.slide_id;
    rec.case_id = patch.case_id;
    rec.magnification = patch.magnification;
    rec.grid_side = g;
    rec.tokens.assign(static_cast<std::size_t>(g) * g * d, 0.0f);
    rec.cls.assign(d, 0.0f);

    std::vector<double> cls_acc(d, 0.0);
    double raw[15];
    for (int tr = 0; tr < g; ++tr)
        for (int tc = 0; tc < g; ++tc) {
            const int py = tr * kTokenPx;
            const int px = tc * kTokenPx;
            double mean[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
            double grad = 0.0;
            double hist[8] = {0, 0, 0, 0, 0, 0, 0, 0};
            for (int y = 0; y < kTokenPx; ++y)
                for (int x = 0; x < kTokenPx; ++x) {
                    double l = 0.0;
                    for (int c = 0; c < 3; ++c) {
                        const double v = patch.at(py + y, px + x, c);
                        mean[c] += v;
                        sq[c] += v * v;
                        l += v / 3.0;
                    }
                    if (x + 1 < kTokenPx) {
                        double ln = (patch.at(py + y, px + x + 1, 0) +
                                     patch.at(py + y, px + x + 1, 1) +
                                     patch.at(py + y, px + x + 1, 2)) / 3.0;
                        grad += std::fabs(ln - l);
                    }
                    if (y + 1 < kTokenPx) {
                        double ln = (patch.at(py + y + 1, px + x, 0) +
                                     patch.at(py + y + 1, px + x, 1) +
                                     patch.at(py + y + 1, px + x, 2)) / 3.0;
                        grad += std::fabs(ln - l);
                    }
                    const double hue = hsv.at(py + y, px + x, 0);
                    int bin = static_cast<int>(hue * 8.0);
                    bin = std::clamp(bin, 0, 7);
                    hist[bin] += 1.0 / (kTokenPx * kTokenPx);
                }
            const double count = kTokenPx * kTokenPx;
            for (int c = 0; c < 3; ++c) {
                mean[c] /= count;
                raw[c] = mean[c];
                raw[3 + c] = std::sqrt(std::max(0.0, sq[c] / count - mean[c] * mean[c]));
            }
            raw[6] = grad / count;
            for (int b = 0; b < 8; ++b) raw[7 + b] = hist[b];

            const std::size_t token_base =
                (static_cast<std::size_t>(tr) * g + tc) * static_cast<std::size_t>(d);
            for (int j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int f = 0; f < 15; ++f) acc += proj[static_cast<std::size_t>(j) * 15 + f] * raw[f];
                rec.tokens[token_base + static_cast<std::size_t>(j)] = static_cast<float>(acc);
                cls_acc[static_cast<std::size_t>(j)] += acc;
            }
        }
    for (int j = 0; j < d; ++j)
        rec.cls[static_cast<std::size_t>(j)] = static_cast<float>(cls_acc[static_cast<std::size_t>(j)] / (g * g));
    if (!keep_tokens) {
        rec.tokens.clear();
        rec.grid_side = 0;
    }
    return rec;
}

std::string SynthBenchmark::to_json() const {
    nlohmann::json j;
    j["format"] = "synth_benchmark.v1";
    j["name"] = name;
    nlohmann::json tasks_json = nlohmann::json::array();
    for (const auto& t : tasks) {
        nlohmann::json tj;
        tj["name"] = t.name;
        tj["class_names"] = t.class_names;
        nlohmann::json params = nlohmann::json::array();
        for (const auto& p : t.class_params) {
            nlohmann::json pj;
            pj["base_hue"] = p.base_hue;
            pj["blob_density"] = p.blob_density;
            pj["blob_radius"] = {p.blob_radius_lo, p.blob_radius_hi};
            pj["texture_freq"] = p.texture_freq;
            pj["noise_sigma"] = p.noise_sigma;
            pj["blob_hue"] = p.blob_hue;
            pj["blob_hue_jitter"] = p.blob_hue_jitter;
            pj["center_size"] = p.center_size;
            pj["center_blob_density"] = p.center_blob_density;
            pj["center_blob_hue"] = p.center_blob_hue;
            pj["center_blob_radius"] = p.center_blob_radius;
            params.push_back(pj);
        }
        tj["class_params"] = params;
        tj["train_slides"] = t.train_slides;
        tj["tune_slides"] = t.tune_slides;
        tj["test_slides"] = t.test_slides;
        tj["patches_per_slide"] = t.patches_per_slide;
        nlohmann::json mags = nlohmann::json::array();
        for (Magnification m : t.magnifications) mags.push_back(to_string(m));
        tj["magnifications"] = mags;
        tj["slide_hue_jitter"] = t.slide_hue_jitter;
        tj["weight"] = t.weight;
        tj["label_region"] = t.label_region;
        tasks_json.push_back(tj);
    }
    j["tasks"] = tasks_json;
    return j.dump(2);
}

SynthBenchmark SynthBenchmark::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("synth benchmark: invalid JSON: ") + e.what());
    }
    if (j.value("format", "") != "synth_benchmark.v1")
        throw DataError("synth benchmark: missing or unknown 'format'");
    SynthBenchmark bench;
    bench.name = j.value("name", "synth");
    for (const auto& tj : j.at("tasks")) {
        SynthTask t;
        t.name = tj.at("name").get<std::string>();
        t.class_names = tj.at("class_names").get<std::vector<std::string>>();
        for (const auto& pj : tj.at("class_params")) {
            SynthClassParams p;
            p.base_hue = pj.at("base_hue").get<double>();
            p.blob_density = pj.at("blob_density").get<double>();
            p.blob_radius_lo = pj.at("blob_radius").at(0).get<double>();
            p.blob_radius_hi = pj.at("blob_radius").at(1).get<double>();
            p.texture_freq = pj.at("texture_freq").get<double>();
            p.noise_sigma = pj.at("noise_sigma").get<double>();
            p.blob_hue = pj.value("blob_hue", 0.72);
            p.blob_hue_jitter = pj.value("blob_hue_jitter", 0.0);
            p.center_size = pj.value("center_size", 0);
            p.center_blob_density = pj.value("center_blob_density", 0.0);
            p.center_blob_hue = pj.value("center_blob_hue", 0.30);
            p.center_blob_radius = pj.value("center_blob_radius", 3.0);
            t.class_params.push_back(p);
        }
        if (t.class_params.size() != t.class_names.size())
            throw DataError("synth benchmark: class_params/class_names size mismatch in task '" +
                            t.name + "'");
        t.train_slides = tj.at("train_slides").get<int>();
        t.tune_slides = tj.at("tune_slides").get<int>();
        t.test_slides = tj.at("test_slides").get<int>();
        t.patches_per_slide = tj.at("patches_per_slide").get<int>();
        t.magnifications.clear();
        for (const auto& m : tj.at("magnifications"))
            t.magnifications.push_back(magnification_from_string(m.get<std::string>()));
        t.slide_hue_jitter = tj.value("slide_hue_jitter", 0.0);
        t.weight = tj.value("weight", 1.0);
        t.label_region = tj.value("label_region", "whole");
        bench.tasks.push_back(std::move(t));
    }
    return bench;
}

SynthBenchmark default_desk_benchmark() {
    SynthBenchmark bench;
    bench.name = "synth-desk";

    auto make_task = [](const std::string& name, double hue0, double hue_step,
                        double density0, double density_step, double weight) {
        SynthTask t;
        t.name = name;
        t.weight = weight;
        t.train_slides = 20;
        t.tune_slides = 10;
        t.test_slides = 12;
        t.patches_per_slide = 16;
        t.slide_hue_jitter = 0.01;
        for (int c = 0; c < 3; ++c) {
            SynthClassParams p;
            p.base_hue = hue0 + hue_step * c;
            p.blob_density = density0 + density_step * c;
            p.blob_radius_lo = 3.0;
            p.blob_radius_hi = 6.0;
            p.texture_freq = 3.0 + c;
            p.noise_sigma = 0.02;
            t.class_params.push_back(p);
            t.class_names.push_back("c" + std::to_string(c));
        }
        return t;
    };
    bench.tasks.push_back(make_task("wash", 0.86, 0.05, 2.0, 0.0, 1.0));
    bench.tasks.push_back(make_task("density", 0.92, 0.0, 1.0, 2.5, 1.0));
    bench.tasks.push_back(make_task("mixed", 0.88, 0.03, 1.5, 1.5, 0.5));
    return bench;
}

SynthTask make_center_label_task(const std::string& name, int slides_per_split,
                                 int patches_per_slide) {
    SynthTask t;
    t.name = name;
    t.label_region = "center_32px";
    t.train_slides = slides_per_split;
    t.tune_slides = std::max(5, slides_per_split / 2);
    t.test_slides = slides_per_split;
    t.patches_per_slide = patches_per_slide;
    t.magnifications = {Magnification::x20};
    // Per-slide wash color varies wildly; as a correlated nuisance it does
    // not average out across tokens, so the class token carries mostly
    // slide identity while the center tokens keep the class signal.
    t.slide_hue_jitter = 0.25;
    // Shared distractor periphery: identical parameters for both classes,
    // busy per-blob hue jitter so the class token is dominated by clutter.
    for (int c = 0; c < 2; ++c) {
        SynthClassParams p;
        p.base_hue = 0.90;
        p.blob_density = 6.0;
        p.blob_radius_lo = 3.0;
        p.blob_radius_hi = 7.0;
        p.texture_freq = 4.0;
        p.noise_sigma = 0.02;
        p.blob_hue = 0.55;
        p.blob_hue_jitter = 0.45; // distractor hues all over the wheel
        p.center_size = 32;
        p.center_blob_density = 260.0;
        p.center_blob_hue = c == 0 ? 0.12 : 0.52; // the only class-dependent knob
        p.center_blob_radius = 3.0;
        t.class_params.push_back(p);
        t.class_names.push_back(c == 0 ? "warm_core" : "cool_core");
    }
    return t;
}

SynthTask make_whole_image_control(const std::string& name, int slides_per_split,
                                   int patches_per_slide) {
    SynthTask t = make_center_label_task(name, slides_per_split, patches_per_slide);
    t.label_region = "whole";
    // Whole-image signal: the wash hue itself separates the classes, so
    // every token (center included) carries the label and pooling choices
    // should not matter.
    t.slide_hue_jitter = 0.02;
    for (std::size_t c = 0; c < t.class_params.size(); ++c) {
        SynthClassParams& p = t.class_params[c];
        p.base_hue = c == 0 ? 0.30 : 0.70;
        p.blob_hue = 0.72;
        p.blob_hue_jitter = 0.05;
        p.center_blob_density = 0.0;
        p.center_size = 0;
    }
    return t;
}

std::vector<CorpusItem> plan_corpus(const SynthBenchmark& bench, std::uint64_t master_seed) {
    (void)master_seed; // the plan is seed-independent; rendering is keyed by ids
    std::vector<CorpusItem> items;
    for (std::size_t ti = 0; ti < bench.tasks.size(); ++ti) {
        const SynthTask& task = bench.tasks[ti];
        if (task.class_names.size() < 2)
            throw DataError("plan_corpus: task '" + task.name + "' needs at least 2 classes");
        const std::vector<std::pair<std::string, int>> splits = {
            {"train", task.train_slides}, {"tune", task.tune_slides}, {"test", task.test_slides}};
        for (const auto& [split, n_slides] : splits) {
            for (int s = 0; s < n_slides; ++s) {
                const std::size_t class_idx = static_cast<std::size_t>(s) % task.class_names.size();
                const std::string slide_id =
                    task.name + "-" + split + "-s" + std::to_string(s);
                for (int p = 0; p < task.patches_per_slide; ++p)
                    for (Magnification mag : task.magnifications) {
                        CorpusItem item;
                        item.task_idx = ti;
                        item.class_idx = class_idx;
                        item.row.patch_id = slide_id + "/p" + std::to_string(p) + "@" + to_string(mag);
                        item.row.slide_id = slide_id;
                        item.row.case_id = slide_id;
                        item.row.magnification = mag;
                        item.row.label = task.class_names[class_idx];
                        items.push_back(std::move(item));
                    }
            }
        }
    }
    return items;
}

Patch render_item(const SynthBenchmark& bench, const CorpusItem& item, std::uint64_t master_seed) {
    const SynthTask& task = bench.tasks[item.task_idx];
    SynthClassParams params = task.class_params[item.class_idx];
    if (task.slide_hue_jitter > 0.0) {
        Rng slide_rng = Rng(master_seed).derive("synth-slide").derive(item.row.slide_id);
        params.base_hue += slide_rng.normal() * task.slide_hue_jitter;
        params.base_hue -= std::floor(params.base_hue);
    }
    Rng rng = Rng(master_seed).derive("synth-patch").derive(item.row.patch_id);
    Patch patch = gen_patch(params, item.row.magnification, rng);
    patch.slide_id = item.row.slide_id;
    patch.case_id = item.row.case_id;
    return patch;
}

} // namespace pathssl

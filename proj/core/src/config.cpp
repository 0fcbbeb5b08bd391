#include "pathssl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pathssl/error.hpp"

namespace pathssl {

namespace {

using nlohmann::json;

void collect_unknown_keys(const json& j, const std::set<std::string>& allowed,
                          const std::string& prefix, std::vector<std::string>& bad) {
    if (!j.is_object()) return;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) bad.push_back(prefix + it.key());
}

void require_no_unknown(const std::vector<std::string>& bad) {
    if (bad.empty()) return;
    std::string msg = "config: unknown key";
    msg += bad.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < bad.size(); ++i) {
        if (i) msg += ", ";
        msg += "'" + bad[i] + "'";
    }
    throw ConfigError(msg);
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
        }
    }
}

void read_pair(const json& j, const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.size() != 2)
        throw ConfigError(std::string("config: '") + key + "' must be a [lo, hi] pair");
    lo = arr.at(0).get<double>();
    hi = arr.at(1).get<double>();
}

void read_pair_int(const json& j, const char* key, int& lo, int& hi) {
    if (!j.contains(key)) return;
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.size() != 2)
        throw ConfigError(std::string("config: '") + key + "' must be a [lo, hi] pair");
    lo = arr.at(0).get<int>();
    hi = arr.at(1).get<int>();
}

CropConfig parse_crop(const json& j, const std::string& prefix, std::vector<std::string>& bad,
                      CropConfig base) {
    collect_unknown_keys(j, {"out_size", "area_range", "aspect_range"}, prefix, bad);
    read_into(j, "out_size", base.out_size);
    read_pair(j, "area_range", base.area_lo, base.area_hi);
    read_pair(j, "aspect_range", base.aspect_lo, base.aspect_hi);
    return base;
}

} // namespace

JitterStrength PipelineConfig::jitter_strength() const {
    if (augment.jitter_strength == "weak") return JitterStrength::weak();
    if (augment.jitter_strength == "moderate") return JitterStrength::moderate();
    if (augment.jitter_strength == "strong") return JitterStrength::strong();
    throw ConfigError("config: augment.jitter_strength must be weak|moderate|strong, got '" +
                      augment.jitter_strength + "'");
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: document must be a JSON object");

    std::vector<std::string> bad;
    collect_unknown_keys(j,
                         {"master_seed", "paths", "synth", "augment", "pathblur", "crops",
                          "rebalance", "loss", "probe", "weak", "titrate", "embed"},
                         "", bad);

    PipelineConfig cfg;
    if (!j.contains("master_seed"))
        throw ConfigError("config: 'master_seed' is mandatory");
    cfg.master_seed = j.at("master_seed").get<std::uint64_t>();

    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        collect_unknown_keys(p, {"corpus", "stores", "reports"}, "paths.", bad);
        read_into(p, "corpus", cfg.paths.corpus);
        read_into(p, "stores", cfg.paths.stores);
        read_into(p, "reports", cfg.paths.reports);
    }
    if (j.contains("synth")) {
        cfg.synth = SynthBenchmark::from_json(j.at("synth").dump());
        cfg.has_synth = true;
    }
    if (j.contains("augment")) {
        const auto& a = j.at("augment");
        collect_unknown_keys(a,
                             {"jitter_strength", "jitter_probability", "stain_probability",
                              "n_fit_images", "template_path"},
                             "augment.", bad);
        read_into(a, "jitter_strength", cfg.augment.jitter_strength);
        read_into(a, "jitter_probability", cfg.augment.jitter_probability);
        read_into(a, "stain_probability", cfg.augment.stain_probability);
        read_into(a, "n_fit_images", cfg.augment.n_fit_images);
        read_into(a, "template_path", cfg.augment.template_path);
    }
    if (j.contains("pathblur")) {
        const auto& p = j.at("pathblur");
        collect_unknown_keys(p,
                             {"sigma_range", "apply_probability", "poisson", "photon_scale",
                              "jpeg", "quality_range"},
                             "pathblur.", bad);
        read_pair(p, "sigma_range", cfg.pathblur.sigma_lo, cfg.pathblur.sigma_hi);
        read_into(p, "apply_probability", cfg.pathblur.apply_probability);
        read_into(p, "poisson", cfg.pathblur.poisson_enabled);
        read_into(p, "photon_scale", cfg.pathblur.photon_scale);
        read_into(p, "jpeg", cfg.pathblur.jpeg_enabled);
        read_pair_int(p, "quality_range", cfg.pathblur.quality_lo, cfg.pathblur.quality_hi);
    }
    if (j.contains("crops")) {
        const auto& c = j.at("crops");
        collect_unknown_keys(c, {"global", "local", "n_locals", "min_overlap"}, "crops.", bad);
        if (c.contains("global"))
            cfg.crops.global = parse_crop(c.at("global"), "crops.global.", bad, cfg.crops.global);
        if (c.contains("local"))
            cfg.crops.local = parse_crop(c.at("local"), "crops.local.", bad, cfg.crops.local);
        read_into(c, "n_locals", cfg.crops.n_locals);
        read_into(c, "min_overlap", cfg.crops.min_overlap);
    }
    if (j.contains("rebalance")) {
        const auto& r = j.at("rebalance");
        collect_unknown_keys(r, {"k", "max_iters", "total", "store"}, "rebalance.", bad);
        read_into(r, "k", cfg.rebalance.k);
        read_into(r, "max_iters", cfg.rebalance.max_iters);
        read_into(r, "total", cfg.rebalance.total);
        read_into(r, "store", cfg.rebalance.store);
    }
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        collect_unknown_keys(l,
                             {"ntxent_temperature", "teacher_temperature", "student_temperature",
                              "memax_weight", "sinkhorn_iters", "beta_max", "hybrid_weight"},
                             "loss.", bad);
        read_into(l, "ntxent_temperature", cfg.loss.ntxent_temperature);
        read_into(l, "teacher_temperature", cfg.loss.teacher_temperature);
        read_into(l, "student_temperature", cfg.loss.student_temperature);
        read_into(l, "memax_weight", cfg.loss.memax_weight);
        read_into(l, "sinkhorn_iters", cfg.loss.sinkhorn_iters);
        read_into(l, "beta_max", cfg.loss.beta_max);
        read_into(l, "hybrid_weight", cfg.loss.hybrid_weight);
    }
    if (j.contains("probe")) {
        const auto& p = j.at("probe");
        collect_unknown_keys(p,
                             {"mode", "eval_split", "train_count", "tune_count", "eval_count",
                              "bootstrap_replicates", "benchmark"},
                             "probe.", bad);
        read_into(p, "mode", cfg.probe.mode);
        read_into(p, "eval_split", cfg.probe.eval_split);
        read_into(p, "train_count", cfg.probe.train_count);
        read_into(p, "tune_count", cfg.probe.tune_count);
        read_into(p, "eval_count", cfg.probe.eval_count);
        read_into(p, "bootstrap_replicates", cfg.probe.bootstrap_replicates);
        read_into(p, "benchmark", cfg.probe.benchmark);
    }
    if (j.contains("weak")) {
        const auto& w = j.at("weak");
        collect_unknown_keys(w,
                             {"task", "sample_n", "bootstrap_replicates", "store", "labels",
                              "expression", "gene_sets", "followup"},
                             "weak.", bad);
        read_into(w, "task", cfg.weak.task);
        read_into(w, "sample_n", cfg.weak.sample_n);
        read_into(w, "bootstrap_replicates", cfg.weak.bootstrap_replicates);
        read_into(w, "store", cfg.weak.store);
        read_into(w, "labels", cfg.weak.labels);
        read_into(w, "expression", cfg.weak.expression);
        read_into(w, "gene_sets", cfg.weak.gene_sets);
        read_into(w, "followup", cfg.weak.followup);
    }
    if (j.contains("titrate")) {
        const auto& t = j.at("titrate");
        collect_unknown_keys(t, {"fractions", "subsamples", "task", "bootstrap_replicates"},
                             "titrate.", bad);
        read_into(t, "fractions", cfg.titrate.fractions);
        read_into(t, "subsamples", cfg.titrate.subsamples);
        read_into(t, "task", cfg.titrate.task);
        read_into(t, "bootstrap_replicates", cfg.titrate.bootstrap_replicates);
    }
    if (j.contains("embed")) {
        const auto& e = j.at("embed");
        collect_unknown_keys(e, {"store_tokens", "export_jsonl"}, "embed.", bad);
        read_into(e, "store_tokens", cfg.embed.store_tokens);
        read_into(e, "export_jsonl", cfg.embed.export_jsonl);
    }

    require_no_unknown(bad);
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string PipelineConfig::resolved_json() const {
    json j;
    j["master_seed"] = master_seed;
    j["paths"] = {{"corpus", paths.corpus}, {"stores", paths.stores}, {"reports", paths.reports}};
    if (has_synth) j["synth"] = json::parse(synth.to_json());
    j["augment"] = {{"jitter_strength", augment.jitter_strength},
                    {"jitter_probability", augment.jitter_probability},
                    {"stain_probability", augment.stain_probability},
                    {"n_fit_images", augment.n_fit_images},
                    {"template_path", augment.template_path}};
    j["pathblur"] = {{"sigma_range", {pathblur.sigma_lo, pathblur.sigma_hi}},
                     {"apply_probability", pathblur.apply_probability},
                     {"poisson", pathblur.poisson_enabled},
                     {"photon_scale", pathblur.photon_scale},
                     {"jpeg", pathblur.jpeg_enabled},
                     {"quality_range", {pathblur.quality_lo, pathblur.quality_hi}}};
    auto crop_json = [](const CropConfig& c) {
        return json{{"out_size", c.out_size},
                    {"area_range", {c.area_lo, c.area_hi}},
                    {"aspect_range", {c.aspect_lo, c.aspect_hi}}};
    };
    j["crops"] = {{"global", crop_json(crops.global)},
                  {"local", crop_json(crops.local)},
                  {"n_locals", crops.n_locals},
                  {"min_overlap", crops.min_overlap}};
    j["rebalance"] = {{"k", rebalance.k},
                      {"max_iters", rebalance.max_iters},
                      {"total", rebalance.total},
                      {"store", rebalance.store}};
    j["loss"] = {{"ntxent_temperature", loss.ntxent_temperature},
                 {"teacher_temperature", loss.teacher_temperature},
                 {"student_temperature", loss.student_temperature},
                 {"memax_weight", loss.memax_weight},
                 {"sinkhorn_iters", loss.sinkhorn_iters},
                 {"beta_max", loss.beta_max},
                 {"hybrid_weight", loss.hybrid_weight}};
    j["probe"] = {{"mode", probe.mode},
                  {"eval_split", probe.eval_split},
                  {"train_count", probe.train_count},
                  {"tune_count", probe.tune_count},
                  {"eval_count", probe.eval_count},
                  {"bootstrap_replicates", probe.bootstrap_replicates},
                  {"benchmark", probe.benchmark}};
    j["weak"] = {{"task", weak.task},
                 {"sample_n", weak.sample_n},
                 {"bootstrap_replicates", weak.bootstrap_replicates},
                 {"store", weak.store},
                 {"labels", weak.labels},
                 {"expression", weak.expression},
                 {"gene_sets", weak.gene_sets},
                 {"followup", weak.followup}};
    j["titrate"] = {{"fractions", titrate.fractions},
                    {"subsamples", titrate.subsamples},
                    {"task", titrate.task},
                    {"bootstrap_replicates", titrate.bootstrap_replicates}};
    j["embed"] = {{"store_tokens", embed.store_tokens}, {"export_jsonl", embed.export_jsonl}};
    return j.dump(2);
}

} // namespace pathssl

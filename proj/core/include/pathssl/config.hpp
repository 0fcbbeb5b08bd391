#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathssl/corruptions.hpp"
#include "pathssl/imagecolor.hpp"
#include "pathssl/objectives.hpp"
#include "pathssl/synth.hpp"
#include "pathssl/views.hpp"

namespace pathssl {

/// The pipeline configuration document. The schema is strict: any key not
/// listed below raises a ConfigError naming every offending key, so a
/// mistyped hyperparameter can never be silently ignored.
struct PipelineConfig {
    std::uint64_t master_seed = 0;

    struct Paths {
        std::string corpus;  // corpus root (PNGs + manifests + benchmark spec)
        std::string stores;  // embedding store directory
        std::string reports; // default output root
    } paths;

    SynthBenchmark synth;
    bool has_synth = false;

    struct Augment {
        std::string jitter_strength = "moderate"; // weak | moderate | strong
        double jitter_probability = 0.8;
        double stain_probability = 0.8;
        int n_fit_images = 1000;
        std::string template_path; // stain template location (fit-template output)
    } augment;

    PathBlurConfig pathblur;
    MultiCropConfig crops;

    struct Rebalance {
        int k = 64;
        int max_iters = 100;
        std::size_t total = 1000;
        std::string store; // embedding store to cluster
    } rebalance;

    LossConfig loss;

    struct Probe {
        std::string mode = "cls_only";
        std::string eval_split = "tune";
        int train_count = 10000;
        int tune_count = 5000;
        int eval_count = 5000;
        int bootstrap_replicates = 1000;
        std::string benchmark; // benchmark spec path; empty = corpus default
    } probe;

    struct Weak {
        std::string task = "labels"; // labels | genes | survival
        int sample_n = 1000;
        int bootstrap_replicates = 1000;
        std::string store;
        std::string labels;     // case_id\tlabel table
        std::string expression; // gene x case matrix
        std::string gene_sets;  // gene set JSON
        std::string followup;   // case_id\tyears\tevent table
    } weak;

    struct Titrate {
        std::vector<double> fractions = {0.125, 0.25, 0.5, 1.0};
        int subsamples = 5;
        std::string task; // synth task to titrate; empty = first
        int bootstrap_replicates = 200;
    } titrate;

    struct Embed {
        bool store_tokens = false;
        bool export_jsonl = false; // also write a line-delimited JSON export
    } embed;

    JitterStrength jitter_strength() const;

    static PipelineConfig from_json(const std::string& text);
    static PipelineConfig load(const std::string& path);
    /// The fully resolved document (defaults filled in), echoed into every
    /// run directory for reproducibility.
    std::string resolved_json() const;
};

} // namespace pathssl

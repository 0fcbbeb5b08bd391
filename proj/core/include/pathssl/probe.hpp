#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pathssl/embeddings.hpp"
#include "pathssl/matrix.hpp"
#include "pathssl/rng.hpp"
#include "pathssl/text_io.hpp"

namespace pathssl {

/// Features, integer labels and slide provenance for one task at one
/// magnification.
struct ProbeDataset {
    Matrix X;                          // n x f
    std::vector<int> y;                // labels in [0, C)
    std::vector<std::string> slide_ids;
    Magnification magnification = Magnification::x20;
    int n_classes = 0;

    std::size_t size() const { return y.size(); }
    void validate(const char* where) const;
};

/// Multinomial logistic regression weights.
struct ProbeModel {
    Matrix W;              // C x f
    std::vector<double> b; // C
    double inverse_reg = 1.0;

    /// Row-softmax class probabilities for a feature matrix.
    Matrix predict_proba(const Matrix& X) const;
};

/// Multinomial logistic regression minimizing
///   mean cross-entropy + ||W||_F^2 / (2 * inverse_reg * n)
/// (biases unpenalized), optimized by L-BFGS from zero initialization,
/// capped at max_iters iterations.
ProbeModel train_logreg(const Matrix& X, const std::vector<int>& y, double inverse_reg,
                        int max_iters = 100);

/// Objective value and gradient of the train_logreg problem at given
/// parameters (exposed so tests can check stationarity independently).
double logreg_objective(const Matrix& X, const std::vector<int>& y, double inverse_reg,
                        const ProbeModel& model, Matrix* grad_w = nullptr,
                        std::vector<double>* grad_b = nullptr);

/// The regularization grid: 10 log-spaced values over [1e-4, 1e4],
/// endpoints exact.
std::vector<double> regularization_grid();

/// Per-sample fold ids for slide-grouped k-fold CV. All patches of a slide
/// share a fold; fold sizes are balanced by slide count; when every slide
/// carries a single label the deal is stratified by that label.
std::vector<int> slide_folds(const std::vector<std::string>& slide_ids,
                             const std::vector<int>& labels, int n_folds, Rng rng);

/// Selects the grid value maximizing mean held-out macro AUC over a
/// 5-fold slide-grouped split; ties go to the smaller value.
double cross_validate(const Matrix& X, const std::vector<int>& y,
                      const std::vector<std::string>& slide_ids, Rng rng, int max_iters = 100);

/// Mann-Whitney AUC with tie handling:
///   (#{pos > neg} + 0.5 #{pos = neg}) / (n+ * n-)
double auc_binary(std::span<const double> scores, std::span<const int> binary_labels);

/// Unweighted mean of one-vs-rest binary AUCs over all C classes.
double auc_macro(const Matrix& probs, const std::vector<int>& labels);

/// Highest AUC across the three probe magnifications; ties break to the
/// higher magnification. All of 5x, 10x, 20x must be present.
std::pair<Magnification, double> best_over_magnifications(
    const std::map<Magnification, double>& task_aucs);

/// Declarative benchmark: tasks, class lists, composite weights and split
/// manifests.
struct BenchmarkTask {
    std::string name;
    std::vector<std::string> classes;
    double weight = 1.0;
    std::map<std::string, std::string> split_manifests; // split -> manifest path
};

struct BenchmarkSpec {
    std::string name;
    std::vector<BenchmarkTask> tasks;

    /// The shipped default weighting: 11 tasks, breast tasks 0.33 each,
    /// CAMELYON16 / Lung AD / CIN / CRC 1 each, Gleason NCB / Gleason RP /
    /// Tissue type / TCGA study type 0.5 each.
    static BenchmarkSpec default_weights();

    std::string to_json() const;
    static BenchmarkSpec from_json(const std::string& text);
    static BenchmarkSpec load(const std::string& path);
    void save(const std::string& path) const;
};

/// Weighted mean of per-task best AUCs: sum(w*auc) / sum(w).
double composite_metric(const std::vector<double>& best_aucs, const BenchmarkSpec& spec);

struct BootstrapCi {
    double lo = 0.0;
    double hi = 0.0;
    int skipped = 0; // replicates undefined after 10 redraws
};

/// Percentile bootstrap over groups (slides or cases). Each replicate
/// draws n_groups group indices with replacement and hands them to
/// metric_fn; replicates where the metric is undefined are redrawn up to
/// 10 times, then skipped and counted. Interval bounds are type-1
/// empirical quantiles at 2.5% / 97.5% of the defined replicates, which
/// makes the interval exactly equivariant under monotone metric
/// transforms.
BootstrapCi bootstrap_ci(std::size_t n_groups,
                         const std::function<std::optional<double>(const std::vector<std::size_t>&)>& metric_fn,
                         int replicates, Rng rng, unsigned threads = 1);

struct TaskResult {
    std::string name;
    std::map<Magnification, double> auc_eval;      // reported split
    std::map<Magnification, double> auc_selection; // split used to pick the magnification
    Magnification selected_magnification = Magnification::x20;
    double selected_auc = 0.0;  // eval AUC at the selected magnification
    double best_eval_auc = 0.0; // max eval AUC (reported alongside)
    double selected_inverse_reg = 1.0;
};

struct ProbeResult {
    std::string benchmark;
    std::string feature_mode;
    std::string eval_split;
    std::uint64_t seed = 0;
    std::vector<TaskResult> tasks;
    double composite = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    int bootstrap_skipped = 0;
    int bootstrap_replicates = 0;

    std::string to_json() const;
    static ProbeResult from_json(const std::string& text);
    /// Plain-text table: per-task AUC by magnification plus the composite
    /// line with its confidence interval.
    std::string render_table() const;
};

struct ProbeRunConfig {
    FeatureMode mode = FeatureMode::cls_only();
    std::string eval_split = "tune"; // "tune": fit on train; "test": fit on train+tune
    int train_count = 10000;
    int tune_count = 5000;  // extra fit patches in test mode
    int eval_count = 5000;
    int bootstrap_replicates = 1000;
    int lbfgs_iters = 100;
    unsigned threads = 1;
};

/// Full per-task, per-magnification protocol: sample counts, slide-grouped
/// CV for the regularizer, fit, macro AUC; then magnification selection on
/// the tune evaluation, the weighted composite, and a slide bootstrap CI
/// of the composite. Deterministic for a fixed seed at any thread count.
ProbeResult run_linear_probe(const BenchmarkSpec& spec,
                             const std::map<Magnification, std::string>& store_paths,
                             const ProbeRunConfig& cfg, std::uint64_t seed);

/// Same, with pre-loaded stores (the CLI and tests share this path).
ProbeResult run_linear_probe(const BenchmarkSpec& spec,
                             const std::map<Magnification, std::vector<EmbeddingRecord>>& stores,
                             const ProbeRunConfig& cfg, std::uint64_t seed);

} // namespace pathssl

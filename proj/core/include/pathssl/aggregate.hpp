#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pathssl/embeddings.hpp"
#include "pathssl/matrix.hpp"
#include "pathssl/probe.hpp"
#include "pathssl/rng.hpp"

namespace pathssl {

/// Mean-pooled patch features for one case.
struct CaseRecord {
    std::string case_id;
    std::vector<double> pooled;
    int n_pooled = 0;
    int label = 0;
};

/// Named list of gene symbols.
struct GeneSetSpec {
    std::string name;
    std::vector<std::string> genes;
};

/// The four shipped default gene sets (two liver, two breast panels).
std::vector<GeneSetSpec> default_gene_sets();
std::vector<GeneSetSpec> gene_sets_from_json(const std::string& text);
std::string gene_sets_to_json(const std::vector<GeneSetSpec>& sets);

/// Samples sample_n patch features for a case (without replacement when
/// enough are available, with replacement otherwise) and mean-pools them.
/// sample_n >= available uses them all exactly once only when equal;
/// short cases resample.
CaseRecord case_pool(const std::string& case_id,
                     const std::vector<std::vector<double>>& patch_features, int sample_n,
                     Rng rng);

/// Binary labels from per-case expression: 1 iff value > median over the
/// labeled cohort (ties at the median get 0). All-equal values are an
/// error naming the gene.
std::map<std::string, int> gene_median_labels(const std::map<std::string, double>& expression,
                                              const std::string& gene);

/// Unweighted mean of per-gene AUCs over a gene set.
double geneset_auc(const std::map<std::string, double>& per_gene_auc, const GeneSetSpec& spec);

/// Five-year survival label. Death at t <= 5 -> 0; survival established
/// past 5 years (death after 5, or censored/alive after 5) -> 1; censored
/// at or before 5 years -> unresolvable, excluded.
std::optional<int> survival_label(double followup_years, bool event_observed);

struct WeakEvalResult {
    double auc = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    int bootstrap_skipped = 0;
    double inverse_reg = 1.0;
    int n_cases = 0;
};

struct WeakEvalConfig {
    int bootstrap_replicates = 1000;
    int lbfgs_iters = 100;
    unsigned threads = 1;
};

/// Case-level linear evaluation: case-grouped CV selects the regularizer,
/// a logistic probe is fit on pooled features, and the AUC is
/// bootstrapped by resampling cases.
WeakEvalResult weak_eval(const std::vector<CaseRecord>& cases, int n_classes,
                         const WeakEvalConfig& cfg, Rng rng);

/// Data-titration subsets: for each fraction, subsamples_per_fraction
/// independent uniform slide subsets of size round(fraction * n), without
/// replacement. Fraction 1.0 returns the full list every time.
std::map<double, std::vector<std::vector<std::string>>> titrate_slides(
    const std::vector<std::string>& slides, const std::vector<double>& fractions,
    int subsamples_per_fraction, Rng rng);

/// Class-balanced selection of `total` patch indices: equal per-class
/// quotas with the remainder to the lowest class ids, sampling with
/// replacement within classes that are short.
std::vector<std::size_t> class_balanced_patch_sample(const std::vector<int>& labels,
                                                     std::size_t total, Rng rng);

} // namespace pathssl

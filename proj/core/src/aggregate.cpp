#include "pathssl/aggregate.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "pathssl/error.hpp"

namespace pathssl {

std::vector<GeneSetSpec> default_gene_sets() {
    return {
        {"LIHC set 1", {"CD3D", "CD3E", "CD3G", "CD247", "CD19", "MS4A1", "MKI67"}},
        {"LIHC set 2", {"CYP3A4", "CYP1A2", "GLUL", "CYP2E1", "FABP1"}},
        {"BRCA set 1",
         {"ADAM33", "AURKA", "BIRC5", "CCNB2", "CDC20", "CDC45", "CDCA5", "CDCA8", "CENPA",
          "DACT3", "E2F2", "KIF2C", "KPNA2", "MCM10", "MYBL2", "NCAPG", "NCAPH", "NDC80",
          "ORC1", "PLK1", "PODN", "PRR11", "SFRP2", "SKA1", "TROAP"}},
        {"BRCA set 2",
         {"BCL2", "CCNE1", "CDC20", "CDCA7", "CENPA", "CMC2", "ESR1", "FOXA1", "KIF2C", "MAPT",
          "MLPH", "MSANTD3", "MYBL2", "NAT1", "PGR", "PTTG1", "SCUBE2", "SLC39A6", "SLC7A5",
          "UBE2C"}},
    };
}

std::vector<GeneSetSpec> gene_sets_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("gene sets: invalid JSON: ") + e.what());
    }
    if (j.value("format", "") != "gene_sets.v1")
        throw DataError("gene sets: missing or unknown 'format'");
    std::vector<GeneSetSpec> sets;
    for (const auto& sj : j.at("sets")) {
        GeneSetSpec s;
        s.name = sj.at("name").get<std::string>();
        s.genes = sj.at("genes").get<std::vector<std::string>>();
        if (s.genes.empty()) throw DataError("gene sets: set '" + s.name + "' is empty");
        sets.push_back(std::move(s));
    }
    return sets;
}

std::string gene_sets_to_json(const std::vector<GeneSetSpec>& sets) {
    nlohmann::json j;
    j["format"] = "gene_sets.v1";
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : sets) {
        nlohmann::json sj;
        sj["name"] = s.name;
        sj["genes"] = s.genes;
        arr.push_back(sj);
    }
    j["sets"] = arr;
    return j.dump(2);
}

CaseRecord case_pool(const std::string& case_id,
                     const std::vector<std::vector<double>>& patch_features, int sample_n,
                     Rng rng) {
    if (patch_features.empty())
        throw DataError("case_pool: case '" + case_id + "' has zero patches");
    if (sample_n < 1) throw DataError("case_pool: sample_n must be >= 1");
    const std::size_t available = patch_features.size();
    const std::size_t want = static_cast<std::size_t>(sample_n);

    std::vector<std::size_t> picks;
    if (want <= available) {
        picks = rng.sample_without_replacement(available, want);
    } else {
        picks.reserve(want);
        for (std::size_t i = 0; i < want; ++i)
            picks.push_back(static_cast<std::size_t>(rng.uniform_int(available)));
    }

    CaseRecord rec;
    rec.case_id = case_id;
    rec.n_pooled = static_cast<int>(picks.size());
    rec.pooled.assign(patch_features.front().size(), 0.0);
    for (std::size_t p : picks) {
        const auto& f = patch_features[p];
        if (f.size() != rec.pooled.size())
            throw DataError("case_pool: inconsistent feature lengths in case '" + case_id + "'");
        for (std::size_t j = 0; j < f.size(); ++j) rec.pooled[j] += f[j];
    }
    for (auto& v : rec.pooled) v /= static_cast<double>(picks.size());
    return rec;
}

std::map<std::string, int> gene_median_labels(const std::map<std::string, double>& expression,
                                              const std::string& gene) {
    if (expression.size() < 2)
        throw DataError("gene_median_labels: gene '" + gene + "' has fewer than 2 cases");
    std::vector<double> values;
    values.reserve(expression.size());
    for (const auto& [id, v] : expression) values.push_back(v);
    std::sort(values.begin(), values.end());
    if (values.front() == values.back())
        throw DataError("gene_median_labels: gene '" + gene +
                        "' has identical expression for every case; task degenerate");
    const std::size_t n = values.size();
    const double median = n % 2 == 1 ? values[n / 2]
                                     : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    std::map<std::string, int> labels;
    for (const auto& [id, v] : expression) labels[id] = v > median ? 1 : 0;
    return labels;
}

double geneset_auc(const std::map<std::string, double>& per_gene_auc, const GeneSetSpec& spec) {
    if (spec.genes.empty()) throw DataError("geneset_auc: empty gene set '" + spec.name + "'");
    double sum = 0.0;
    for (const auto& gene : spec.genes) {
        auto it = per_gene_auc.find(gene);
        if (it == per_gene_auc.end())
            throw DataError("geneset_auc: missing AUC for gene '" + gene + "' in set '" +
                            spec.name + "'");
        sum += it->second;
    }
    return sum / static_cast<double>(spec.genes.size());
}

std::optional<int> survival_label(double followup_years, bool event_observed) {
    if (followup_years < 0.0)
        throw DataError("survival_label: negative follow-up time");
    constexpr double kHorizon = 5.0;
    if (event_observed) return followup_years > kHorizon ? 1 : 0;
    if (followup_years > kHorizon) return 1;
    return std::nullopt; // censored before the horizon resolves the label
}

WeakEvalResult weak_eval(const std::vector<CaseRecord>& cases, int n_classes,
                         const WeakEvalConfig& cfg, Rng rng) {
    if (cases.size() < 2) throw DataError("weak_eval: need at least 2 cases");
    if (n_classes < 2) throw DataError("weak_eval: need at least 2 classes");

    Matrix X(cases.size(), cases.front().pooled.size());
    std::vector<int> y(cases.size());
    std::vector<std::string> ids(cases.size());
    std::vector<int> seen(static_cast<std::size_t>(n_classes), 0);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (cases[i].pooled.size() != X.cols())
            throw DataError("weak_eval: inconsistent pooled feature lengths");
        for (std::size_t j = 0; j < X.cols(); ++j) X(i, j) = cases[i].pooled[j];
        if (cases[i].label < 0 || cases[i].label >= n_classes)
            throw DataError("weak_eval: label out of range for case '" + cases[i].case_id + "'");
        y[i] = cases[i].label;
        ids[i] = cases[i].case_id;
        seen[static_cast<std::size_t>(y[i])] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw DataError("weak_eval: a class has no cases");

    WeakEvalResult res;
    res.n_cases = static_cast<int>(cases.size());
    // Folds group by case: each case is its own group (ids are case ids).
    res.inverse_reg = cross_validate(X, y, ids, rng.derive(1), cfg.lbfgs_iters);
    const ProbeModel model = train_logreg(X, y, res.inverse_reg, cfg.lbfgs_iters);
    const Matrix probs = model.predict_proba(X);
    res.auc = auc_macro(probs, y);

    const auto metric = [&](const std::vector<std::size_t>& chosen) -> std::optional<double> {
        std::vector<int> labels;
        Matrix sub(chosen.size(), probs.cols());
        for (std::size_t r = 0; r < chosen.size(); ++r) {
            for (std::size_t j = 0; j < probs.cols(); ++j) sub(r, j) = probs(chosen[r], j);
            labels.push_back(y[chosen[r]]);
        }
        // defined only when every class column has both outcomes
        double sum = 0.0;
        int defined = 0;
        std::vector<double> scores(labels.size());
        std::vector<int> binary(labels.size());
        for (int c = 0; c < n_classes; ++c) {
            int pos = 0;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                binary[i] = labels[i] == c ? 1 : 0;
                pos += binary[i];
                scores[i] = sub(i, static_cast<std::size_t>(c));
            }
            if (pos == 0 || pos == static_cast<int>(labels.size())) continue;
            sum += auc_binary(scores, binary);
            ++defined;
        }
        if (defined == 0) return std::nullopt;
        return sum / defined;
    };
    const BootstrapCi ci =
        bootstrap_ci(cases.size(), metric, cfg.bootstrap_replicates, rng.derive(2), cfg.threads);
    res.ci_lo = ci.lo;
    res.ci_hi = ci.hi;
    res.bootstrap_skipped = ci.skipped;
    return res;
}

std::map<double, std::vector<std::vector<std::string>>> titrate_slides(
    const std::vector<std::string>& slides, const std::vector<double>& fractions,
    int subsamples_per_fraction, Rng rng) {
    if (slides.empty()) throw DataError("titrate_slides: empty slide list");
    if (subsamples_per_fraction < 1)
        throw DataError("titrate_slides: subsamples_per_fraction must be >= 1");

    std::map<double, std::vector<std::vector<std::string>>> out;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        const double f = fractions[fi];
        if (!(f > 0.0 && f <= 1.0))
            throw DataError("titrate_slides: fractions must be in (0, 1]");
        const std::size_t size =
            static_cast<std::size_t>(std::lround(f * static_cast<double>(slides.size())));
        if (size < 1)
            throw DataError("titrate_slides: fraction " + std::to_string(f) +
                            " rounds to an empty subset");
        auto& subsets = out[f];
        for (int s = 0; s < subsamples_per_fraction; ++s) {
            if (size == slides.size()) {
                subsets.push_back(slides); // full set, identical every time
                continue;
            }
            Rng sub_rng = rng.derive(fi * 1000 + static_cast<std::size_t>(s));
            std::vector<std::string> subset;
            subset.reserve(size);
            for (std::size_t idx : sub_rng.sample_without_replacement(slides.size(), size))
                subset.push_back(slides[idx]);
            subsets.push_back(std::move(subset));
        }
    }
    return out;
}

std::vector<std::size_t> class_balanced_patch_sample(const std::vector<int>& labels,
                                                     std::size_t total, Rng rng) {
    if (labels.empty()) throw DataError("class_balanced_patch_sample: no patches");
    int n_classes = 0;
    for (int l : labels) {
        if (l < 0) throw DataError("class_balanced_patch_sample: negative label");
        n_classes = std::max(n_classes, l + 1);
    }
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_classes));
    for (std::size_t i = 0; i < labels.size(); ++i)
        members[static_cast<std::size_t>(labels[i])].push_back(i);
    for (int c = 0; c < n_classes; ++c)
        if (members[static_cast<std::size_t>(c)].empty())
            throw DataError("class_balanced_patch_sample: class " + std::to_string(c) +
                            " has zero patches");
    if (total < static_cast<std::size_t>(n_classes))
        throw DataError("class_balanced_patch_sample: total smaller than the class count");

    const std::size_t base = total / static_cast<std::size_t>(n_classes);
    const std::size_t remainder = total % static_cast<std::size_t>(n_classes);
    std::vector<std::size_t> out;
    out.reserve(total);
    for (int c = 0; c < n_classes; ++c) {
        const auto& pool = members[static_cast<std::size_t>(c)];
        const std::size_t quota = base + (static_cast<std::size_t>(c) < remainder ? 1 : 0);
        if (pool.size() >= quota) {
            for (std::size_t idx : rng.sample_without_replacement(pool.size(), quota))
                out.push_back(pool[idx]);
        } else {
            for (std::size_t s = 0; s < quota; ++s)
                out.push_back(pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))]);
        }
    }
    return out;
}

} // namespace pathssl

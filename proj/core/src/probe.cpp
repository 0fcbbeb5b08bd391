#include "pathssl/probe.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "pathssl/error.hpp"
#include "pathssl/parallel.hpp"

namespace pathssl {

namespace {

double norm_inf(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Objective + gradient for multinomial logistic regression with the
/// parameters packed as [W row-major (C x f), b (C)].
struct LogregProblem {
    const Matrix& X;
    const std::vector<int>& y;
    double inverse_reg;
    std::size_t n_classes;

    std::size_t dim() const { return n_classes * (X.cols() + 1); }

    double eval(const std::vector<double>& theta, std::vector<double>& grad) const {
        const std::size_t n = X.rows();
        const std::size_t f = X.cols();
        const std::size_t C = n_classes;
        grad.assign(theta.size(), 0.0);
        const double* W = theta.data();
        const double* b = theta.data() + C * f;
        double* gW = grad.data();
        double* gb = grad.data() + C * f;

        double loss = 0.0;
        std::vector<double> logits(C);
        for (std::size_t i = 0; i < n; ++i) {
            const auto xi = X.row(i);
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < C; ++c) {
                double s = b[c];
                const double* w = W + c * f;
                for (std::size_t j = 0; j < f; ++j) s += w[j] * xi[j];
                logits[c] = s;
                mx = std::max(mx, s);
            }
            double z = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                logits[c] = std::exp(logits[c] - mx);
                z += logits[c];
            }
            loss -= std::log(std::max(logits[static_cast<std::size_t>(y[i])] / z, 1e-300));
            for (std::size_t c = 0; c < C; ++c) {
                const double p = logits[c] / z;
                const double g = (p - (static_cast<int>(c) == y[i] ? 1.0 : 0.0)) / static_cast<double>(n);
                gb[c] += g;
                double* gw = gW + c * f;
                for (std::size_t j = 0; j < f; ++j) gw[j] += g * xi[j];
            }
        }
        loss /= static_cast<double>(n);

        const double reg = 1.0 / (2.0 * inverse_reg * static_cast<double>(n));
        double wsq = 0.0;
        for (std::size_t i = 0; i < C * f; ++i) {
            wsq += W[i] * W[i];
            gW[i] += 2.0 * reg * W[i];
        }
        return loss + reg * wsq;
    }
};

/// L-BFGS with two-loop recursion and Armijo backtracking.
void lbfgs_minimize(const LogregProblem& problem, std::vector<double>& theta, int max_iters) {
    constexpr std::size_t kHistory = 10;
    constexpr double kGradTol = 1e-8;
    std::vector<double> grad, grad_new(theta.size()), trial(theta.size());
    double value = problem.eval(theta, grad);

    std::deque<std::vector<double>> hist_s, hist_y;
    std::deque<double> hist_rho;

    for (int iter = 0; iter < max_iters; ++iter) {
        if (norm_inf(grad) < kGradTol) break;

        // two-loop recursion
        std::vector<double> q = grad;
        std::vector<double> alpha(hist_s.size());
        for (std::size_t h = hist_s.size(); h-- > 0;) {
            alpha[h] = hist_rho[h] * vdot(hist_s[h], q);
            for (std::size_t j = 0; j < q.size(); ++j) q[j] -= alpha[h] * hist_y[h][j];
        }
        if (!hist_s.empty()) {
            const double yy = vdot(hist_y.back(), hist_y.back());
            const double gamma = yy > 0.0 ? vdot(hist_s.back(), hist_y.back()) / yy : 1.0;
            for (auto& v : q) v *= gamma;
        }
        for (std::size_t h = 0; h < hist_s.size(); ++h) {
            const double beta = hist_rho[h] * vdot(hist_y[h], q);
            for (std::size_t j = 0; j < q.size(); ++j) q[j] += (alpha[h] - beta) * hist_s[h][j];
        }
        std::vector<double> dir(q.size());
        for (std::size_t j = 0; j < q.size(); ++j) dir[j] = -q[j];
        double slope = vdot(dir, grad);
        if (slope > -1e-18) { // not a descent direction; fall back to steepest
            for (std::size_t j = 0; j < q.size(); ++j) dir[j] = -grad[j];
            slope = -vdot(grad, grad);
        }

        double step = 1.0;
        if (iter == 0) {
            const double gnorm = std::sqrt(vdot(grad, grad));
            step = gnorm > 1.0 ? 1.0 / gnorm : 1.0;
        }
        bool accepted = false;
        double trial_value = value;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t j = 0; j < theta.size(); ++j) trial[j] = theta[j] + step * dir[j];
            trial_value = problem.eval(trial, grad_new);
            if (trial_value <= value + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        std::vector<double> s(theta.size()), yv(theta.size());
        for (std::size_t j = 0; j < theta.size(); ++j) {
            s[j] = trial[j] - theta[j];
            yv[j] = grad_new[j] - grad[j];
        }
        const double ys = vdot(yv, s);
        if (ys > 1e-12) {
            hist_s.push_back(std::move(s));
            hist_y.push_back(std::move(yv));
            hist_rho.push_back(1.0 / ys);
            if (hist_s.size() > kHistory) {
                hist_s.pop_front();
                hist_y.pop_front();
                hist_rho.pop_front();
            }
        }
        theta.swap(trial);
        grad.swap(grad_new);
        value = trial_value;
    }
}

/// Macro AUC over the classes that are actually present with both
/// positives and negatives; nullopt when no class qualifies. Used for CV
/// fold scoring and bootstrap replicates, where small resamples can lose
/// classes. The public auc_macro keeps the strict every-class contract.
std::optional<double> macro_auc_present(const Matrix& probs, const std::vector<int>& labels,
                                        int n_classes) {
    double sum = 0.0;
    int defined = 0;
    std::vector<double> scores(labels.size());
    std::vector<int> binary(labels.size());
    for (int c = 0; c < n_classes; ++c) {
        int pos = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            binary[i] = labels[i] == c ? 1 : 0;
            pos += binary[i];
            scores[i] = probs(i, static_cast<std::size_t>(c));
        }
        if (pos == 0 || pos == static_cast<int>(labels.size())) continue;
        sum += auc_binary(scores, binary);
        ++defined;
    }
    if (defined == 0) return std::nullopt;
    return sum / defined;
}

double type1_quantile(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    const double pos = std::ceil(q * static_cast<double>(n));
    std::size_t idx = pos <= 1.0 ? 0 : static_cast<std::size_t>(pos) - 1;
    idx = std::min(idx, n - 1);
    return sorted[idx];
}

Magnification kProbeMags[3] = {Magnification::x5, Magnification::x10, Magnification::x20};

} // namespace

void ProbeDataset::validate(const char* where) const {
    if (X.rows() != y.size() || slide_ids.size() != y.size())
        throw DataError(std::string(where) + ": inconsistent dataset lengths");
    if (n_classes < 2) throw DataError(std::string(where) + ": need at least 2 classes");
    for (int label : y)
        if (label < 0 || label >= n_classes)
            throw DataError(std::string(where) + ": label out of range");
}

Matrix ProbeModel::predict_proba(const Matrix& X) const {
    const std::size_t C = W.rows();
    Matrix probs(X.rows(), C);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < C; ++c) {
            double s = b[c] + dot(W.row(c), X.row(i));
            probs(i, c) = s;
            mx = std::max(mx, s);
        }
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            probs(i, c) = std::exp(probs(i, c) - mx);
            z += probs(i, c);
        }
        for (std::size_t c = 0; c < C; ++c) probs(i, c) /= z;
    }
    return probs;
}

ProbeModel train_logreg(const Matrix& X, const std::vector<int>& y, double inverse_reg,
                        int max_iters) {
    if (inverse_reg <= 0.0) throw DataError("train_logreg: inverse_reg must be > 0");
    if (X.rows() != y.size() || y.empty()) throw DataError("train_logreg: bad shapes");
    int max_label = 0;
    for (int label : y) max_label = std::max(max_label, label);
    const std::size_t C = static_cast<std::size_t>(max_label) + 1;
    if (C < 2) throw DataError("train_logreg: need at least 2 classes");
    std::vector<int> seen(C, 0);
    for (int label : y) {
        if (label < 0) throw DataError("train_logreg: negative label");
        seen[static_cast<std::size_t>(label)] = 1;
    }
    for (std::size_t c = 0; c < C; ++c)
        if (!seen[c])
            throw DataError("train_logreg: class " + std::to_string(c) + " absent from y");
    if (X.rows() < C) throw DataError("train_logreg: fewer samples than classes");

    LogregProblem problem{X, y, inverse_reg, C};
    std::vector<double> theta(problem.dim(), 0.0);
    lbfgs_minimize(problem, theta, max_iters);

    ProbeModel model;
    model.inverse_reg = inverse_reg;
    model.W = Matrix(C, X.cols());
    model.b.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < X.cols(); ++j) model.W(c, j) = theta[c * X.cols() + j];
        model.b[c] = theta[C * X.cols() + c];
    }
    return model;
}

double logreg_objective(const Matrix& X, const std::vector<int>& y, double inverse_reg,
                        const ProbeModel& model, Matrix* grad_w, std::vector<double>* grad_b) {
    const std::size_t C = model.W.rows();
    LogregProblem problem{X, y, inverse_reg, C};
    std::vector<double> theta(problem.dim());
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < X.cols(); ++j) theta[c * X.cols() + j] = model.W(c, j);
        theta[C * X.cols() + c] = model.b[c];
    }
    std::vector<double> grad;
    const double value = problem.eval(theta, grad);
    if (grad_w) {
        *grad_w = Matrix(C, X.cols());
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t j = 0; j < X.cols(); ++j) (*grad_w)(c, j) = grad[c * X.cols() + j];
    }
    if (grad_b) grad_b->assign(grad.begin() + static_cast<long>(C * X.cols()), grad.end());
    return value;
}

std::vector<double> regularization_grid() {
    std::vector<double> grid(10);
    grid[0] = 1e-4;
    grid[9] = 1e4;
    for (int i = 1; i < 9; ++i) grid[i] = std::pow(10.0, -4.0 + 8.0 * i / 9.0);
    return grid;
}

std::vector<int> slide_folds(const std::vector<std::string>& slide_ids,
                             const std::vector<int>& labels, int n_folds, Rng rng) {
    if (slide_ids.size() != labels.size())
        throw DataError("slide_folds: slide_ids and labels must align");
    // Distinct slides in first-appearance order, with label purity check.
    std::vector<std::string> slides;
    std::unordered_map<std::string, std::size_t> slide_index;
    std::vector<int> slide_label;
    std::vector<bool> pure;
    for (std::size_t i = 0; i < slide_ids.size(); ++i) {
        auto it = slide_index.find(slide_ids[i]);
        if (it == slide_index.end()) {
            slide_index.emplace(slide_ids[i], slides.size());
            slides.push_back(slide_ids[i]);
            slide_label.push_back(labels[i]);
            pure.push_back(true);
        } else if (slide_label[it->second] != labels[i]) {
            pure[it->second] = false;
        }
    }
    if (static_cast<int>(slides.size()) < n_folds)
        throw DataError("slide_folds: need at least " + std::to_string(n_folds) +
                        " distinct slides, got " + std::to_string(slides.size()));

    const bool all_pure = std::all_of(pure.begin(), pure.end(), [](bool b) { return b; });
    std::vector<int> fold_of_slide(slides.size());
    if (all_pure) {
        // Stratify at the slide level: deal each label's slides round-robin,
        // continuing the fold counter across labels to balance fold sizes.
        std::map<int, std::vector<std::size_t>> by_label;
        for (std::size_t s = 0; s < slides.size(); ++s) by_label[slide_label[s]].push_back(s);
        int fold = 0;
        for (auto& [label, group] : by_label) {
            rng.shuffle(group);
            for (std::size_t s : group) {
                fold_of_slide[s] = fold;
                fold = (fold + 1) % n_folds;
            }
        }
    } else {
        std::vector<std::size_t> order(slides.size());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (std::size_t r = 0; r < order.size(); ++r)
            fold_of_slide[order[r]] = static_cast<int>(r % n_folds);
    }

    std::vector<int> folds(slide_ids.size());
    for (std::size_t i = 0; i < slide_ids.size(); ++i)
        folds[i] = fold_of_slide[slide_index[slide_ids[i]]];
    return folds;
}

double cross_validate(const Matrix& X, const std::vector<int>& y,
                      const std::vector<std::string>& slide_ids, Rng rng, int max_iters) {
    constexpr int kFolds = 5;
    const std::vector<int> folds = slide_folds(slide_ids, y, kFolds, rng);
    int n_classes = 0;
    for (int label : y) n_classes = std::max(n_classes, label + 1);

    struct FoldData {
        Matrix x_train, x_val;
        std::vector<int> y_train, y_val;
        bool usable = false;
    };
    std::vector<FoldData> fold_data(kFolds);
    for (int fold = 0; fold < kFolds; ++fold) {
        std::vector<std::size_t> tr, va;
        for (std::size_t i = 0; i < y.size(); ++i) (folds[i] == fold ? va : tr).push_back(i);
        if (tr.empty() || va.empty()) continue;
        std::vector<int> seen(static_cast<std::size_t>(n_classes), 0);
        for (std::size_t i : tr) seen[static_cast<std::size_t>(y[i])] = 1;
        if (std::find(seen.begin(), seen.end(), 0) != seen.end()) continue;
        FoldData& fd = fold_data[static_cast<std::size_t>(fold)];
        fd.x_train = Matrix(tr.size(), X.cols());
        fd.x_val = Matrix(va.size(), X.cols());
        fd.y_train.reserve(tr.size());
        fd.y_val.reserve(va.size());
        for (std::size_t r = 0; r < tr.size(); ++r) {
            for (std::size_t j = 0; j < X.cols(); ++j) fd.x_train(r, j) = X(tr[r], j);
            fd.y_train.push_back(y[tr[r]]);
        }
        for (std::size_t r = 0; r < va.size(); ++r) {
            for (std::size_t j = 0; j < X.cols(); ++j) fd.x_val(r, j) = X(va[r], j);
            fd.y_val.push_back(y[va[r]]);
        }
        fd.usable = true;
    }

    const std::vector<double> grid = regularization_grid();
    double best_score = -std::numeric_limits<double>::infinity();
    double best_c = grid[0];
    for (double c : grid) {
        double sum = 0.0;
        int defined = 0;
        for (const FoldData& fd : fold_data) {
            if (!fd.usable) continue;
            const ProbeModel model = train_logreg(fd.x_train, fd.y_train, c, max_iters);
            const auto auc = macro_auc_present(model.predict_proba(fd.x_val), fd.y_val, n_classes);
            if (auc) {
                sum += *auc;
                ++defined;
            }
        }
        if (defined == 0) continue;
        const double score = sum / defined;
        if (score > best_score) { // strict: ties keep the smaller value
            best_score = score;
            best_c = c;
        }
    }
    if (!std::isfinite(best_score))
        throw DataError("cross_validate: no usable folds (check slide/class distribution)");
    return best_c;
}

double auc_binary(std::span<const double> scores, std::span<const int> binary_labels) {
    if (scores.size() != binary_labels.size() || scores.empty())
        throw DataError("auc_binary: bad input sizes");
    std::size_t n_pos = 0;
    for (int l : binary_labels) n_pos += l != 0 ? 1 : 0;
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw DataError("auc_binary: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks for ties, 1-based
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t)
            if (binary_labels[order[t]] != 0) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double auc_macro(const Matrix& probs, const std::vector<int>& labels) {
    if (probs.rows() != labels.size() || labels.empty())
        throw DataError("auc_macro: bad input sizes");
    const int n_classes = static_cast<int>(probs.cols());
    std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
    for (int l : labels) {
        if (l < 0 || l >= n_classes) throw DataError("auc_macro: label out of range");
        ++counts[static_cast<std::size_t>(l)];
    }
    for (int c = 0; c < n_classes; ++c)
        if (counts[static_cast<std::size_t>(c)] == 0)
            throw DataError("auc_macro: class " + std::to_string(c) + " missing from labels");

    double sum = 0.0;
    std::vector<double> scores(labels.size());
    std::vector<int> binary(labels.size());
    for (int c = 0; c < n_classes; ++c) {
        for (std::size_t r = 0; r < labels.size(); ++r) {
            scores[r] = probs(r, static_cast<std::size_t>(c));
            binary[r] = labels[r] == c ? 1 : 0;
        }
        sum += auc_binary(scores, binary);
    }
    return sum / n_classes;
}

std::pair<Magnification, double> best_over_magnifications(
    const std::map<Magnification, double>& task_aucs) {
    for (Magnification m : kProbeMags)
        if (!task_aucs.count(m))
            throw DataError(std::string("best_over_magnifications: missing ") + to_string(m));
    Magnification best_mag = Magnification::x5;
    double best = -1.0;
    for (Magnification m : kProbeMags) { // ascending order; >= sends ties to higher mag
        const double auc = task_aucs.at(m);
        if (auc >= best) {
            best = auc;
            best_mag = m;
        }
    }
    return {best_mag, best};
}

BenchmarkSpec BenchmarkSpec::default_weights() {
    BenchmarkSpec spec;
    spec.name = "patch-linear-probe-default";
    const std::vector<std::pair<std::string, double>> tasks = {
        {"Breast Inv Car", 0.33}, {"Breast NP", 0.33},  {"Breast TF", 0.33},
        {"CAMELYON16", 1.0},      {"Lung AD", 1.0},     {"CIN", 1.0},
        {"CRC", 1.0},             {"Gleason NCB", 0.5}, {"Gleason RP", 0.5},
        {"Tissue type", 0.5},     {"TCGA study type", 0.5},
    };
    for (const auto& [name, weight] : tasks) {
        BenchmarkTask t;
        t.name = name;
        t.weight = weight;
        spec.tasks.push_back(std::move(t));
    }
    return spec;
}

std::string BenchmarkSpec::to_json() const {
    nlohmann::json j;
    j["format"] = "benchmark_spec.v1";
    j["name"] = name;
    nlohmann::json tasks_json = nlohmann::json::array();
    for (const auto& t : tasks) {
        nlohmann::json tj;
        tj["name"] = t.name;
        tj["classes"] = t.classes;
        tj["weight"] = t.weight;
        tj["split_manifests"] = t.split_manifests;
        tasks_json.push_back(tj);
    }
    j["tasks"] = tasks_json;
    return j.dump(2);
}

BenchmarkSpec BenchmarkSpec::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("benchmark spec: invalid JSON: ") + e.what());
    }
    if (j.value("format", "") != "benchmark_spec.v1")
        throw DataError("benchmark spec: missing or unknown 'format'");
    BenchmarkSpec spec;
    spec.name = j.value("name", "");
    for (const auto& tj : j.at("tasks")) {
        BenchmarkTask t;
        t.name = tj.at("name").get<std::string>();
        t.weight = tj.at("weight").get<double>();
        if (t.weight <= 0.0)
            throw DataError("benchmark spec: task '" + t.name + "' has non-positive weight");
        if (tj.contains("classes")) t.classes = tj.at("classes").get<std::vector<std::string>>();
        if (tj.contains("split_manifests"))
            t.split_manifests = tj.at("split_manifests").get<std::map<std::string, std::string>>();
        spec.tasks.push_back(std::move(t));
    }
    if (spec.tasks.empty()) throw DataError("benchmark spec: no tasks");
    return spec;
}

BenchmarkSpec BenchmarkSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("benchmark spec: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void BenchmarkSpec::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("benchmark spec: cannot write '" + path + "'");
    out << to_json() << "\n";
}

double composite_metric(const std::vector<double>& best_aucs, const BenchmarkSpec& spec) {
    if (best_aucs.size() != spec.tasks.size())
        throw DataError("composite_metric: got " + std::to_string(best_aucs.size()) +
                        " AUCs for " + std::to_string(spec.tasks.size()) + " tasks");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < best_aucs.size(); ++i) {
        num += spec.tasks[i].weight * best_aucs[i];
        den += spec.tasks[i].weight;
    }
    return num / den;
}

BootstrapCi bootstrap_ci(std::size_t n_groups,
                         const std::function<std::optional<double>(const std::vector<std::size_t>&)>& metric_fn,
                         int replicates, Rng rng, unsigned threads) {
    if (n_groups < 2) throw DataError("bootstrap_ci: need at least 2 groups");
    if (replicates < 1) throw DataError("bootstrap_ci: replicates must be >= 1");

    std::vector<std::optional<double>> values(static_cast<std::size_t>(replicates));
    parallel_for(static_cast<std::size_t>(replicates), threads, [&](std::size_t r) {
        Rng rep_rng = rng.derive(static_cast<std::uint64_t>(r));
        std::vector<std::size_t> chosen(n_groups);
        for (int attempt = 0; attempt <= 10; ++attempt) {
            for (auto& g : chosen) g = static_cast<std::size_t>(rep_rng.uniform_int(n_groups));
            if (auto v = metric_fn(chosen)) {
                values[r] = v;
                return;
            }
        }
        values[r] = std::nullopt; // skipped after 10 redraws
    });

    BootstrapCi ci;
    std::vector<double> defined;
    defined.reserve(values.size());
    for (const auto& v : values) {
        if (v)
            defined.push_back(*v);
        else
            ++ci.skipped;
    }
    if (defined.empty())
        throw DataError("bootstrap_ci: every replicate was degenerate");
    std::sort(defined.begin(), defined.end());
    ci.lo = type1_quantile(defined, 0.025);
    ci.hi = type1_quantile(defined, 0.975);
    return ci;
}

// ---------------------------------------------------------------------------
// run_linear_probe
// ---------------------------------------------------------------------------

namespace {

struct SplitRows {
    std::vector<ManifestRow> rows;
};

struct EvalArtifacts {
    Matrix probs;
    std::vector<int> labels;
    std::vector<std::string> slide_ids;
    double auc = 0.0;
};

struct UnitOutput {
    double auc_selection = 0.0;
    double inverse_reg = 1.0;
    EvalArtifacts eval;
};

ProbeDataset build_dataset(const std::vector<ManifestRow>& rows,
                           const std::unordered_map<std::string, const EmbeddingRecord*>& index,
                           const std::vector<std::string>& classes, Magnification mag,
                           const FeatureMode& mode, const std::string& context) {
    std::unordered_map<std::string, int> class_index;
    for (std::size_t c = 0; c < classes.size(); ++c)
        class_index[classes[c]] = static_cast<int>(c);

    std::vector<const ManifestRow*> selected;
    for (const auto& row : rows)
        if (row.magnification == mag) selected.push_back(&row);
    if (selected.empty())
        throw DataError(context + ": no manifest rows at " + to_string(mag));

    ProbeDataset ds;
    ds.magnification = mag;
    ds.n_classes = static_cast<int>(classes.size());
    std::vector<std::vector<double>> feats;
    feats.reserve(selected.size());
    for (const ManifestRow* row : selected) {
        auto rec = index.find(row->patch_id);
        if (rec == index.end())
            throw DataError(context + ": patch '" + row->patch_id + "' missing from the " +
                            to_string(mag) + " store");
        auto cls = class_index.find(row->label);
        if (cls == class_index.end())
            throw DataError(context + ": label '" + row->label + "' not in the task's class list");
        feats.push_back(compose_feature(*rec->second, mode));
        ds.y.push_back(cls->second);
        ds.slide_ids.push_back(row->slide_id);
    }
    ds.X = Matrix::from_rows(feats);
    ds.validate(context.c_str());
    return ds;
}

ProbeDataset sample_dataset(const ProbeDataset& ds, std::size_t count, Rng rng) {
    if (count >= ds.size()) return ds;
    auto picks = rng.sample_without_replacement(ds.size(), count);
    std::sort(picks.begin(), picks.end());
    ProbeDataset out;
    out.magnification = ds.magnification;
    out.n_classes = ds.n_classes;
    out.X = Matrix(picks.size(), ds.X.cols());
    out.y.reserve(picks.size());
    out.slide_ids.reserve(picks.size());
    for (std::size_t r = 0; r < picks.size(); ++r) {
        for (std::size_t j = 0; j < ds.X.cols(); ++j) out.X(r, j) = ds.X(picks[r], j);
        out.y.push_back(ds.y[picks[r]]);
        out.slide_ids.push_back(ds.slide_ids[picks[r]]);
    }
    return out;
}

ProbeDataset concat_datasets(const ProbeDataset& a, const ProbeDataset& b) {
    ProbeDataset out;
    out.magnification = a.magnification;
    out.n_classes = std::max(a.n_classes, b.n_classes);
    out.X = Matrix(a.size() + b.size(), a.X.cols());
    out.y = a.y;
    out.slide_ids = a.slide_ids;
    for (std::size_t r = 0; r < a.size(); ++r)
        for (std::size_t j = 0; j < a.X.cols(); ++j) out.X(r, j) = a.X(r, j);
    for (std::size_t r = 0; r < b.size(); ++r) {
        for (std::size_t j = 0; j < b.X.cols(); ++j) out.X(a.size() + r, j) = b.X(r, j);
        out.y.push_back(b.y[r]);
        out.slide_ids.push_back(b.slide_ids[r]);
    }
    return out;
}

nlohmann::json mag_map_to_json(const std::map<Magnification, double>& m) {
    nlohmann::json j;
    for (const auto& [mag, auc] : m) j[to_string(mag)] = auc;
    return j;
}

std::map<Magnification, double> mag_map_from_json(const nlohmann::json& j) {
    std::map<Magnification, double> m;
    for (auto it = j.begin(); it != j.end(); ++it)
        m[magnification_from_string(it.key())] = it.value().get<double>();
    return m;
}

} // namespace

ProbeResult run_linear_probe(const BenchmarkSpec& spec,
                             const std::map<Magnification, std::string>& store_paths,
                             const ProbeRunConfig& cfg, std::uint64_t seed) {
    std::map<Magnification, std::vector<EmbeddingRecord>> stores;
    for (const auto& [mag, path] : store_paths) stores[mag] = store_read(path);
    return run_linear_probe(spec, stores, cfg, seed);
}

ProbeResult run_linear_probe(const BenchmarkSpec& spec,
                             const std::map<Magnification, std::vector<EmbeddingRecord>>& stores,
                             const ProbeRunConfig& cfg, std::uint64_t seed) {
    if (cfg.eval_split != "tune" && cfg.eval_split != "test")
        throw DataError("run_linear_probe: eval_split must be 'tune' or 'test'");
    const bool test_mode = cfg.eval_split == "test";

    std::map<Magnification, std::unordered_map<std::string, const EmbeddingRecord*>> index;
    for (const auto& [mag, records] : stores) {
        auto& idx = index[mag];
        idx.reserve(records.size());
        for (const auto& r : records) idx.emplace(r.patch_id, &r);
    }
    for (Magnification m : kProbeMags)
        if (!index.count(m))
            throw DataError(std::string("run_linear_probe: no store for ") + to_string(m));

    // Pre-read manifests (serial, cheap) so units only do numeric work.
    std::vector<std::map<std::string, SplitRows>> manifests(spec.tasks.size());
    for (std::size_t ti = 0; ti < spec.tasks.size(); ++ti) {
        const auto& task = spec.tasks[ti];
        if (task.classes.size() < 2)
            throw DataError("run_linear_probe: task '" + task.name + "' needs a class list");
        for (const char* split : {"train", "tune", "test"}) {
            if (!test_mode && std::string(split) == "test") continue;
            auto it = task.split_manifests.find(split);
            if (it == task.split_manifests.end())
                throw DataError("run_linear_probe: task '" + task.name + "' missing split '" +
                                std::string(split) + "'");
            manifests[ti][split].rows = read_manifest(it->second);
        }
    }

    const Rng master(seed);
    const std::size_t n_units = spec.tasks.size() * 3;
    std::vector<UnitOutput> units(n_units);

    parallel_for(n_units, cfg.threads, [&](std::size_t u) {
        const std::size_t ti = u / 3;
        const Magnification mag = kProbeMags[u % 3];
        const auto& task = spec.tasks[ti];
        const std::string context = "probe[" + task.name + "@" + to_string(mag) + "]";
        Rng unit_rng = master.derive("probe-unit").derive(ti * 8 + (u % 3));

        const ProbeDataset train_full = build_dataset(manifests[ti].at("train").rows, index.at(mag),
                                                      task.classes, mag, cfg.mode, context);
        const ProbeDataset tune_full = build_dataset(manifests[ti].at("tune").rows, index.at(mag),
                                                     task.classes, mag, cfg.mode, context);

        ProbeDataset fit = sample_dataset(train_full, static_cast<std::size_t>(cfg.train_count),
                                          unit_rng.derive(1));
        if (test_mode) {
            const ProbeDataset tune_fit = sample_dataset(
                tune_full, static_cast<std::size_t>(cfg.tune_count), unit_rng.derive(2));
            fit = concat_datasets(fit, tune_fit);
        }
        fit.n_classes = static_cast<int>(task.classes.size());
        fit.validate(context.c_str());

        UnitOutput& out = units[u];
        out.inverse_reg = cross_validate(fit.X, fit.y, fit.slide_ids, unit_rng.derive(3),
                                         cfg.lbfgs_iters);
        const ProbeModel model = train_logreg(fit.X, fit.y, out.inverse_reg, cfg.lbfgs_iters);

        // Magnification selection always scores the tune split.
        const ProbeDataset select_data = sample_dataset(
            tune_full, static_cast<std::size_t>(cfg.eval_count), unit_rng.derive(4));
        out.auc_selection = auc_macro(model.predict_proba(select_data.X), select_data.y);

        if (test_mode) {
            const ProbeDataset test_full = build_dataset(manifests[ti].at("test").rows,
                                                         index.at(mag), task.classes, mag, cfg.mode,
                                                         context);
            const ProbeDataset eval_data = sample_dataset(
                test_full, static_cast<std::size_t>(cfg.eval_count), unit_rng.derive(5));
            out.eval.probs = model.predict_proba(eval_data.X);
            out.eval.labels = eval_data.y;
            out.eval.slide_ids = eval_data.slide_ids;
        } else {
            out.eval.probs = model.predict_proba(select_data.X);
            out.eval.labels = select_data.y;
            out.eval.slide_ids = select_data.slide_ids;
        }
        out.eval.auc = auc_macro(out.eval.probs, out.eval.labels);
    });

    ProbeResult result;
    result.benchmark = spec.name;
    result.feature_mode = cfg.mode.name();
    result.eval_split = cfg.eval_split;
    result.seed = seed;
    result.bootstrap_replicates = cfg.bootstrap_replicates;

    std::vector<double> selected_aucs;
    std::vector<const EvalArtifacts*> selected_eval(spec.tasks.size());
    for (std::size_t ti = 0; ti < spec.tasks.size(); ++ti) {
        TaskResult tr;
        tr.name = spec.tasks[ti].name;
        std::map<Magnification, double> selection_aucs;
        for (int m = 0; m < 3; ++m) {
            const UnitOutput& u = units[ti * 3 + m];
            tr.auc_selection[kProbeMags[m]] = u.auc_selection;
            tr.auc_eval[kProbeMags[m]] = u.eval.auc;
            selection_aucs[kProbeMags[m]] = u.auc_selection;
        }
        const auto [mag, sel_auc] = best_over_magnifications(selection_aucs);
        tr.selected_magnification = mag;
        const UnitOutput& chosen = units[ti * 3 + static_cast<std::size_t>(mag)];
        tr.selected_auc = chosen.eval.auc;
        tr.selected_inverse_reg = chosen.inverse_reg;
        tr.best_eval_auc = std::max({units[ti * 3].eval.auc, units[ti * 3 + 1].eval.auc,
                                     units[ti * 3 + 2].eval.auc});
        selected_eval[ti] = &chosen.eval;
        selected_aucs.push_back(tr.selected_auc);
        result.tasks.push_back(std::move(tr));
    }
    result.composite = composite_metric(selected_aucs, spec);

    // Composite bootstrap: each replicate resamples every task's eval
    // slides independently and recombines the weighted metric.
    struct TaskGroups {
        std::vector<std::vector<std::size_t>> patches_by_slide;
    };
    std::vector<TaskGroups> groups(spec.tasks.size());
    for (std::size_t ti = 0; ti < spec.tasks.size(); ++ti) {
        std::unordered_map<std::string, std::size_t> slide_of;
        for (std::size_t i = 0; i < selected_eval[ti]->slide_ids.size(); ++i) {
            const auto& sid = selected_eval[ti]->slide_ids[i];
            auto it = slide_of.find(sid);
            if (it == slide_of.end()) {
                it = slide_of.emplace(sid, groups[ti].patches_by_slide.size()).first;
                groups[ti].patches_by_slide.emplace_back();
            }
            groups[ti].patches_by_slide[it->second].push_back(i);
        }
        if (groups[ti].patches_by_slide.size() < 2)
            throw DataError("run_linear_probe: task '" + spec.tasks[ti].name +
                            "' has fewer than 2 eval slides; bootstrap undefined");
    }

    const Rng boot_rng = master.derive("probe-bootstrap");
    std::vector<std::optional<double>> replicate_values(
        static_cast<std::size_t>(cfg.bootstrap_replicates));
    parallel_for(static_cast<std::size_t>(cfg.bootstrap_replicates), cfg.threads,
                 [&](std::size_t r) {
        Rng rep = boot_rng.derive(static_cast<std::uint64_t>(r));
        for (int attempt = 0; attempt <= 10; ++attempt) {
            std::vector<double> task_aucs;
            bool defined = true;
            for (std::size_t ti = 0; ti < spec.tasks.size(); ++ti) {
                const auto& g = groups[ti].patches_by_slide;
                std::vector<int> labels;
                std::vector<std::size_t> rows;
                for (std::size_t s = 0; s < g.size(); ++s) {
                    const std::size_t pick = static_cast<std::size_t>(rep.uniform_int(g.size()));
                    for (std::size_t i : g[pick]) {
                        rows.push_back(i);
                        labels.push_back(selected_eval[ti]->labels[i]);
                    }
                }
                Matrix probs(rows.size(), selected_eval[ti]->probs.cols());
                for (std::size_t rr = 0; rr < rows.size(); ++rr)
                    for (std::size_t j = 0; j < probs.cols(); ++j)
                        probs(rr, j) = selected_eval[ti]->probs(rows[rr], j);
                const auto auc = macro_auc_present(probs, labels,
                                                   static_cast<int>(probs.cols()));
                if (!auc) {
                    defined = false;
                    break;
                }
                task_aucs.push_back(*auc);
            }
            if (defined) {
                replicate_values[r] = composite_metric(task_aucs, spec);
                return;
            }
        }
        replicate_values[r] = std::nullopt;
    });

    std::vector<double> defined;
    for (const auto& v : replicate_values) {
        if (v)
            defined.push_back(*v);
        else
            ++result.bootstrap_skipped;
    }
    if (defined.empty()) throw DataError("run_linear_probe: all bootstrap replicates degenerate");
    std::sort(defined.begin(), defined.end());
    result.ci_lo = type1_quantile(defined, 0.025);
    result.ci_hi = type1_quantile(defined, 0.975);
    return result;
}

std::string ProbeResult::to_json() const {
    nlohmann::json j;
    j["format"] = "probe_result.v1";
    j["benchmark"] = benchmark;
    j["feature_mode"] = feature_mode;
    j["eval_split"] = eval_split;
    j["seed"] = seed;
    j["composite"] = composite;
    j["ci"] = {ci_lo, ci_hi};
    j["bootstrap_replicates"] = bootstrap_replicates;
    j["bootstrap_skipped"] = bootstrap_skipped;
    nlohmann::json tasks_json = nlohmann::json::array();
    for (const auto& t : tasks) {
        nlohmann::json tj;
        tj["name"] = t.name;
        tj["auc_eval"] = mag_map_to_json(t.auc_eval);
        tj["auc_selection"] = mag_map_to_json(t.auc_selection);
        tj["selected_magnification"] = to_string(t.selected_magnification);
        tj["selected_auc"] = t.selected_auc;
        tj["best_eval_auc"] = t.best_eval_auc;
        tj["selected_inverse_reg"] = t.selected_inverse_reg;
        tasks_json.push_back(tj);
    }
    j["tasks"] = tasks_json;
    return j.dump(2);
}

ProbeResult ProbeResult::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("probe result: invalid JSON: ") + e.what());
    }
    if (j.value("format", "") != "probe_result.v1")
        throw DataError("probe result: missing or unknown 'format'");
    ProbeResult r;
    r.benchmark = j.value("benchmark", "");
    r.feature_mode = j.value("feature_mode", "");
    r.eval_split = j.value("eval_split", "");
    r.seed = j.at("seed").get<std::uint64_t>();
    r.composite = j.at("composite").get<double>();
    r.ci_lo = j.at("ci").at(0).get<double>();
    r.ci_hi = j.at("ci").at(1).get<double>();
    r.bootstrap_replicates = j.value("bootstrap_replicates", 0);
    r.bootstrap_skipped = j.value("bootstrap_skipped", 0);
    for (const auto& tj : j.at("tasks")) {
        TaskResult t;
        t.name = tj.at("name").get<std::string>();
        t.auc_eval = mag_map_from_json(tj.at("auc_eval"));
        t.auc_selection = mag_map_from_json(tj.at("auc_selection"));
        t.selected_magnification =
            magnification_from_string(tj.at("selected_magnification").get<std::string>());
        t.selected_auc = tj.at("selected_auc").get<double>();
        t.best_eval_auc = tj.at("best_eval_auc").get<double>();
        t.selected_inverse_reg = tj.value("selected_inverse_reg", 1.0);
        r.tasks.push_back(std::move(t));
    }
    return r;
}

std::string ProbeResult::render_table() const {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    std::size_t name_w = 4;
    for (const auto& t : tasks) name_w = std::max(name_w, t.name.size());
    out << "Linear probe (" << feature_mode << ", eval split: " << eval_split << ")\n";
    out << std::string(name_w, ' ') << "      5x     10x     20x  selected     AUC\n";
    for (const auto& t : tasks) {
        out << t.name << std::string(name_w - t.name.size(), ' ');
        for (Magnification m : {Magnification::x5, Magnification::x10, Magnification::x20})
            out << "  " << t.auc_eval.at(m);
        const std::string mag = to_string(t.selected_magnification);
        out << std::string(10 - mag.size(), ' ') << mag << "  " << t.selected_auc << "\n";
    }
    out << "\nComposite (weighted): " << composite << "  [" << ci_lo << ", " << ci_hi << "]  ("
        << bootstrap_replicates << " replicates, " << bootstrap_skipped << " skipped)\n";
    return out.str();
}

} // namespace pathssl

#include "pathssl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pathssl/error.hpp"

namespace pathssl {

namespace {

constexpr double kLogFloor = 1e-30;

double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

Matrix normalize_rows_obj(const Matrix& m, const char* where) {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double norm = std::sqrt(dot(m.row(i), m.row(i)));
        if (norm <= 0.0 || !std::isfinite(norm))
            throw DataError(std::string(where) + ": zero-norm embedding row " + std::to_string(i));
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / norm;
    }
    return out;
}

// d loss / d raw_row from d loss / d normalized_row:
// grad_z = (grad_u - (grad_u . u) u) / ||z||
void chain_through_normalization(const Matrix& raw, const Matrix& unit, const Matrix& grad_unit,
                                 Matrix& grad_raw) {
    const std::size_t d = raw.cols();
    grad_raw = Matrix(raw.rows(), d);
    for (std::size_t i = 0; i < raw.rows(); ++i) {
        const double norm = std::sqrt(dot(raw.row(i), raw.row(i)));
        const double proj = dot(grad_unit.row(i), unit.row(i));
        for (std::size_t j = 0; j < d; ++j)
            grad_raw(i, j) = (grad_unit(i, j) - proj * unit(i, j)) / norm;
    }
}

struct PairBatch {
    Matrix unit;                 // 2B x d normalized embeddings, a-rows then b-rows
    std::size_t batch = 0;
    std::size_t pair_of(std::size_t t) const { return t < batch ? t + batch : t - batch; }
};

PairBatch prepare_pairs(const Matrix& z_a, const Matrix& z_b, const char* where) {
    if (z_a.rows() != z_b.rows() || z_a.cols() != z_b.cols())
        throw DataError(std::string(where) + ": z_a and z_b must have identical shapes");
    if (z_a.rows() < 2)
        throw DataError(std::string(where) + ": batch must be >= 2 (need negatives)");
    PairBatch pb;
    pb.batch = z_a.rows();
    pb.unit = Matrix(2 * pb.batch, z_a.cols());
    const Matrix ua = normalize_rows_obj(z_a, where);
    const Matrix ub = normalize_rows_obj(z_b, where);
    for (std::size_t i = 0; i < pb.batch; ++i)
        for (std::size_t j = 0; j < z_a.cols(); ++j) {
            pb.unit(i, j) = ua(i, j);
            pb.unit(pb.batch + i, j) = ub(i, j);
        }
    return pb;
}

} // namespace

void LossConfig::validate() const {
    if (ntxent_temperature <= 0.0 || teacher_temperature <= 0.0 || student_temperature <= 0.0)
        throw DataError("LossConfig: temperatures must be > 0");
    if (memax_weight < 0.0) throw DataError("LossConfig: memax_weight must be >= 0");
    if (sinkhorn_iters < 0) throw DataError("LossConfig: sinkhorn_iters must be >= 0");
    if (beta_max < 0.0) throw DataError("LossConfig: beta_max must be >= 0");
    if (hybrid_weight < 0.0) throw DataError("LossConfig: hybrid_weight must be >= 0");
}

void Prototypes::validate() const {
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        const double norm = std::sqrt(dot(rows.row(i), rows.row(i)));
        if (std::fabs(norm - 1.0) > 1e-9)
            throw DataError("Prototypes: row " + std::to_string(i) + " has norm " +
                            std::to_string(norm) + " (must be unit)");
    }
}

Prototypes Prototypes::random(std::size_t k, std::size_t d, Rng rng) {
    Prototypes p;
    p.rows = Matrix(k, d);
    for (std::size_t i = 0; i < k; ++i) {
        double norm = 0.0;
        while (norm <= 1e-12) {
            for (std::size_t j = 0; j < d; ++j) p.rows(i, j) = rng.normal();
            norm = std::sqrt(dot(p.rows.row(i), p.rows.row(i)));
        }
        for (std::size_t j = 0; j < d; ++j) p.rows(i, j) /= norm;
    }
    return p;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = rng.uniform(-1.0, 1.0);
    return m;
}

ContrastiveResult nt_xent(const Matrix& z_a, const Matrix& z_b, double temperature,
                          bool with_grad) {
    if (temperature <= 0.0) throw DataError("nt_xent: temperature must be > 0");
    const PairBatch pb = prepare_pairs(z_a, z_b, "nt_xent");
    const std::size_t n = 2 * pb.batch;
    const std::size_t d = z_a.cols();

    // cosine similarity matrix
    Matrix sim(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sim(i, j) = dot(pb.unit.row(i), pb.unit.row(j));

    ContrastiveResult res;
    res.per_anchor.resize(n);
    Matrix grad_unit(with_grad ? n : 0, with_grad ? d : 0);

    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t pos = pb.pair_of(t);
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c)
            if (c != t) max_logit = std::max(max_logit, sim(t, c) / temperature);
        double denom = 0.0;
        for (std::size_t c = 0; c < n; ++c)
            if (c != t) denom += std::exp(sim(t, c) / temperature - max_logit);
        const double log_p_pos = sim(t, pos) / temperature - max_logit - std::log(denom);
        res.per_anchor[t] = -log_p_pos;

        if (with_grad) {
            for (std::size_t c = 0; c < n; ++c) {
                if (c == t) continue;
                const double p = std::exp(sim(t, c) / temperature - max_logit) / denom;
                const double w = (p - (c == pos ? 1.0 : 0.0)) / (temperature * static_cast<double>(n));
                for (std::size_t j = 0; j < d; ++j) {
                    grad_unit(t, j) += w * pb.unit(c, j);
                    grad_unit(c, j) += w * pb.unit(t, j);
                }
            }
        }
    }
    double total = 0.0;
    for (double l : res.per_anchor) total += l;
    res.loss = total / static_cast<double>(n);

    if (with_grad) {
        Matrix grad_all;
        chain_through_normalization(
            [&] {
                Matrix raw(n, d);
                for (std::size_t i = 0; i < pb.batch; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                        raw(i, j) = z_a(i, j);
                        raw(pb.batch + i, j) = z_b(i, j);
                    }
                return raw;
            }(),
            pb.unit, grad_unit, grad_all);
        res.grad_a = Matrix(pb.batch, d);
        res.grad_b = Matrix(pb.batch, d);
        for (std::size_t i = 0; i < pb.batch; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                res.grad_a(i, j) = grad_all(i, j);
                res.grad_b(i, j) = grad_all(pb.batch + i, j);
            }
    }
    return res;
}

ContrastiveResult reweighted_nt_xent(const Matrix& z_a, const Matrix& z_b, double temperature,
                                     double beta, bool with_grad) {
    if (temperature <= 0.0) throw DataError("reweighted_nt_xent: temperature must be > 0");
    if (beta < 0.0) throw DataError("reweighted_nt_xent: beta must be >= 0");
    const PairBatch pb = prepare_pairs(z_a, z_b, "reweighted_nt_xent");
    const std::size_t n = 2 * pb.batch;
    const std::size_t d = z_a.cols();
    const double tau = temperature;

    Matrix sim(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sim(i, j) = dot(pb.unit.row(i), pb.unit.row(j));

    ContrastiveResult res;
    res.per_anchor.resize(n);
    Matrix grad_unit(with_grad ? n : 0, with_grad ? d : 0);

    std::vector<std::size_t> negatives;
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t pos = pb.pair_of(t);
        negatives.clear();
        for (std::size_t c = 0; c < n; ++c)
            if (c != t && c != pos) negatives.push_back(c);
        const double n_neg = static_cast<double>(negatives.size());

        // shift both exponentials for stability; weights are shift-invariant
        double max_logit = sim(t, pos) / tau;
        double max_blogit = -std::numeric_limits<double>::infinity();
        for (std::size_t c : negatives) {
            max_logit = std::max(max_logit, sim(t, c) / tau);
            max_blogit = std::max(max_blogit, beta * sim(t, c) / tau);
        }

        // importance weights w_k = E_k / mean(E)
        double mean_e = 0.0;
        for (std::size_t c : negatives) mean_e += std::exp(beta * sim(t, c) / tau - max_blogit);
        mean_e /= n_neg;

        const double p_shifted = std::exp(sim(t, pos) / tau - max_logit);
        double t_shifted = 0.0; // weighted negative mass, shifted
        for (std::size_t c : negatives) {
            const double w = std::exp(beta * sim(t, c) / tau - max_blogit) / mean_e;
            t_shifted += w * std::exp(sim(t, c) / tau - max_logit);
        }
        const double denom_shifted = p_shifted + t_shifted;
        res.per_anchor[t] = -(sim(t, pos) / tau) + max_logit + std::log(denom_shifted);

        if (with_grad) {
            const double inv_scale = 1.0 / static_cast<double>(n);
            // d loss / d s_pos
            const double g_pos = (p_shifted / denom_shifted - 1.0) / tau * inv_scale;
            for (std::size_t j = 0; j < d; ++j) {
                grad_unit(t, j) += g_pos * pb.unit(pos, j);
                grad_unit(pos, j) += g_pos * pb.unit(t, j);
            }
            // d loss / d s_k for negatives; T is the weighted negative mass
            for (std::size_t c : negatives) {
                const double w = std::exp(beta * sim(t, c) / tau - max_blogit) / mean_e;
                const double e_shift = std::exp(sim(t, c) / tau - max_logit);
                const double dT = w * e_shift * (1.0 + beta) / tau -
                                  (beta / tau) * (w / n_neg) * t_shifted;
                const double g = dT / denom_shifted * inv_scale;
                for (std::size_t j = 0; j < d; ++j) {
                    grad_unit(t, j) += g * pb.unit(c, j);
                    grad_unit(c, j) += g * pb.unit(t, j);
                }
            }
        }
    }
    double total = 0.0;
    for (double l : res.per_anchor) total += l;
    res.loss = total / static_cast<double>(n);

    if (with_grad) {
        Matrix raw(n, d);
        for (std::size_t i = 0; i < pb.batch; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                raw(i, j) = z_a(i, j);
                raw(pb.batch + i, j) = z_b(i, j);
            }
        Matrix grad_all;
        chain_through_normalization(raw, pb.unit, grad_unit, grad_all);
        res.grad_a = Matrix(pb.batch, d);
        res.grad_b = Matrix(pb.batch, d);
        for (std::size_t i = 0; i < pb.batch; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                res.grad_a(i, j) = grad_all(i, j);
                res.grad_b(i, j) = grad_all(pb.batch + i, j);
            }
    }
    return res;
}

double beta_ramp(long step, long total_steps, double beta_max) {
    if (total_steps < 1) throw DataError("beta_ramp: total_steps must be >= 1");
    if (step < 0 || step > total_steps)
        throw DataError("beta_ramp: step must be in [0, total_steps]");
    return beta_max * static_cast<double>(step) / static_cast<double>(total_steps);
}

Matrix sinkhorn(const Matrix& scores, int iters) {
    if (iters < 0) throw DataError("sinkhorn: iters must be >= 0");
    const std::size_t b = scores.rows();
    const std::size_t k = scores.cols();
    if (b == 0 || k == 0) throw DataError("sinkhorn: empty matrix");
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (!(scores(i, j) > 0.0))
                throw DataError("sinkhorn: entries must be strictly positive");

    Matrix m = scores;
    auto normalize_rows_to_one = [&] {
        for (std::size_t i = 0; i < b; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += m(i, j);
            for (std::size_t j = 0; j < k; ++j) m(i, j) /= s;
        }
    };
    const double col_target = static_cast<double>(b) / static_cast<double>(k);
    for (int it = 0; it < iters; ++it) {
        normalize_rows_to_one();
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < b; ++i) s += m(i, j);
            const double scale = col_target / s;
            for (std::size_t i = 0; i < b; ++i) m(i, j) *= scale;
        }
    }
    normalize_rows_to_one();
    return m;
}

MsnResult msn_loss(const std::vector<Matrix>& student_views, const Matrix& teacher_view,
                   const Prototypes& prototypes, const LossConfig& cfg, bool with_grad) {
    cfg.validate();
    prototypes.validate();
    if (student_views.empty()) throw DataError("msn_loss: need at least one student view");
    const std::size_t b = teacher_view.rows();
    const std::size_t d = teacher_view.cols();
    const std::size_t k = prototypes.count();
    if (prototypes.dim() != d)
        throw DataError("msn_loss: prototype dim " + std::to_string(prototypes.dim()) +
                        " != embedding dim " + std::to_string(d));
    for (const Matrix& v : student_views)
        if (v.rows() != b || v.cols() != d)
            throw DataError("msn_loss: student view shape mismatch");

    const std::size_t n_views = student_views.size();
    const double denom_rows = static_cast<double>(n_views * b);

    // Teacher targets: sinkhorn over exp(v.q / tau_t). Row-wise max
    // subtraction before exp cancels in the first row normalization.
    Matrix targets(b, k);
    {
        const Matrix v = normalize_rows_obj(teacher_view, "msn_loss(teacher)");
        for (std::size_t i = 0; i < b; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            std::vector<double> logits(k);
            for (std::size_t j = 0; j < k; ++j) {
                logits[j] = dot(v.row(i), prototypes.rows.row(j)) / cfg.teacher_temperature;
                mx = std::max(mx, logits[j]);
            }
            for (std::size_t j = 0; j < k; ++j) targets(i, j) = std::exp(logits[j] - mx);
        }
        targets = sinkhorn(targets, cfg.sinkhorn_iters);
    }

    MsnResult res;
    std::vector<Matrix> predictions(n_views);
    std::vector<Matrix> units(n_views);
    std::vector<double> mean_prediction(k, 0.0);

    for (std::size_t m = 0; m < n_views; ++m) {
        units[m] = normalize_rows_obj(student_views[m], "msn_loss(student)");
        predictions[m] = Matrix(b, k);
        for (std::size_t i = 0; i < b; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            std::vector<double> logits(k);
            for (std::size_t j = 0; j < k; ++j) {
                logits[j] = dot(units[m].row(i), prototypes.rows.row(j)) / cfg.student_temperature;
                mx = std::max(mx, logits[j]);
            }
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                predictions[m](i, j) = std::exp(logits[j] - mx);
                s += predictions[m](i, j);
            }
            for (std::size_t j = 0; j < k; ++j) {
                predictions[m](i, j) /= s;
                mean_prediction[j] += predictions[m](i, j) / denom_rows;
            }
            for (std::size_t j = 0; j < k; ++j)
                res.cross_entropy -= targets(i, j) * safe_log(predictions[m](i, j));
        }
    }
    res.cross_entropy /= denom_rows;

    for (std::size_t j = 0; j < k; ++j)
        res.memax += mean_prediction[j] * safe_log(mean_prediction[j]);
    res.loss = res.cross_entropy + cfg.memax_weight * res.memax;

    if (with_grad) {
        std::vector<double> c(k); // d memax / d mean_prediction
        for (std::size_t j = 0; j < k; ++j) c[j] = safe_log(mean_prediction[j]) + 1.0;
        res.grad_students.resize(n_views);
        for (std::size_t m = 0; m < n_views; ++m) {
            Matrix grad_unit(b, d);
            for (std::size_t i = 0; i < b; ++i) {
                double cbar = 0.0;
                for (std::size_t j = 0; j < k; ++j) cbar += predictions[m](i, j) * c[j];
                for (std::size_t j = 0; j < k; ++j) {
                    const double p = predictions[m](i, j);
                    const double g_logit =
                        ((p - targets(i, j)) + cfg.memax_weight * p * (c[j] - cbar)) / denom_rows;
                    const double g = g_logit / cfg.student_temperature;
                    for (std::size_t jj = 0; jj < d; ++jj)
                        grad_unit(i, jj) += g * prototypes.rows(j, jj);
                }
            }
            chain_through_normalization(student_views[m], units[m], grad_unit,
                                        res.grad_students[m]);
        }
    }
    return res;
}

HybridResult hybrid_loss(const std::vector<Matrix>& student_views, const Matrix& teacher_view,
                         const Prototypes& prototypes, const Matrix& global_teacher,
                         const Matrix& global_student, const LossConfig& cfg) {
    HybridResult res;
    res.msn = msn_loss(student_views, teacher_view, prototypes, cfg);
    res.contrastive = nt_xent(global_teacher, global_student, cfg.ntxent_temperature);
    res.loss = res.msn.loss + cfg.hybrid_weight * res.contrastive.loss;
    return res;
}

double grad_check(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& x, const std::vector<double>& analytic_grad,
                  double eps) {
    if (x.size() != analytic_grad.size())
        throw DataError("grad_check: gradient size mismatch");
    double worst = 0.0;
    std::vector<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + eps;
        const double fp = f(probe);
        probe[i] = x[i] - eps;
        const double fm = f(probe);
        probe[i] = x[i];
        const double numeric = (fp - fm) / (2.0 * eps);
        const double rel = std::fabs(analytic_grad[i] - numeric) / std::max(1e-8, std::fabs(numeric));
        worst = std::max(worst, rel);
    }
    return worst;
}

namespace {

std::vector<double> flatten2(const Matrix& a, const Matrix& b) {
    std::vector<double> out;
    out.reserve(a.data().size() + b.data().size());
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    return out;
}

void unflatten2(const std::vector<double>& x, Matrix& a, Matrix& b) {
    std::copy(x.begin(), x.begin() + a.data().size(), a.data().begin());
    std::copy(x.begin() + a.data().size(), x.end(), b.data().begin());
}

} // namespace

double grad_check_nt_xent(std::size_t batch, std::size_t dim, double temperature,
                          std::uint64_t seed, double eps) {
    Rng rng(seed);
    Matrix za = random_matrix(batch, dim, rng);
    Matrix zb = random_matrix(batch, dim, rng);
    const auto res = nt_xent(za, zb, temperature, true);
    auto f = [&](const std::vector<double>& x) {
        Matrix a(batch, dim), b(batch, dim);
        unflatten2(x, a, b);
        return nt_xent(a, b, temperature).loss;
    };
    return grad_check(f, flatten2(za, zb), flatten2(res.grad_a, res.grad_b), eps);
}

double grad_check_reweighted(std::size_t batch, std::size_t dim, double temperature, double beta,
                             std::uint64_t seed, double eps) {
    Rng rng(seed);
    Matrix za = random_matrix(batch, dim, rng);
    Matrix zb = random_matrix(batch, dim, rng);
    const auto res = reweighted_nt_xent(za, zb, temperature, beta, true);
    auto f = [&](const std::vector<double>& x) {
        Matrix a(batch, dim), b(batch, dim);
        unflatten2(x, a, b);
        return reweighted_nt_xent(a, b, temperature, beta).loss;
    };
    return grad_check(f, flatten2(za, zb), flatten2(res.grad_a, res.grad_b), eps);
}

double grad_check_msn(std::size_t batch, std::size_t dim, std::size_t n_prototypes,
                      std::size_t n_views, const LossConfig& cfg, std::uint64_t seed, double eps) {
    Rng rng(seed);
    std::vector<Matrix> students;
    for (std::size_t m = 0; m < n_views; ++m) students.push_back(random_matrix(batch, dim, rng));
    Matrix teacher = random_matrix(batch, dim, rng);
    Prototypes protos = Prototypes::random(n_prototypes, dim, rng.derive(9917));

    const auto res = msn_loss(students, teacher, protos, cfg, true);
    std::vector<double> x;
    std::vector<double> g;
    for (std::size_t m = 0; m < n_views; ++m) {
        x.insert(x.end(), students[m].data().begin(), students[m].data().end());
        g.insert(g.end(), res.grad_students[m].data().begin(), res.grad_students[m].data().end());
    }
    auto f = [&](const std::vector<double>& flat) {
        std::vector<Matrix> views(n_views, Matrix(batch, dim));
        std::size_t off = 0;
        for (std::size_t m = 0; m < n_views; ++m) {
            std::copy(flat.begin() + off, flat.begin() + off + batch * dim,
                      views[m].data().begin());
            off += batch * dim;
        }
        return msn_loss(views, teacher, protos, cfg).loss;
    };
    return grad_check(f, x, g, eps);
}

} // namespace pathssl

#pragma once

#include <functional>
#include <vector>

#include "pathssl/matrix.hpp"
#include "pathssl/rng.hpp"

namespace pathssl {

/// Temperatures and weights for the SSL objectives.
struct LossConfig {
    double ntxent_temperature = 0.1;
    double teacher_temperature = 0.0125;
    double student_temperature = 0.1;
    double memax_weight = 0.1; // weight of the mean-entropy regularizer
    int sinkhorn_iters = 3;
    double beta_max = 0.1;     // hard-negative reweighting ramp target
    double hybrid_weight = 1.0;

    void validate() const;
};

/// K x d prototype bank with unit-norm rows.
struct Prototypes {
    Matrix rows;

    std::size_t count() const { return rows.rows(); }
    std::size_t dim() const { return rows.cols(); }
    void validate() const;

    static Prototypes random(std::size_t k, std::size_t d, Rng rng);
};

struct ContrastiveResult {
    double loss = 0.0;
    std::vector<double> per_anchor; // 2B entries
    Matrix grad_a; // d loss / d z_a (raw inputs), filled when requested
    Matrix grad_b;
};

/// NT-Xent over B positive pairs. Rows are cosine-normalized internally;
/// each of the 2B anchors scores its pair against the other 2B-2
/// embeddings. Loss is the mean per-anchor cross entropy.
ContrastiveResult nt_xent(const Matrix& z_a, const Matrix& z_b, double temperature,
                          bool with_grad = false);

/// NT-Xent with hard-negative importance reweighting: negative k of an
/// anchor gets weight exp(beta*s_k/tau) normalized by the mean over that
/// anchor's negatives, applied to the denominator's negative mass. beta = 0
/// reduces exactly to nt_xent.
ContrastiveResult reweighted_nt_xent(const Matrix& z_a, const Matrix& z_b, double temperature,
                                     double beta, bool with_grad = false);

/// Linear ramp of the reweighting strength: beta_max * step / total_steps.
double beta_ramp(long step, long total_steps, double beta_max);

/// Alternating row/column balancing of a positive matrix. Each round
/// scales rows to sum 1 then columns to sum B/K; a final row pass makes
/// every output row a probability distribution. iters = 0 degenerates to
/// plain row normalization.
Matrix sinkhorn(const Matrix& scores, int iters);

struct MsnResult {
    double loss = 0.0;
    double cross_entropy = 0.0;
    double memax = 0.0; // negative entropy of the mean student prediction
    std::vector<Matrix> grad_students; // per view, filled when requested
};

/// MSN prototype loss: student predictions are row softmaxes of z.Q^T at
/// the student temperature; teacher targets are Sinkhorn-normalized
/// exponentiated teacher similarities at the teacher temperature, with no
/// gradient through the teacher path; plus the ME-MAX regularizer
/// memax_weight * (-H(mean prediction)). No centering.
MsnResult msn_loss(const std::vector<Matrix>& student_views, const Matrix& teacher_view,
                   const Prototypes& prototypes, const LossConfig& cfg, bool with_grad = false);

struct HybridResult {
    double loss = 0.0;
    MsnResult msn;
    ContrastiveResult contrastive;
};

/// MSN plus hybrid_weight * NT-Xent over the global teacher/student views
/// only (local views never enter the contrastive term).
HybridResult hybrid_loss(const std::vector<Matrix>& student_views, const Matrix& teacher_view,
                         const Prototypes& prototypes, const Matrix& global_teacher,
                         const Matrix& global_student, const LossConfig& cfg);

/// Central finite differences on every coordinate; returns
/// max |analytic - numeric| / max(1e-8, |numeric|).
double grad_check(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& x, const std::vector<double>& analytic_grad,
                  double eps);

/// Ready-made gradient checks on random small instances (used by the
/// loss-bench report and the acceptance suite).
double grad_check_nt_xent(std::size_t batch, std::size_t dim, double temperature,
                          std::uint64_t seed, double eps);
double grad_check_reweighted(std::size_t batch, std::size_t dim, double temperature, double beta,
                             std::uint64_t seed, double eps);
double grad_check_msn(std::size_t batch, std::size_t dim, std::size_t n_prototypes,
                      std::size_t n_views, const LossConfig& cfg, std::uint64_t seed, double eps);

/// Uniform random matrix in [-1,1), useful for seeds-everywhere testing.
Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng);

} // namespace pathssl

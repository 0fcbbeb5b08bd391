#include "pathssl/rebalance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pathssl/error.hpp"

namespace pathssl {

namespace {

Matrix normalize_rows(const Matrix& m, const char* where) {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double norm = std::sqrt(dot(m.row(i), m.row(i)));
        if (norm <= 0.0 || !std::isfinite(norm))
            throw DataError(std::string(where) + ": zero-norm embedding row at index " +
                            std::to_string(i));
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / norm;
    }
    return out;
}

std::uint32_t nearest_centroid(const Matrix& centroids, std::span<const double> row) {
    std::uint32_t best = 0;
    double best_dot = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        const double d = dot(centroids.row(c), row);
        if (d > best_dot) {
            best_dot = d;
            best = static_cast<std::uint32_t>(c);
        }
    }
    return best;
}

} // namespace

ClusterModel cosine_kmeans(const Matrix& embeddings, std::size_t k, int max_iters, Rng rng) {
    const std::size_t n = embeddings.rows();
    const std::size_t d = embeddings.cols();
    if (k < 1) throw DataError("cosine_kmeans: k must be >= 1");
    if (k > n)
        throw DataError("cosine_kmeans: k (" + std::to_string(k) + ") > n (" + std::to_string(n) + ")");

    const Matrix x = normalize_rows(embeddings, "cosine_kmeans");

    // k-means++ seeding on the unit sphere (squared chordal distance 2 - 2cos).
    Matrix centroids(k, d);
    std::vector<double> best_dot(n, -std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng.uniform_int(n));
    for (std::size_t j = 0; j < d; ++j) centroids(0, j) = x(first, j);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dc = dot(centroids.row(c - 1), x.row(i));
            if (dc > best_dot[i]) best_dot[i] = dc;
            total += std::max(0.0, 2.0 - 2.0 * best_dot[i]);
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += std::max(0.0, 2.0 - 2.0 * best_dot[i]);
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            // all points coincide with chosen centroids; any index works
            pick = static_cast<std::size_t>(rng.uniform_int(n));
        }
        for (std::size_t j = 0; j < d; ++j) centroids(c, j) = x(pick, j);
    }

    std::vector<std::uint32_t> assignment(n, 0);
    std::vector<std::uint32_t> prev(n, std::numeric_limits<std::uint32_t>::max());
    int iter = 0;
    for (; iter < max_iters; ++iter) {
        for (std::size_t i = 0; i < n; ++i) assignment[i] = nearest_centroid(centroids, x.row(i));
        if (assignment == prev) break;
        prev = assignment;

        Matrix sums(k, d);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t c = assignment[i];
            ++counts[c];
            for (std::size_t j = 0; j < d; ++j) sums(c, j) += x(i, j);
        }

        std::vector<bool> donor(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Re-seed from the point farthest from its assigned centroid.
                std::size_t worst = 0;
                double worst_dot = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < n; ++i) {
                    if (donor[i]) continue;
                    const double dc = dot(centroids.row(assignment[i]), x.row(i));
                    if (dc < worst_dot) {
                        worst_dot = dc;
                        worst = i;
                    }
                }
                donor[worst] = true;
                for (std::size_t j = 0; j < d; ++j) centroids(c, j) = x(worst, j);
                continue;
            }
            double norm = std::sqrt(dot(sums.row(c), sums.row(c)));
            if (norm <= 1e-30) {
                // Degenerate mean (members cancel); keep the previous centroid.
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) centroids(c, j) = sums(c, j) / norm;
        }
    }

    ClusterModel model;
    model.centroids = std::move(centroids);
    model.k = k;
    model.dim = d;
    model.iterations_run = iter;
    // Final assignment against the final centroids, so that
    // assign(model, training data) reproduces these labels exactly.
    for (std::size_t i = 0; i < n; ++i) assignment[i] = nearest_centroid(model.centroids, x.row(i));
    model.training_assignments = assignment;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        inertia += 1.0 - dot(model.centroids.row(assignment[i]), x.row(i));
    model.inertia = std::max(0.0, inertia);
    return model;
}

std::vector<std::uint32_t> assign(const ClusterModel& model, const Matrix& embeddings) {
    if (embeddings.cols() != model.dim)
        throw DataError("assign: embedding dimension " + std::to_string(embeddings.cols()) +
                        " does not match model dimension " + std::to_string(model.dim));
    const Matrix x = normalize_rows(embeddings, "assign");
    std::vector<std::uint32_t> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = nearest_centroid(model.centroids, x.row(i));
    return out;
}

std::vector<std::size_t> balanced_sample(const std::vector<std::uint32_t>& assignments,
                                         std::size_t total, Rng rng) {
    std::uint32_t max_id = 0;
    for (std::uint32_t a : assignments) max_id = std::max(max_id, a);
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(max_id) + 1);
    for (std::size_t i = 0; i < assignments.size(); ++i) members[assignments[i]].push_back(i);

    std::vector<std::size_t> nonempty;
    for (std::size_t c = 0; c < members.size(); ++c)
        if (!members[c].empty()) nonempty.push_back(c);
    if (nonempty.empty()) throw DataError("balanced_sample: no assignments given");
    if (total < nonempty.size())
        throw DataError("balanced_sample: total " + std::to_string(total) +
                        " < nonempty cluster count " + std::to_string(nonempty.size()));

    const std::size_t base = total / nonempty.size();
    const std::size_t remainder = total % nonempty.size();

    std::vector<std::size_t> selected;
    selected.reserve(total);
    for (std::size_t rank = 0; rank < nonempty.size(); ++rank) {
        const auto& pool = members[nonempty[rank]];
        const std::size_t quota = base + (rank < remainder ? 1 : 0);
        if (pool.size() >= quota) {
            for (std::size_t idx : rng.sample_without_replacement(pool.size(), quota))
                selected.push_back(pool[idx]);
        } else {
            for (std::size_t s = 0; s < quota; ++s)
                selected.push_back(pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))]);
        }
    }
    return selected;
}

} // namespace pathssl

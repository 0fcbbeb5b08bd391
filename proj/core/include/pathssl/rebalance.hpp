#pragma once

#include <cstdint>
#include <vector>

#include "pathssl/matrix.hpp"
#include "pathssl/rng.hpp"

namespace pathssl {

/// Spherical k-means model: unit-norm centroids, cosine-distance inertia.
struct ClusterModel {
    Matrix centroids;      // k x d, unit L2 rows
    std::size_t k = 0;
    std::size_t dim = 0;
    double inertia = 0.0;  // sum over points of (1 - cos) to assigned centroid
    std::vector<std::uint32_t> training_assignments;
    int iterations_run = 0;
};

/// Spherical k-means over row embeddings with cosine similarity.
/// Rows are L2-normalized first (zero rows are an error), seeding is
/// k-means++, assignment maximizes the dot product, centroids are
/// renormalized member means, and empty clusters are re-seeded from the
/// point farthest from its assigned centroid. Stops when assignments stop
/// changing or after max_iters Lloyd iterations.
ClusterModel cosine_kmeans(const Matrix& embeddings, std::size_t k, int max_iters, Rng rng);

/// Nearest-centroid assignment for new rows (argmax dot product after
/// normalization; ties break to the lowest cluster id).
std::vector<std::uint32_t> assign(const ClusterModel& model, const Matrix& embeddings);

/// Balanced resampling: a fixed per-cluster quota of floor(total / C) with
/// the remainder going to the lowest-id nonempty clusters; clusters smaller
/// than their quota are drawn with replacement. Returns selected row
/// indices grouped by ascending cluster id.
std::vector<std::size_t> balanced_sample(const std::vector<std::uint32_t>& assignments,
                                         std::size_t total, Rng rng);

} // namespace pathssl

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crr/feature_store.hpp"

namespace crr {

/// Lloyd's K-Means with k-means++ seeding. Centroids are kept in 64-bit so
/// they are exact arithmetic means of their members; inertia is the sum of
/// squared Euclidean distances of every row to its assigned centroid.
struct KMeansModel {
  std::size_t k = 0;
  std::size_t dims = 0;
  std::vector<double> centroids;  // k * dims, row-major
  double inertia = 0.0;
  std::uint64_t seed = 0;
  std::size_t iterations_run = 0;
  std::vector<double> inertia_trace;  // one entry per Lloyd iteration

  std::span<const double> centroid(std::size_t j) const {
    return {centroids.data() + j * dims, dims};
  }
};

struct Assignment {
  std::vector<std::uint32_t> cluster_id;  // one per row, < k

  std::size_t size() const { return cluster_id.size(); }
};

struct KMeansResult {
  KMeansModel model;
  Assignment assignment;
};

/// Fits K-Means. Deterministic for fixed (x, k, seed, max_iters, tol)
/// regardless of `threads`: the assignment pass runs over fixed-size row
/// chunks whose partial sums merge in chunk order. Termination: assignment
/// fixed point, relative inertia improvement < tol, or max_iters.
/// Emptied clusters are re-seeded with the row farthest from its centroid.
KMeansResult kmeans_fit(const FeatureMatrix& x, std::size_t k, std::uint64_t seed,
                        std::size_t max_iters = 100, double tol = 1e-4,
                        std::size_t threads = 0);

/// Nearest centroid per row; ties go to the lowest centroid index.
Assignment assign(const KMeansModel& model, const FeatureMatrix& x,
                  std::size_t threads = 0);

/// Normalized mutual information in [0, 1], normalized by the arithmetic
/// mean of the two label entropies. Two single-cluster partitions score 1;
/// a single-cluster partition against a non-trivial one scores 0.
double nmi(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);
double nmi(const Assignment& a, const Assignment& b);

/// Adjusted Rand index in [-1, 1] via the pair-confusion counts.
double ari(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);
double ari(const Assignment& a, const Assignment& b);

}  // namespace crr

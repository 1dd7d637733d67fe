#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "crr/feature_store.hpp"
#include "crr/kmeans.hpp"

namespace crr {

/// Random channel-permutation subspace division. The first
/// `partition_count` (M) blocks are consecutive chunks of one seeded
/// permutation of 0..D-1, so together they partition the channels; extra
/// blocks keep drawing chunks from fresh independent permutations.
struct SubspaceLayout {
  std::size_t dims = 0;           // D
  std::size_t subspace_dim = 0;   // D* = D / M
  std::size_t partition_count = 0;  // M
  std::vector<std::uint32_t> channel_index;  // S * D*, row-major
  std::uint64_t seed = 0;

  std::size_t subspace_count() const {  // S
    return subspace_dim == 0 ? 0 : channel_index.size() / subspace_dim;
  }
  std::span<const std::uint32_t> channels(std::size_t s) const {
    return {channel_index.data() + s * subspace_dim, subspace_dim};
  }
};

SubspaceLayout make_layout(std::size_t d, std::size_t m, std::uint64_t seed,
                           std::size_t extra_subspaces = 0);

/// Per-subspace K-Means centroids. Values are quantized to 32-bit on fit so
/// that in-memory behaviour matches a codebook reloaded from disk.
struct Codebook {
  SubspaceLayout layout;
  std::size_t k = 0;
  std::vector<float> centroids;  // S * K * D*
  std::uint64_t seed = 0;

  std::span<const float> centroid(std::size_t s, std::size_t j) const {
    const std::size_t dstar = layout.subspace_dim;
    return {centroids.data() + (s * k + j) * dstar, dstar};
  }
};

/// Codes: one centroid id per (row, subspace).
struct CodeMatrix {
  std::size_t rows = 0;
  std::size_t subspaces = 0;
  std::vector<std::uint32_t> codes;  // rows * subspaces

  std::span<const std::uint32_t> row(std::size_t i) const {
    return {codes.data() + i * subspaces, subspaces};
  }
};

/// Runs K-Means independently in every subspace. Subspace s uses the seed
/// derive_seed(seed, s), so fits are reproducible and order-independent.
Codebook fit_codebook(const FeatureMatrix& x, const SubspaceLayout& layout,
                      std::size_t k, std::uint64_t seed,
                      std::size_t max_iters = 100, double tol = 1e-4,
                      std::size_t threads = 0);

/// Nearest centroid id per subspace, ties to the lowest id.
CodeMatrix encode(const Codebook& cb, const FeatureMatrix& x, std::size_t threads = 0);

/// Scatters the selected centroids back to original channel order. Channels
/// covered by several subspaces (extra-subspace mode) receive the mean of
/// the contributing centroid values.
FeatureMatrix reconstruct(const Codebook& cb, const CodeMatrix& codes);

/// CRCB container, bit-exact round trip.
void save_codebook(const Codebook& cb, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

/// A full-space K-Means model doubles as an M=1 codebook with identity
/// channel order; used to persist models for centroid-proxy retrieval.
Codebook codebook_from_kmeans(const KMeansModel& model, std::uint64_t seed);
KMeansModel kmeans_from_codebook(const Codebook& cb);

}  // namespace crr

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "crr/feature_store.hpp"
#include "crr/retrieval.hpp"

namespace crr {

/// Iterative quantization: mean-centering, PCA projection to `bits`
/// directions, and an orthogonal rotation trained to minimize the
/// binarization error ||sign(VR) - VR||^2.
struct ItqModel {
  std::size_t dims = 0;            // D
  std::size_t bits = 0;            // B
  std::vector<double> mean;        // D
  std::vector<double> projection;  // D x B, row-major, orthonormal columns
  std::vector<double> rotation;    // B x B, row-major, orthogonal
  std::size_t iters = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_trace;  // quantization loss per iteration; not persisted
};

/// Fits ITQ on x (for the retrieval pipeline: the reconstructed gallery).
/// PCA directions come from the covariance eigendecomposition in descending
/// eigenvalue order, signs fixed so each direction's largest-magnitude entry
/// is positive; the rotation starts from a seeded random orthogonal matrix.
/// Fails if the covariance has fewer than `bits` informative directions.
ItqModel itq_fit(const FeatureMatrix& x, std::size_t bits, std::size_t iters = 50,
                 std::uint64_t seed = 0);

/// bit b = 1 iff ((x - mean) . projection . rotation)_b >= 0.
BinaryCodeMatrix itq_encode(const ItqModel& model, const FeatureMatrix& x,
                            std::size_t threads = 0);

/// Ascending popcount-of-XOR distance, ties by ascending index.
RankedList hamming_rank(std::span<const std::uint64_t> q_words, std::uint32_t bits,
                        const BinaryCodeMatrix& gallery, std::size_t query_id = 0);

std::vector<RankedList> hamming_rank_all(const BinaryCodeMatrix& queries,
                                         const BinaryCodeMatrix& gallery,
                                         std::size_t threads = 0);

std::uint64_t hamming_distance(std::span<const std::uint64_t> a,
                               std::span<const std::uint64_t> b);

/// CRIQ container, bit-exact round trip.
void save_itq_model(const ItqModel& model, const std::filesystem::path& path);
ItqModel load_itq_model(const std::filesystem::path& path);

}  // namespace crr

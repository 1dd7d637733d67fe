#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crr/feature_store.hpp"
#include "crr/kmeans.hpp"
#include "crr/subspace.hpp"

namespace crr {

/// Gallery after convex fusion of original and reconstructed features.
struct FusedGallery {
  FeatureMatrix features;
  double lambda = 0.0;
  std::string source_id;    // provenance of the original features
  std::string codebook_id;  // provenance of the reconstruction
};

/// Gallery indices in ascending distance order. `distances` is present only
/// for rankings whose distance sequence is actually non-decreasing (it is
/// omitted by centroid-proxy ranking, which reorders across clusters).
struct RankedList {
  std::size_t query_id = 0;
  std::vector<std::uint32_t> order;
  std::optional<std::vector<double>> distances;
};

/// Per-query squared sub-distances to every centroid of every subspace.
struct DistanceTable {
  std::size_t subspaces = 0;
  std::size_t k = 0;
  std::vector<double> d2;  // subspaces * k

  double at(std::size_t s, std::size_t j) const { return d2[s * k + j]; }
};

/// features = (1 - lambda) * reconstructed + lambda * original, row-wise.
FusedGallery fuse(const FeatureMatrix& x, const FeatureMatrix& x_recon, double lambda,
                  std::string source_id = {}, std::string codebook_id = {});

/// Ascending Euclidean distance, ties by ascending gallery index.
RankedList rank_exact(std::span<const float> q, const FeatureMatrix& gallery,
                      std::size_t query_id = 0);

RankedList rank_fused(std::span<const float> q, const FusedGallery& fused,
                      std::size_t query_id = 0);

DistanceTable build_distance_table(const Codebook& cb, std::span<const float> q);

/// Lookup-table distances: each gallery distance is the sum of the table
/// entries selected by its codes. For a pure partition this ranking equals
/// rank_exact against the reconstructed gallery under the same tie rule.
RankedList rank_adc(std::span<const float> q, const Codebook& cb,
                    const CodeMatrix& codes, std::size_t query_id = 0);

/// Clusters ordered by centroid distance to the query; within a cluster,
/// members ordered by exact distance, ties by index.
RankedList centroid_proxy_rank(std::span<const float> q, const KMeansModel& model,
                               const Assignment& asn, const FeatureMatrix& gallery,
                               std::size_t query_id = 0);

/// Batch drivers, parallel over queries.
std::vector<RankedList> rank_exact_all(const FeatureMatrix& queries,
                                       const FeatureMatrix& gallery,
                                       std::size_t threads = 0);
std::vector<RankedList> rank_fused_all(const FeatureMatrix& queries,
                                       const FusedGallery& fused,
                                       std::size_t threads = 0);
std::vector<RankedList> rank_adc_all(const FeatureMatrix& queries, const Codebook& cb,
                                     const CodeMatrix& codes, std::size_t threads = 0);
std::vector<RankedList> centroid_proxy_rank_all(const FeatureMatrix& queries,
                                                const KMeansModel& model,
                                                const Assignment& asn,
                                                const FeatureMatrix& gallery,
                                                std::size_t threads = 0);

/// One line per query: `<query_index>\t<g1> <g2> ... <gN>`. top = 0 keeps
/// the full ranking.
void write_rankings(const std::filesystem::path& path,
                    std::span<const RankedList> rankings, std::size_t top = 0);
std::vector<RankedList> read_rankings(const std::filesystem::path& path);

}  // namespace crr

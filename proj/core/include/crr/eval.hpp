#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crr/feature_store.hpp"
#include "crr/retrieval.hpp"

namespace crr {

struct ClassStats {
  double ap_mean = 0.0;
  std::size_t query_count = 0;
};

struct EvalReport {
  double map_at_all = 0.0;
  double prec_at_k = 0.0;
  std::size_t k = 100;
  std::map<std::uint32_t, ClassStats> per_class;  // gallery-space class id
  std::size_t skipped_queries = 0;                // queries with no relevant item
};

/// AP over the full ranking; relevance is label equality. Returns nullopt
/// when the gallery holds no relevant item (AP undefined).
std::optional<double> average_precision(const RankedList& ranked,
                                        const LabelList& gallery_labels,
                                        std::uint32_t query_label);

/// Fraction of relevant items in the top min(k, N).
double precision_at(const RankedList& ranked, const LabelList& gallery_labels,
                    std::uint32_t query_label, std::size_t k = 100);

/// Mean AP and mean Prec@k over all queries with at least one relevant
/// gallery item; queries are matched to gallery classes by label NAME, so
/// the two label files may have been interned independently. rankings[i]
/// pairs with query_labels.ids[i].
EvalReport map_at_all(std::span<const RankedList> rankings,
                      const LabelList& gallery_labels, const LabelList& query_labels,
                      std::size_t prec_k = 100);

struct DistanceHistogram {
  std::vector<double> bin_edges;  // bins + 1 edges, equal width over [min, max]
  std::vector<std::size_t> positive_counts;
  std::vector<std::size_t> negative_counts;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Seeded uniform sampling without replacement of cross-domain pairs;
/// positives share a label name, negatives do not. Defaults follow the
/// 1000-positive / 9000-negative protocol.
DistanceHistogram distance_histogram(const FeatureMatrix& queries,
                                     const FeatureMatrix& gallery,
                                     const LabelList& query_labels,
                                     const LabelList& gallery_labels,
                                     std::size_t n_pos = 1000, std::size_t n_neg = 9000,
                                     std::size_t bins = 50, std::uint64_t seed = 0);

std::string report_to_json(const EvalReport& report, const LabelList& gallery_labels);
std::string histogram_to_csv(const DistanceHistogram& hist);

}  // namespace crr

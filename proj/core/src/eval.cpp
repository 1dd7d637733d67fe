#include "crr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace crr {

namespace {

double euclidean(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

// Maps every query row to the gallery-space id of its label name, or npos
// when the gallery has no such class.
std::vector<std::uint32_t> map_query_classes(const LabelList& gallery_labels,
                                             const LabelList& query_labels) {
  constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();
  std::unordered_map<std::string, std::uint32_t> by_name;
  for (std::size_t id = 0; id < gallery_labels.names.size(); ++id)
    by_name.emplace(gallery_labels.names[id], static_cast<std::uint32_t>(id));
  std::vector<std::uint32_t> out(query_labels.names.size(), npos);
  for (std::size_t id = 0; id < query_labels.names.size(); ++id) {
    const auto it = by_name.find(query_labels.names[id]);
    if (it != by_name.end()) out[id] = it->second;
  }
  return out;
}

}  // namespace

std::optional<double> average_precision(const RankedList& ranked,
                                        const LabelList& gallery_labels,
                                        std::uint32_t query_label) {
  if (ranked.order.size() != gallery_labels.size())
    throw argument_error("average_precision: ranking does not cover the gallery");
  std::size_t total_relevant = 0;
  for (std::uint32_t id : gallery_labels.ids)
    if (id == query_label) ++total_relevant;
  if (total_relevant == 0) return std::nullopt;

  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < ranked.order.size(); ++rank) {
    if (gallery_labels.ids[ranked.order[rank]] != query_label) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return ap / static_cast<double>(total_relevant);
}

double precision_at(const RankedList& ranked, const LabelList& gallery_labels,
                    std::uint32_t query_label, std::size_t k) {
  if (k == 0) throw argument_error("precision_at: k must be >= 1");
  if (gallery_labels.size() == 0) throw argument_error("precision_at: empty gallery");
  if (ranked.order.size() != gallery_labels.size())
    throw argument_error("precision_at: ranking does not cover the gallery");
  const std::size_t denom = std::min(k, ranked.order.size());
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < denom; ++rank)
    if (gallery_labels.ids[ranked.order[rank]] == query_label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(denom);
}

EvalReport map_at_all(std::span<const RankedList> rankings,
                      const LabelList& gallery_labels, const LabelList& query_labels,
                      std::size_t prec_k) {
  if (rankings.size() != query_labels.size())
    throw argument_error("map_at_all: ranking count does not match query labels");
  const auto class_of = map_query_classes(gallery_labels, query_labels);
  constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();

  EvalReport report;
  report.k = prec_k;
  double ap_sum = 0.0, prec_sum = 0.0;
  std::size_t evaluated = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const std::uint32_t gid = class_of[query_labels.ids[i]];
    std::optional<double> ap;
    if (gid != npos) ap = average_precision(rankings[i], gallery_labels, gid);
    if (!ap) {
      ++report.skipped_queries;
      continue;
    }
    ap_sum += *ap;
    prec_sum += precision_at(rankings[i], gallery_labels, gid, prec_k);
    ++evaluated;
    auto& stats = report.per_class[gid];
    stats.ap_mean += *ap;  // running sum; divided below
    ++stats.query_count;
  }
  if (evaluated == 0)
    throw argument_error("map_at_all: no query has a relevant gallery item");
  for (auto& [id, stats] : report.per_class)
    stats.ap_mean /= static_cast<double>(stats.query_count);
  report.map_at_all = ap_sum / static_cast<double>(evaluated);
  report.prec_at_k = prec_sum / static_cast<double>(evaluated);
  return report;
}

DistanceHistogram distance_histogram(const FeatureMatrix& queries,
                                     const FeatureMatrix& gallery,
                                     const LabelList& query_labels,
                                     const LabelList& gallery_labels,
                                     std::size_t n_pos, std::size_t n_neg,
                                     std::size_t bins, std::uint64_t seed) {
  if (queries.dims != gallery.dims)
    throw argument_error("distance_histogram: dimension mismatch");
  if (queries.rows != query_labels.size() || gallery.rows != gallery_labels.size())
    throw argument_error("distance_histogram: label count mismatch");
  if (bins == 0) throw argument_error("distance_histogram: bins must be >= 1");

  const auto class_of = map_query_classes(gallery_labels, query_labels);
  constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();
  const std::size_t nq = queries.rows, ng = gallery.rows;

  std::vector<std::size_t> gallery_class_count(gallery_labels.names.size(), 0);
  for (std::uint32_t id : gallery_labels.ids) ++gallery_class_count[id];
  std::uint64_t total_pos = 0;
  std::vector<std::uint32_t> query_gid(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    query_gid[i] = class_of[query_labels.ids[i]];
    if (query_gid[i] != npos) total_pos += gallery_class_count[query_gid[i]];
  }
  const std::uint64_t total_all = static_cast<std::uint64_t>(nq) * ng;
  const std::uint64_t total_neg = total_all - total_pos;
  if (n_pos > total_pos)
    throw argument_error("distance_histogram: only " + std::to_string(total_pos) +
                         " positive pairs exist, " + std::to_string(n_pos) + " requested");
  if (n_neg > total_neg)
    throw argument_error("distance_histogram: only " + std::to_string(total_neg) +
                         " negative pairs exist, " + std::to_string(n_neg) + " requested");

  const auto is_positive = [&](std::uint64_t pair) {
    const std::size_t qi = static_cast<std::size_t>(pair / ng);
    const std::size_t gi = static_cast<std::size_t>(pair % ng);
    return query_gid[qi] != npos && gallery_labels.ids[gi] == query_gid[qi];
  };

  // Uniform without replacement. Dense requests enumerate and shuffle;
  // sparse requests rejection-sample.
  Rng rng(derive_seed(seed, 0xD1));
  const auto sample = [&](std::size_t want, bool positive, std::uint64_t available) {
    std::vector<std::uint64_t> picked;
    picked.reserve(want);
    if (want == 0) return picked;
    if (available <= 4 * static_cast<std::uint64_t>(want)) {
      std::vector<std::uint64_t> all;
      all.reserve(static_cast<std::size_t>(available));
      for (std::uint64_t p = 0; p < total_all; ++p)
        if (is_positive(p) == positive) all.push_back(p);
      for (std::size_t i = 0; i < want; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(all.size() - i));
        std::swap(all[i], all[j]);
        picked.push_back(all[i]);
      }
    } else {
      std::unordered_set<std::uint64_t> seen;
      while (picked.size() < want) {
        const std::uint64_t p = rng.next_below(total_all);
        if (is_positive(p) != positive || !seen.insert(p).second) continue;
        picked.push_back(p);
      }
    }
    return picked;
  };

  const auto pos_pairs = sample(n_pos, true, total_pos);
  const auto neg_pairs = sample(n_neg, false, total_neg);

  const auto distance_of = [&](std::uint64_t pair) {
    return euclidean(queries.row(static_cast<std::size_t>(pair / ng)),
                     gallery.row(static_cast<std::size_t>(pair % ng)));
  };
  std::vector<double> pos_d(pos_pairs.size()), neg_d(neg_pairs.size());
  for (std::size_t i = 0; i < pos_pairs.size(); ++i) pos_d[i] = distance_of(pos_pairs[i]);
  for (std::size_t i = 0; i < neg_pairs.size(); ++i) neg_d[i] = distance_of(neg_pairs[i]);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double d : pos_d) { lo = std::min(lo, d); hi = std::max(hi, d); }
  for (double d : neg_d) { lo = std::min(lo, d); hi = std::max(hi, d); }
  if (pos_d.empty() && neg_d.empty()) { lo = 0.0; hi = 1.0; }

  DistanceHistogram hist;
  hist.n_pos = n_pos;
  hist.n_neg = n_neg;
  hist.bin_edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b)
    hist.bin_edges[b] = lo + width * static_cast<double>(b);
  hist.bin_edges[bins] = hi;
  hist.positive_counts.assign(bins, 0);
  hist.negative_counts.assign(bins, 0);
  const auto bin_of = [&](double d) {
    if (width <= 0.0) return std::size_t{0};
    const double t = (d - lo) / width;
    return std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, t)));
  };
  for (double d : pos_d) ++hist.positive_counts[bin_of(d)];
  for (double d : neg_d) ++hist.negative_counts[bin_of(d)];
  return hist;
}

std::string report_to_json(const EvalReport& report, const LabelList& gallery_labels) {
  nlohmann::ordered_json j;
  j["map_at_all"] = report.map_at_all;
  j["prec_at_k"] = report.prec_at_k;
  j["k"] = report.k;
  j["skipped_queries"] = report.skipped_queries;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [id, stats] : report.per_class) {
    nlohmann::ordered_json entry;
    entry["ap_mean"] = stats.ap_mean;
    entry["query_count"] = stats.query_count;
    per_class[gallery_labels.names[id]] = std::move(entry);
  }
  j["per_class"] = std::move(per_class);
  return j.dump(2) + "\n";
}

std::string histogram_to_csv(const DistanceHistogram& hist) {
  std::string out = "bin_lo,bin_hi,positive_count,negative_count\n";
  char buf[128];
  for (std::size_t b = 0; b + 1 < hist.bin_edges.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%zu\n", hist.bin_edges[b],
                  hist.bin_edges[b + 1], hist.positive_counts[b],
                  hist.negative_counts[b]);
    out += buf;
  }
  return out;
}

}  // namespace crr

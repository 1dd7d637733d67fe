#include "crr/kmeans.hpp"

#include <algorithm>
#include <cmath>

namespace crr {

namespace {

constexpr std::size_t kRowChunk = 2048;

double sq_dist(std::span<const float> x, std::span<const double> c) {
  double acc = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = static_cast<double>(x[d]) - c[d];
    acc += diff * diff;
  }
  return acc;
}

// Nearest centroid per row (ties to the lowest index), squared distance out.
void assign_rows(const FeatureMatrix& x, const std::vector<double>& centroids,
                 std::size_t k, std::size_t threads, std::uint32_t* out_asn,
                 double* out_d2) {
  const std::size_t dims = x.dims;
  parallel_chunks(x.rows, kRowChunk, threads,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i) {
                      const auto row = x.row(i);
                      double best = sq_dist(row, {centroids.data(), dims});
                      std::uint32_t best_j = 0;
                      for (std::size_t j = 1; j < k; ++j) {
                        const double d = sq_dist(row, {centroids.data() + j * dims, dims});
                        if (d < best) {
                          best = d;
                          best_j = static_cast<std::uint32_t>(j);
                        }
                      }
                      out_asn[i] = best_j;
                      out_d2[i] = best;
                    }
                  });
}

// k-means++: first centroid uniform, then proportional to squared distance
// from the nearest chosen centroid.
std::vector<double> plus_plus_init(const FeatureMatrix& x, std::size_t k,
                                   std::uint64_t seed) {
  const std::size_t n = x.rows, dims = x.dims;
  Rng rng(seed);
  std::vector<double> centroids(k * dims);
  std::vector<double> d2(n);
  std::vector<bool> chosen(n, false);

  auto adopt = [&](std::size_t j, std::size_t row) {
    const auto src = x.row(row);
    for (std::size_t d = 0; d < dims; ++d) centroids[j * dims + d] = src[d];
    chosen[row] = true;
  };

  const std::size_t first = static_cast<std::size_t>(rng.next_below(n));
  adopt(0, first);
  for (std::size_t i = 0; i < n; ++i)
    d2[i] = sq_dist(x.row(i), {centroids.data(), dims});

  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.next_double() * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (cum > r) {
          pick = i;
          break;
        }
      }
      if (pick == n) {  // rounding pushed r past the last positive mass
        for (std::size_t i = n; i-- > 0;)
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
      }
    }
    if (pick == n) {  // all remaining mass zero: duplicates; take next unchosen
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
      if (pick == n) pick = 0;
    }
    adopt(j, pick);
    const std::span<const double> cj{centroids.data() + j * dims, dims};
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], sq_dist(x.row(i), cj));
  }
  return centroids;
}

// Per-cluster means via per-chunk partial sums merged in chunk order, so the
// result is identical for any thread count.
void recompute_means(const FeatureMatrix& x, const std::vector<std::uint32_t>& asn,
                     std::size_t k, std::size_t threads,
                     std::vector<double>& centroids, std::vector<std::size_t>& counts) {
  const std::size_t dims = x.dims;
  const std::size_t n_chunks = chunk_count(x.rows, kRowChunk);
  std::vector<std::vector<double>> partial_sum(n_chunks);
  std::vector<std::vector<std::size_t>> partial_cnt(n_chunks);
  parallel_chunks(x.rows, kRowChunk, threads,
                  [&](std::size_t c, std::size_t begin, std::size_t end) {
                    auto& sum = partial_sum[c];
                    auto& cnt = partial_cnt[c];
                    sum.assign(k * dims, 0.0);
                    cnt.assign(k, 0);
                    for (std::size_t i = begin; i < end; ++i) {
                      const auto row = x.row(i);
                      double* dst = sum.data() + asn[i] * dims;
                      for (std::size_t d = 0; d < dims; ++d) dst[d] += row[d];
                      ++cnt[asn[i]];
                    }
                  });
  std::vector<double> sum(k * dims, 0.0);
  counts.assign(k, 0);
  for (std::size_t c = 0; c < n_chunks; ++c) {
    for (std::size_t v = 0; v < k * dims; ++v) sum[v] += partial_sum[c][v];
    for (std::size_t j = 0; j < k; ++j) counts[j] += partial_cnt[c][j];
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] == 0) continue;  // handled by the caller's repair step
    const double inv = 1.0 / static_cast<double>(counts[j]);
    for (std::size_t d = 0; d < dims; ++d)
      centroids[j * dims + d] = sum[j * dims + d] * inv;
  }
}

double chunked_sum(const std::vector<double>& per_row) {
  double acc = 0.0;
  for (double v : per_row) acc += v;
  return acc;
}

}  // namespace

KMeansResult kmeans_fit(const FeatureMatrix& x, std::size_t k, std::uint64_t seed,
                        std::size_t max_iters, double tol, std::size_t threads) {
  if (k == 0) throw argument_error("kmeans: k must be >= 1");
  if (k > x.rows)
    throw argument_error("kmeans: k=" + std::to_string(k) + " exceeds row count " +
                         std::to_string(x.rows));
  if (max_iters == 0) throw argument_error("kmeans: max_iters must be >= 1");
  if (tol < 0.0) throw argument_error("kmeans: tol must be >= 0");
  for (float v : x.data)
    if (!std::isfinite(v)) throw argument_error("kmeans: non-finite input");

  const std::size_t n = x.rows;
  KMeansModel model;
  model.k = k;
  model.dims = x.dims;
  model.seed = seed;
  model.centroids = plus_plus_init(x, k, seed);

  std::vector<std::uint32_t> asn(n), prev_asn;
  std::vector<double> d2(n);
  std::vector<std::size_t> counts;
  double prev_inertia = 0.0;

  for (std::size_t iter = 1; iter <= max_iters; ++iter) {
    assign_rows(x, model.centroids, k, threads, asn.data(), d2.data());
    const double inertia = chunked_sum(d2);
    model.inertia_trace.push_back(inertia);
    model.iterations_run = iter;

    recompute_means(x, asn, k, threads, model.centroids, counts);

    // Re-seed emptied clusters (ascending id) with the row farthest from its
    // assigned centroid; each repair consumes a distinct row.
    std::vector<bool> taken(n, false);
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && d2[i] > far_d) {
          far_d = d2[i];
          far = i;
        }
      if (far == n) continue;  // fewer distinct rows than clusters
      taken[far] = true;
      const auto src = x.row(far);
      for (std::size_t d = 0; d < x.dims; ++d)
        model.centroids[j * x.dims + d] = src[d];
    }

    const bool stable = (asn == prev_asn);
    const bool small_step =
        iter > 1 && prev_inertia > 0.0 && (prev_inertia - inertia) < tol * prev_inertia;
    prev_inertia = inertia;
    prev_asn = asn;
    if (stable || small_step || inertia == 0.0) break;
  }

  // Exact inertia against the final centroids.
  double final_inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    final_inertia += sq_dist(x.row(i), model.centroid(asn[i]));
  model.inertia = final_inertia;

  return KMeansResult{std::move(model), Assignment{std::move(asn)}};
}

Assignment assign(const KMeansModel& model, const FeatureMatrix& x, std::size_t threads) {
  if (x.dims != model.dims)
    throw argument_error("assign: dimension mismatch (" + std::to_string(x.dims) +
                         " vs model " + std::to_string(model.dims) + ")");
  Assignment out;
  out.cluster_id.resize(x.rows);
  std::vector<double> d2(x.rows);
  assign_rows(x, model.centroids, model.k, threads, out.cluster_id.data(), d2.data());
  return out;
}

namespace {

struct Contingency {
  std::size_t ka = 0, kb = 0, n = 0;
  std::vector<std::uint64_t> cells;  // ka * kb
  std::vector<std::uint64_t> row_sum, col_sum;
};

Contingency contingency(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  if (a.size() != b.size()) throw argument_error("partition length mismatch");
  if (a.empty()) throw argument_error("empty partitions");
  Contingency c;
  c.n = a.size();
  for (auto v : a) c.ka = std::max<std::size_t>(c.ka, v + 1);
  for (auto v : b) c.kb = std::max<std::size_t>(c.kb, v + 1);
  c.cells.assign(c.ka * c.kb, 0);
  c.row_sum.assign(c.ka, 0);
  c.col_sum.assign(c.kb, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++c.cells[a[i] * c.kb + b[i]];
    ++c.row_sum[a[i]];
    ++c.col_sum[b[i]];
  }
  return c;
}

double entropy(const std::vector<std::uint64_t>& counts, std::size_t n) {
  double h = 0.0;
  for (auto c : counts)
    if (c > 0) {
      const double p = static_cast<double>(c) / static_cast<double>(n);
      h -= p * std::log(p);
    }
  return h;
}

std::uint64_t choose2(std::uint64_t v) { return v * (v - 1) / 2; }

}  // namespace

double nmi(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  const Contingency c = contingency(a, b);
  const double ha = entropy(c.row_sum, c.n);
  const double hb = entropy(c.col_sum, c.n);
  if (ha == 0.0 && hb == 0.0) return 1.0;  // both single-cluster: identical
  if (ha == 0.0 || hb == 0.0) return 0.0;
  const double n = static_cast<double>(c.n);
  double mi = 0.0;
  for (std::size_t i = 0; i < c.ka; ++i)
    for (std::size_t j = 0; j < c.kb; ++j) {
      const std::uint64_t nij = c.cells[i * c.kb + j];
      if (nij == 0) continue;
      const double pij = static_cast<double>(nij) / n;
      mi += pij * std::log(n * static_cast<double>(nij) /
                           (static_cast<double>(c.row_sum[i]) *
                            static_cast<double>(c.col_sum[j])));
    }
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

double nmi(const Assignment& a, const Assignment& b) {
  return nmi(std::span<const std::uint32_t>(a.cluster_id),
             std::span<const std::uint32_t>(b.cluster_id));
}

double ari(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  const Contingency c = contingency(a, b);
  std::uint64_t tp = 0, row_pairs = 0, col_pairs = 0;
  for (auto v : c.cells) tp += choose2(v);
  for (auto v : c.row_sum) row_pairs += choose2(v);
  for (auto v : c.col_sum) col_pairs += choose2(v);
  const std::uint64_t all_pairs = choose2(c.n);
  const std::uint64_t fn = row_pairs - tp;
  const std::uint64_t fp = col_pairs - tp;
  const std::uint64_t tn = all_pairs - tp - fn - fp;
  if (fn == 0 && fp == 0) return 1.0;  // identical up to relabeling
  const auto i128 = [](std::uint64_t v) { return static_cast<__int128>(v); };
  const __int128 num = 2 * (i128(tp) * i128(tn) - i128(fn) * i128(fp));
  const __int128 den =
      (i128(tp) + i128(fn)) * (i128(fn) + i128(tn)) +
      (i128(tp) + i128(fp)) * (i128(fp) + i128(tn));
  return static_cast<double>(num) / static_cast<double>(den);
}

double ari(const Assignment& a, const Assignment& b) {
  return ari(std::span<const std::uint32_t>(a.cluster_id),
             std::span<const std::uint32_t>(b.cluster_id));
}

}  // namespace crr

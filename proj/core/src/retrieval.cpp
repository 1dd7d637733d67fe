#include "crr/retrieval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace crr {

namespace {

double sq_dist(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    acc += diff * diff;
  }
  return acc;
}

// Sorts indices by (squared distance, index) and emits sqrt'd distances.
RankedList order_by_distance(std::vector<double> d2, std::size_t query_id) {
  RankedList out;
  out.query_id = query_id;
  out.order.resize(d2.size());
  for (std::size_t i = 0; i < d2.size(); ++i)
    out.order[i] = static_cast<std::uint32_t>(i);
  std::sort(out.order.begin(), out.order.end(),
            [&](std::uint32_t a, std::uint32_t b) {
              if (d2[a] != d2[b]) return d2[a] < d2[b];
              return a < b;
            });
  std::vector<double> dist(d2.size());
  for (std::size_t r = 0; r < out.order.size(); ++r)
    dist[r] = std::sqrt(d2[out.order[r]]);
  out.distances = std::move(dist);
  return out;
}

template <typename Fn>
std::vector<RankedList> per_query(const FeatureMatrix& queries, std::size_t threads,
                                  Fn&& fn) {
  std::vector<RankedList> out(queries.rows);
  parallel_chunks(queries.rows, 1, threads,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i)
                      out[i] = fn(queries.row(i), i);
                  });
  return out;
}

}  // namespace

FusedGallery fuse(const FeatureMatrix& x, const FeatureMatrix& x_recon, double lambda,
                  std::string source_id, std::string codebook_id) {
  if (x.rows != x_recon.rows || x.dims != x_recon.dims)
    throw argument_error("fuse: shape mismatch between original and reconstruction");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw argument_error("fuse: lambda must lie in [0, 1]");
  FusedGallery out;
  out.lambda = lambda;
  out.source_id = std::move(source_id);
  out.codebook_id = std::move(codebook_id);
  out.features = FeatureMatrix::zeros(x.rows, x.dims);
  for (std::size_t v = 0; v < x.data.size(); ++v)
    out.features.data[v] = static_cast<float>(
        (1.0 - lambda) * static_cast<double>(x_recon.data[v]) +
        lambda * static_cast<double>(x.data[v]));
  return out;
}

RankedList rank_exact(std::span<const float> q, const FeatureMatrix& gallery,
                      std::size_t query_id) {
  if (q.size() != gallery.dims)
    throw argument_error("rank_exact: query dimension mismatch");
  std::vector<double> d2(gallery.rows);
  for (std::size_t i = 0; i < gallery.rows; ++i) d2[i] = sq_dist(q, gallery.row(i));
  return order_by_distance(std::move(d2), query_id);
}

RankedList rank_fused(std::span<const float> q, const FusedGallery& fused,
                      std::size_t query_id) {
  return rank_exact(q, fused.features, query_id);
}

DistanceTable build_distance_table(const Codebook& cb, std::span<const float> q) {
  if (q.size() != cb.layout.dims)
    throw argument_error("distance table: query dimension mismatch");
  const std::size_t s_total = cb.layout.subspace_count();
  const std::size_t dstar = cb.layout.subspace_dim;
  DistanceTable table;
  table.subspaces = s_total;
  table.k = cb.k;
  table.d2.resize(s_total * cb.k);
  std::vector<double> sub(dstar);
  for (std::size_t s = 0; s < s_total; ++s) {
    const auto cols = cb.layout.channels(s);
    for (std::size_t d = 0; d < dstar; ++d) sub[d] = q[cols[d]];
    for (std::size_t j = 0; j < cb.k; ++j) {
      const auto c = cb.centroid(s, j);
      double acc = 0.0;
      for (std::size_t d = 0; d < dstar; ++d) {
        const double diff = sub[d] - static_cast<double>(c[d]);
        acc += diff * diff;
      }
      table.d2[s * cb.k + j] = acc;
    }
  }
  return table;
}

RankedList rank_adc(std::span<const float> q, const Codebook& cb,
                    const CodeMatrix& codes, std::size_t query_id) {
  if (codes.subspaces != cb.layout.subspace_count())
    throw argument_error("rank_adc: code matrix does not match codebook");
  const DistanceTable table = build_distance_table(cb, q);
  std::vector<double> d2(codes.rows);
  const std::size_t s_total = table.subspaces;
  for (std::size_t i = 0; i < codes.rows; ++i) {
    const std::uint32_t* row = codes.codes.data() + i * s_total;
    double acc = 0.0;
    for (std::size_t s = 0; s < s_total; ++s) acc += table.d2[s * table.k + row[s]];
    d2[i] = acc;
  }
  return order_by_distance(std::move(d2), query_id);
}

RankedList centroid_proxy_rank(std::span<const float> q, const KMeansModel& model,
                               const Assignment& asn, const FeatureMatrix& gallery,
                               std::size_t query_id) {
  if (q.size() != gallery.dims || model.dims != gallery.dims)
    throw argument_error("centroid_proxy_rank: dimension mismatch");
  if (asn.size() != gallery.rows)
    throw argument_error("centroid_proxy_rank: assignment does not cover gallery");
  for (std::uint32_t c : asn.cluster_id)
    if (c >= model.k)
      throw argument_error("centroid_proxy_rank: cluster id out of range");

  // Rank centroids (ties by centroid id), then lay out clusters in that
  // order with members sorted by exact query distance.
  std::vector<double> cd2(model.k);
  for (std::size_t j = 0; j < model.k; ++j) {
    const auto c = model.centroid(j);
    double acc = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      const double diff = static_cast<double>(q[d]) - c[d];
      acc += diff * diff;
    }
    cd2[j] = acc;
  }
  std::vector<std::uint32_t> centroid_rank(model.k);
  for (std::size_t j = 0; j < model.k; ++j)
    centroid_rank[j] = static_cast<std::uint32_t>(j);
  std::sort(centroid_rank.begin(), centroid_rank.end(),
            [&](std::uint32_t a, std::uint32_t b) {
              if (cd2[a] != cd2[b]) return cd2[a] < cd2[b];
              return a < b;
            });

  std::vector<double> d2(gallery.rows);
  for (std::size_t i = 0; i < gallery.rows; ++i) d2[i] = sq_dist(q, gallery.row(i));
  std::vector<std::vector<std::uint32_t>> members(model.k);
  for (std::size_t i = 0; i < gallery.rows; ++i)
    members[asn.cluster_id[i]].push_back(static_cast<std::uint32_t>(i));

  RankedList out;
  out.query_id = query_id;
  out.order.reserve(gallery.rows);
  for (const std::uint32_t j : centroid_rank) {
    auto& group = members[j];
    std::sort(group.begin(), group.end(), [&](std::uint32_t a, std::uint32_t b) {
      if (d2[a] != d2[b]) return d2[a] < d2[b];
      return a < b;
    });
    out.order.insert(out.order.end(), group.begin(), group.end());
  }
  return out;  // distances omitted: not monotone across cluster boundaries
}

std::vector<RankedList> rank_exact_all(const FeatureMatrix& queries,
                                       const FeatureMatrix& gallery,
                                       std::size_t threads) {
  return per_query(queries, threads, [&](std::span<const float> q, std::size_t i) {
    return rank_exact(q, gallery, i);
  });
}

std::vector<RankedList> rank_fused_all(const FeatureMatrix& queries,
                                       const FusedGallery& fused, std::size_t threads) {
  return per_query(queries, threads, [&](std::span<const float> q, std::size_t i) {
    return rank_fused(q, fused, i);
  });
}

std::vector<RankedList> rank_adc_all(const FeatureMatrix& queries, const Codebook& cb,
                                     const CodeMatrix& codes, std::size_t threads) {
  return per_query(queries, threads, [&](std::span<const float> q, std::size_t i) {
    return rank_adc(q, cb, codes, i);
  });
}

std::vector<RankedList> centroid_proxy_rank_all(const FeatureMatrix& queries,
                                                const KMeansModel& model,
                                                const Assignment& asn,
                                                const FeatureMatrix& gallery,
                                                std::size_t threads) {
  return per_query(queries, threads, [&](std::span<const float> q, std::size_t i) {
    return centroid_proxy_rank(q, model, asn, gallery, i);
  });
}

void write_rankings(const std::filesystem::path& path,
                    std::span<const RankedList> rankings, std::size_t top) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw format_error(path.string() + ": cannot open for writing");
  for (const RankedList& r : rankings) {
    out << r.query_id << '\t';
    const std::size_t limit =
        top == 0 ? r.order.size() : std::min(top, r.order.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (i) out << ' ';
      out << r.order[i];
    }
    out << '\n';
  }
  out.close();
  if (!out) throw format_error(path.string() + ": write failed");
}

std::vector<RankedList> read_rankings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw format_error(path.string() + ": cannot open");
  std::vector<RankedList> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw format_error(path.string() + ": line " + std::to_string(line_no) +
                         ": missing tab separator");
    RankedList r;
    const char* p = line.data();
    auto parse = [&](const char* from, const char* to, auto& value) {
      const auto [next, ec] = std::from_chars(from, to, value);
      if (ec != std::errc())
        throw format_error(path.string() + ": line " + std::to_string(line_no) +
                           ": bad integer");
      return next;
    };
    parse(p, p + tab, r.query_id);
    const char* cur = p + tab + 1;
    const char* end = p + line.size();
    while (cur < end) {
      if (*cur == ' ') {
        ++cur;
        continue;
      }
      std::uint32_t idx = 0;
      cur = parse(cur, end, idx);
      r.order.push_back(idx);
    }
    out.push_back(std::move(r));
    ++line_no;
  }
  return out;
}

}  // namespace crr

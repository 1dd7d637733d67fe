#include "crr/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "binary_io.hpp"

namespace crr {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'C', 'B'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kRowChunk = 1024;

FeatureMatrix gather_columns(const FeatureMatrix& x, std::span<const std::uint32_t> cols) {
  FeatureMatrix sub = FeatureMatrix::zeros(x.rows, cols.size());
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto src = x.row(i);
    auto dst = sub.row(i);
    for (std::size_t d = 0; d < cols.size(); ++d) dst[d] = src[cols[d]];
  }
  return sub;
}

}  // namespace

SubspaceLayout make_layout(std::size_t d, std::size_t m, std::uint64_t seed,
                           std::size_t extra_subspaces) {
  if (m == 0) throw argument_error("make_layout: m must be >= 1");
  if (d == 0 || d % m != 0)
    throw argument_error("make_layout: dims " + std::to_string(d) +
                         " not divisible by m " + std::to_string(m));
  SubspaceLayout layout;
  layout.dims = d;
  layout.partition_count = m;
  layout.subspace_dim = d / m;
  layout.seed = seed;

  const std::size_t s_total = m + extra_subspaces;
  layout.channel_index.reserve(s_total * layout.subspace_dim);

  Rng rng(seed);
  std::vector<std::uint32_t> perm(d);
  std::size_t cursor = d;  // forces a fresh permutation on first use
  for (std::size_t s = 0; s < s_total; ++s) {
    if (cursor + layout.subspace_dim > d) {
      std::iota(perm.begin(), perm.end(), 0u);
      rng.shuffle(perm);
      cursor = 0;
    }
    layout.channel_index.insert(layout.channel_index.end(), perm.begin() + cursor,
                                perm.begin() + cursor + layout.subspace_dim);
    cursor += layout.subspace_dim;
  }
  return layout;
}

Codebook fit_codebook(const FeatureMatrix& x, const SubspaceLayout& layout,
                      std::size_t k, std::uint64_t seed, std::size_t max_iters,
                      double tol, std::size_t threads) {
  if (x.dims != layout.dims)
    throw argument_error("fit_codebook: feature dims " + std::to_string(x.dims) +
                         " do not match layout dims " + std::to_string(layout.dims));
  Codebook cb;
  cb.layout = layout;
  cb.k = k;
  cb.seed = seed;
  const std::size_t s_total = layout.subspace_count();
  cb.centroids.resize(s_total * k * layout.subspace_dim);
  for (std::size_t s = 0; s < s_total; ++s) {
    const FeatureMatrix sub = gather_columns(x, layout.channels(s));
    const KMeansResult fit =
        kmeans_fit(sub, k, derive_seed(seed, s), max_iters, tol, threads);
    float* dst = cb.centroids.data() + s * k * layout.subspace_dim;
    for (std::size_t v = 0; v < k * layout.subspace_dim; ++v)
      dst[v] = static_cast<float>(fit.model.centroids[v]);
  }
  return cb;
}

CodeMatrix encode(const Codebook& cb, const FeatureMatrix& x, std::size_t threads) {
  if (x.dims != cb.layout.dims)
    throw argument_error("encode: dimension mismatch");
  const std::size_t s_total = cb.layout.subspace_count();
  const std::size_t dstar = cb.layout.subspace_dim;
  CodeMatrix cm;
  cm.rows = x.rows;
  cm.subspaces = s_total;
  cm.codes.resize(x.rows * s_total);
  parallel_chunks(x.rows, kRowChunk, threads,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    std::vector<double> sub(dstar);
                    for (std::size_t i = begin; i < end; ++i) {
                      const auto row = x.row(i);
                      for (std::size_t s = 0; s < s_total; ++s) {
                        const auto cols = cb.layout.channels(s);
                        for (std::size_t d = 0; d < dstar; ++d) sub[d] = row[cols[d]];
                        double best = std::numeric_limits<double>::infinity();
                        std::uint32_t best_j = 0;
                        for (std::size_t j = 0; j < cb.k; ++j) {
                          const auto c = cb.centroid(s, j);
                          double acc = 0.0;
                          for (std::size_t d = 0; d < dstar; ++d) {
                            const double diff = sub[d] - c[d];
                            acc += diff * diff;
                          }
                          if (acc < best) {
                            best = acc;
                            best_j = static_cast<std::uint32_t>(j);
                          }
                        }
                        cm.codes[i * s_total + s] = best_j;
                      }
                    }
                  });
  return cm;
}

FeatureMatrix reconstruct(const Codebook& cb, const CodeMatrix& codes) {
  const std::size_t s_total = cb.layout.subspace_count();
  const std::size_t dstar = cb.layout.subspace_dim;
  if (codes.subspaces != s_total)
    throw argument_error("reconstruct: code matrix subspace count mismatch");
  for (std::uint32_t c : codes.codes)
    if (c >= cb.k)
      throw argument_error("reconstruct: code id " + std::to_string(c) +
                           " out of range (K=" + std::to_string(cb.k) + ")");

  // Coverage is a property of the layout: 1 everywhere for a pure partition.
  std::vector<std::uint32_t> coverage(cb.layout.dims, 0);
  for (std::uint32_t ch : cb.layout.channel_index) ++coverage[ch];

  FeatureMatrix out = FeatureMatrix::zeros(codes.rows, cb.layout.dims);
  std::vector<double> acc(cb.layout.dims);
  for (std::size_t i = 0; i < codes.rows; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t s = 0; s < s_total; ++s) {
      const auto cols = cb.layout.channels(s);
      const auto c = cb.centroid(s, codes.codes[i * s_total + s]);
      for (std::size_t d = 0; d < dstar; ++d) acc[cols[d]] += c[d];
    }
    auto dst = out.row(i);
    for (std::size_t ch = 0; ch < cb.layout.dims; ++ch)
      dst[ch] = static_cast<float>(acc[ch] / coverage[ch]);
  }
  return out;
}

void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
  detail::Writer w(path);
  w.magic(kMagic);
  w.u8(kVersion);
  w.u32(static_cast<std::uint32_t>(cb.layout.dims));
  w.u16(static_cast<std::uint16_t>(cb.layout.partition_count));
  w.u16(static_cast<std::uint16_t>(cb.layout.subspace_count()));
  w.u32(static_cast<std::uint32_t>(cb.k));
  w.u64(cb.seed);
  const std::size_t dstar = cb.layout.subspace_dim;
  for (std::size_t s = 0; s < cb.layout.subspace_count(); ++s) {
    w.u32(static_cast<std::uint32_t>(dstar));
    for (std::uint32_t ch : cb.layout.channels(s)) w.u32(ch);
    w.bytes(cb.centroids.data() + s * cb.k * dstar, cb.k * dstar * 4);
  }
  w.close();
}

Codebook load_codebook(const std::filesystem::path& path) {
  detail::Reader r(path);
  r.expect_magic(kMagic, "CRCB");
  const auto version = r.u8();
  if (version != kVersion)
    throw format_error(r.path() + ": unsupported CRCB version " + std::to_string(version));
  Codebook cb;
  cb.layout.dims = r.u32();
  cb.layout.partition_count = r.u16();
  const std::size_t s_total = r.u16();
  cb.k = r.u32();
  cb.seed = r.u64();
  cb.layout.seed = cb.seed;
  if (cb.layout.partition_count == 0 || s_total < cb.layout.partition_count ||
      cb.layout.dims == 0 || cb.layout.dims % cb.layout.partition_count != 0)
    throw format_error(r.path() + ": inconsistent CRCB geometry");
  cb.layout.subspace_dim = cb.layout.dims / cb.layout.partition_count;

  cb.layout.channel_index.reserve(s_total * cb.layout.subspace_dim);
  cb.centroids.resize(s_total * cb.k * cb.layout.subspace_dim);
  std::vector<bool> in_block(cb.layout.dims);
  for (std::size_t s = 0; s < s_total; ++s) {
    const std::uint32_t dstar = r.u32();
    if (dstar != cb.layout.subspace_dim)
      throw format_error(r.path() + ": subspace " + std::to_string(s) +
                         " has width " + std::to_string(dstar) + ", expected " +
                         std::to_string(cb.layout.subspace_dim));
    std::fill(in_block.begin(), in_block.end(), false);
    for (std::size_t d = 0; d < dstar; ++d) {
      const std::uint32_t ch = r.u32();
      if (ch >= cb.layout.dims)
        throw format_error(r.path() + ": channel index out of range");
      if (in_block[ch])
        throw format_error(r.path() + ": duplicate channel in subspace " +
                           std::to_string(s));
      in_block[ch] = true;
      cb.layout.channel_index.push_back(ch);
    }
    r.expect_remaining(cb.k * dstar * 4);
    r.bytes(cb.centroids.data() + s * cb.k * dstar, cb.k * dstar * 4);
  }
  r.expect_exhausted();

  // The first M blocks must partition the channels.
  std::vector<std::uint32_t> coverage(cb.layout.dims, 0);
  for (std::size_t s = 0; s < cb.layout.partition_count; ++s)
    for (std::uint32_t ch : cb.layout.channels(s)) ++coverage[ch];
  for (std::uint32_t c : coverage)
    if (c != 1)
      throw format_error(r.path() + ": first M subspaces do not partition channels");
  for (float v : cb.centroids)
    if (!std::isfinite(v)) throw format_error(r.path() + ": non-finite centroid");
  return cb;
}

Codebook codebook_from_kmeans(const KMeansModel& model, std::uint64_t seed) {
  Codebook cb;
  cb.layout.dims = model.dims;
  cb.layout.subspace_dim = model.dims;
  cb.layout.partition_count = 1;
  cb.layout.seed = seed;
  cb.layout.channel_index.resize(model.dims);
  std::iota(cb.layout.channel_index.begin(), cb.layout.channel_index.end(), 0u);
  cb.k = model.k;
  cb.seed = seed;
  cb.centroids.resize(model.centroids.size());
  for (std::size_t v = 0; v < model.centroids.size(); ++v)
    cb.centroids[v] = static_cast<float>(model.centroids[v]);
  return cb;
}

KMeansModel kmeans_from_codebook(const Codebook& cb) {
  if (cb.layout.subspace_count() != 1)
    throw argument_error("kmeans_from_codebook: codebook must have a single subspace");
  KMeansModel model;
  model.k = cb.k;
  model.dims = cb.layout.dims;
  model.seed = cb.seed;
  model.centroids.assign(cb.k * cb.layout.dims, 0.0);
  const auto cols = cb.layout.channels(0);
  for (std::size_t j = 0; j < cb.k; ++j) {
    const auto c = cb.centroid(0, j);
    for (std::size_t d = 0; d < cols.size(); ++d)
      model.centroids[j * model.dims + cols[d]] = c[d];
  }
  return model;
}

}  // namespace crr

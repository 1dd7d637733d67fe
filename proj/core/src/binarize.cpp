#include "crr/binarize.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "binary_io.hpp"

namespace crr {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'I', 'Q'};
constexpr std::uint8_t kVersion = 1;

Eigen::MatrixXd to_eigen(const FeatureMatrix& x) {
  Eigen::MatrixXd out(x.rows, x.dims);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = x.row(i);
    for (std::size_t d = 0; d < x.dims; ++d) out(i, d) = row[d];
  }
  return out;
}

// Seeded Gaussian matrix orthogonalized by QR, column signs fixed by the
// sign of R's diagonal.
Eigen::MatrixXd random_orthogonal(std::size_t b, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x17));
  Eigen::MatrixXd g(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) g(i, j) = rng.next_gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(b, b);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < b; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace

ItqModel itq_fit(const FeatureMatrix& x, std::size_t bits, std::size_t iters,
                 std::uint64_t seed) {
  if (bits == 0) throw argument_error("itq_fit: bits must be >= 1");
  if (bits > x.dims)
    throw argument_error("itq_fit: bits " + std::to_string(bits) +
                         " exceed feature dims " + std::to_string(x.dims));
  if (x.rows == 0) throw argument_error("itq_fit: empty training matrix");

  const std::size_t n = x.rows, dims = x.dims;
  Eigen::MatrixXd data = to_eigen(x);
  const Eigen::RowVectorXd mean = data.colwise().mean();
  data.rowwise() -= mean;

  const Eigen::MatrixXd cov = (data.transpose() * data) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw format_error("itq_fit: eigendecomposition failed");
  const Eigen::VectorXd evals = eig.eigenvalues();  // ascending
  const double lead = std::max(evals(dims - 1), 0.0);
  const double rank_tol =
      lead * static_cast<double>(std::max(n, dims)) * std::numeric_limits<double>::epsilon();
  std::size_t usable_rank = 0;
  for (Eigen::Index i = 0; i < evals.size(); ++i)
    if (evals(i) > rank_tol) ++usable_rank;
  if (usable_rank < bits)
    throw argument_error("itq_fit: covariance supports only " +
                         std::to_string(usable_rank) + " informative directions, " +
                         std::to_string(bits) + " bits requested");

  Eigen::MatrixXd projection(dims, bits);
  for (std::size_t b = 0; b < bits; ++b) {
    Eigen::VectorXd v = eig.eigenvectors().col(dims - 1 - b);  // descending order
    Eigen::Index peak = 0;
    v.cwiseAbs().maxCoeff(&peak);
    if (v(peak) < 0.0) v = -v;
    projection.col(b) = v;
  }

  const Eigen::MatrixXd v_mat = data * projection;  // N x B
  Eigen::MatrixXd rotation = random_orthogonal(bits, seed);

  ItqModel model;
  model.dims = dims;
  model.bits = bits;
  model.iters = iters;
  model.seed = seed;
  model.loss_trace.reserve(iters);

  for (std::size_t it = 0; it < iters; ++it) {
    const Eigen::MatrixXd z = v_mat * rotation;
    const Eigen::MatrixXd b_mat =
        z.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
    model.loss_trace.push_back((b_mat - z).squaredNorm());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(v_mat.transpose() * b_mat,
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
    rotation = svd.matrixU() * svd.matrixV().transpose();
  }

  model.mean.assign(mean.data(), mean.data() + dims);
  model.projection.resize(dims * bits);
  for (std::size_t i = 0; i < dims; ++i)
    for (std::size_t b = 0; b < bits; ++b)
      model.projection[i * bits + b] = projection(i, b);
  model.rotation.resize(bits * bits);
  for (std::size_t i = 0; i < bits; ++i)
    for (std::size_t j = 0; j < bits; ++j)
      model.rotation[i * bits + j] = rotation(i, j);
  return model;
}

BinaryCodeMatrix itq_encode(const ItqModel& model, const FeatureMatrix& x,
                            std::size_t threads) {
  if (x.dims != model.dims)
    throw argument_error("itq_encode: dimension mismatch");
  const std::size_t bits = model.bits, dims = model.dims;
  BinaryCodeMatrix out = BinaryCodeMatrix::zeros(x.rows, static_cast<std::uint32_t>(bits));
  const std::size_t wpr = out.words_per_row();
  parallel_chunks(x.rows, 256, threads,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    std::vector<double> centered(dims), projected(bits);
                    for (std::size_t i = begin; i < end; ++i) {
                      const auto row = x.row(i);
                      for (std::size_t d = 0; d < dims; ++d)
                        centered[d] = static_cast<double>(row[d]) - model.mean[d];
                      for (std::size_t b = 0; b < bits; ++b) {
                        double acc = 0.0;
                        for (std::size_t d = 0; d < dims; ++d)
                          acc += centered[d] * model.projection[d * bits + b];
                        projected[b] = acc;
                      }
                      std::uint64_t* words = out.words.data() + i * wpr;
                      for (std::size_t b = 0; b < bits; ++b) {
                        double acc = 0.0;
                        for (std::size_t r = 0; r < bits; ++r)
                          acc += projected[r] * model.rotation[r * bits + b];
                        if (acc >= 0.0)  // sign(0) -> 1 for determinism
                          words[b / 64u] |= std::uint64_t{1} << (b % 64u);
                      }
                    }
                  });
  return out;
}

std::uint64_t hamming_distance(std::span<const std::uint64_t> a,
                               std::span<const std::uint64_t> b) {
  std::uint64_t sum = 0;
  for (std::size_t w = 0; w < a.size(); ++w) sum += std::popcount(a[w] ^ b[w]);
  return sum;
}

RankedList hamming_rank(std::span<const std::uint64_t> q_words, std::uint32_t bits,
                        const BinaryCodeMatrix& gallery, std::size_t query_id) {
  if (bits != gallery.bits)
    throw argument_error("hamming_rank: code width mismatch");
  if (q_words.size() != gallery.words_per_row())
    throw argument_error("hamming_rank: word count mismatch");
  std::vector<std::uint64_t> dist(gallery.rows);
  for (std::size_t i = 0; i < gallery.rows; ++i)
    dist[i] = hamming_distance(q_words, gallery.row_words(i));
  RankedList out;
  out.query_id = query_id;
  out.order.resize(gallery.rows);
  for (std::size_t i = 0; i < gallery.rows; ++i)
    out.order[i] = static_cast<std::uint32_t>(i);
  std::sort(out.order.begin(), out.order.end(),
            [&](std::uint32_t a, std::uint32_t b) {
              if (dist[a] != dist[b]) return dist[a] < dist[b];
              return a < b;
            });
  std::vector<double> d(gallery.rows);
  for (std::size_t r = 0; r < gallery.rows; ++r)
    d[r] = static_cast<double>(dist[out.order[r]]);
  out.distances = std::move(d);
  return out;
}

std::vector<RankedList> hamming_rank_all(const BinaryCodeMatrix& queries,
                                         const BinaryCodeMatrix& gallery,
                                         std::size_t threads) {
  std::vector<RankedList> out(queries.rows);
  parallel_chunks(queries.rows, 1, threads,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i)
                      out[i] = hamming_rank(queries.row_words(i), queries.bits, gallery, i);
                  });
  return out;
}

void save_itq_model(const ItqModel& model, const std::filesystem::path& path) {
  detail::Writer w(path);
  w.magic(kMagic);
  w.u8(kVersion);
  w.u32(static_cast<std::uint32_t>(model.dims));
  w.u32(static_cast<std::uint32_t>(model.bits));
  w.u32(static_cast<std::uint32_t>(model.iters));
  w.u64(model.seed);
  w.bytes(model.mean.data(), model.mean.size() * 8);
  w.bytes(model.projection.data(), model.projection.size() * 8);
  w.bytes(model.rotation.data(), model.rotation.size() * 8);
  w.close();
}

ItqModel load_itq_model(const std::filesystem::path& path) {
  detail::Reader r(path);
  r.expect_magic(kMagic, "CRIQ");
  const auto version = r.u8();
  if (version != kVersion)
    throw format_error(r.path() + ": unsupported CRIQ version " + std::to_string(version));
  ItqModel m;
  m.dims = r.u32();
  m.bits = r.u32();
  m.iters = r.u32();
  m.seed = r.u64();
  if (m.bits == 0 || m.bits > m.dims)
    throw format_error(r.path() + ": inconsistent CRIQ geometry");
  r.expect_remaining((m.dims + m.dims * m.bits + m.bits * m.bits) * 8);
  m.mean.resize(m.dims);
  r.bytes(m.mean.data(), m.mean.size() * 8);
  m.projection.resize(m.dims * m.bits);
  r.bytes(m.projection.data(), m.projection.size() * 8);
  m.rotation.resize(m.bits * m.bits);
  r.bytes(m.rotation.data(), m.rotation.size() * 8);
  r.expect_exhausted();
  for (double v : m.mean)
    if (!std::isfinite(v)) throw format_error(r.path() + ": non-finite mean");
  for (double v : m.projection)
    if (!std::isfinite(v)) throw format_error(r.path() + ": non-finite projection");
  for (double v : m.rotation)
    if (!std::isfinite(v)) throw format_error(r.path() + ": non-finite rotation");
  return m;
}

}  // namespace crr

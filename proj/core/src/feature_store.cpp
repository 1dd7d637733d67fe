#include "crr/feature_store.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "binary_io.hpp"

namespace crr {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'F', 'T'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kDtypeBits = 2;

// Header: magic(4) version(u8) dtype(u8) reserved(u16=0) dims(u32) rows(u64).
void write_header(detail::Writer& w, std::uint8_t dtype, std::uint32_t dims,
                  std::uint64_t rows) {
  w.magic(kMagic);
  w.u8(kVersion);
  w.u8(dtype);
  w.u16(0);
  w.u32(dims);
  w.u64(rows);
}

struct Header {
  std::uint8_t dtype;
  std::uint32_t dims;
  std::uint64_t rows;
};

Header read_header(detail::Reader& r) {
  r.expect_magic(kMagic, "CRFT");
  const auto version = r.u8();
  if (version != kVersion)
    throw format_error(r.path() + ": unsupported CRFT version " +
                       std::to_string(version));
  Header h{};
  h.dtype = r.u8();
  if (h.dtype != kDtypeF32 && h.dtype != kDtypeBits)
    throw format_error(r.path() + ": unknown dtype " + std::to_string(h.dtype));
  if (r.u16() != 0)
    throw format_error(r.path() + ": reserved header bytes are nonzero");
  h.dims = r.u32();
  h.rows = r.u64();
  return h;
}

void check_finite(const FeatureMatrix& m, const std::string& origin) {
  for (std::size_t i = 0; i < m.rows; ++i)
    for (float v : m.row(i))
      if (!std::isfinite(v))
        throw format_error(origin + ": non-finite value in row " +
                           std::to_string(i));
}

FeatureMatrix load_crft(const std::filesystem::path& path) {
  detail::Reader r(path);
  const Header h = read_header(r);
  if (h.dtype != kDtypeF32)
    throw format_error(r.path() + ": expected dtype f32, file holds packed bits");
  FeatureMatrix m;
  m.rows = static_cast<std::size_t>(h.rows);
  m.dims = h.dims;
  r.expect_remaining(h.rows * h.dims * 4);
  m.data.resize(m.rows * m.dims);
  if (!m.data.empty()) r.bytes(m.data.data(), m.data.size() * 4);
  r.expect_exhausted();
  check_finite(m, r.path());
  return m;
}

FeatureMatrix load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw format_error(path.string() + ": cannot open");
  FeatureMatrix m;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::ifstream::traits_type::eof()) break;
    std::size_t count = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (true) {
      float v = 0.0f;
      const auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc())
        throw format_error(path.string() + ": row " + std::to_string(row) +
                           ": cannot parse value " + std::to_string(count));
      m.data.push_back(v);
      ++count;
      p = next;
      if (p == end) break;
      if (*p != ',')
        throw format_error(path.string() + ": row " + std::to_string(row) +
                           ": expected ',' after value " + std::to_string(count - 1));
      ++p;
    }
    if (row == 0) {
      m.dims = count;
    } else if (count != m.dims) {
      throw format_error(path.string() + ": row " + std::to_string(row) +
                         ": ragged row (" + std::to_string(count) + " values, expected " +
                         std::to_string(m.dims) + ")");
    }
    ++row;
  }
  if (row == 0) throw format_error(path.string() + ": empty CSV");
  m.rows = row;
  check_finite(m, path.string());
  return m;
}

}  // namespace

std::uint32_t LabelList::intern(const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<std::uint32_t>(i);
  names.push_back(name);
  return static_cast<std::uint32_t>(names.size() - 1);
}

FeatureFormat parse_feature_format(const std::string& name) {
  if (name == "crft") return FeatureFormat::crft;
  if (name == "csv") return FeatureFormat::csv;
  throw argument_error("unknown feature format '" + name + "' (use crft or csv)");
}

FeatureMatrix load_features(const std::filesystem::path& path, FeatureFormat format) {
  return format == FeatureFormat::crft ? load_crft(path) : load_csv(path);
}

void save_features(const FeatureMatrix& m, const std::filesystem::path& path,
                   FeatureFormat format) {
  if (m.data.size() != m.rows * m.dims)
    throw argument_error("feature matrix data length disagrees with rows x dims");
  if (format == FeatureFormat::crft) {
    detail::Writer w(path);
    write_header(w, kDtypeF32, static_cast<std::uint32_t>(m.dims), m.rows);
    if (!m.data.empty()) w.bytes(m.data.data(), m.data.size() * 4);
    w.close();
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw format_error(path.string() + ": cannot open for writing");
  char buf[64];
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto row = m.row(i);
    for (std::size_t d = 0; d < m.dims; ++d) {
      // %.9g is round-trippable for binary32.
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(row[d]));
      if (d) out << ',';
      out << buf;
    }
    out << '\n';
  }
  out.close();
  if (!out) throw format_error(path.string() + ": write failed");
}

BinaryCodeMatrix load_codes(const std::filesystem::path& path) {
  detail::Reader r(path);
  const Header h = read_header(r);
  if (h.dtype != kDtypeBits)
    throw format_error(r.path() + ": expected dtype packed-bits, file holds f32");
  BinaryCodeMatrix m = BinaryCodeMatrix::zeros(static_cast<std::size_t>(h.rows), h.dims);
  r.expect_remaining(h.rows * m.words_per_row() * 8);
  if (!m.words.empty()) r.bytes(m.words.data(), m.words.size() * 8);
  r.expect_exhausted();
  if (m.bits % 64u != 0) {
    const std::uint64_t pad_mask = ~((std::uint64_t{1} << (m.bits % 64u)) - 1);
    const std::size_t wpr = m.words_per_row();
    for (std::size_t i = 0; i < m.rows; ++i)
      if (m.words[i * wpr + wpr - 1] & pad_mask)
        throw format_error(r.path() + ": nonzero pad bits in row " + std::to_string(i));
  }
  return m;
}

void save_codes(const BinaryCodeMatrix& m, const std::filesystem::path& path) {
  if (m.words.size() != m.rows * m.words_per_row())
    throw argument_error("code matrix word count disagrees with rows");
  detail::Writer w(path);
  write_header(w, kDtypeBits, m.bits, m.rows);
  if (!m.words.empty()) w.bytes(m.words.data(), m.words.size() * 8);
  w.close();
}

LabelList load_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = std::move(ss).str();
  if (text.empty()) throw format_error(path.string() + ": empty label file");

  LabelList out;
  std::unordered_map<std::string, std::uint32_t> seen;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      if (start == text.size()) break;  // file ended with the final LF
      nl = text.size();
    }
    std::string label = text.substr(start, nl - start);
    if (!label.empty() && label.back() == '\r') label.pop_back();
    auto [it, inserted] = seen.emplace(label, static_cast<std::uint32_t>(out.names.size()));
    if (inserted) out.names.push_back(label);
    out.ids.push_back(it->second);
    start = nl + 1;
  }
  if (out.ids.empty()) throw format_error(path.string() + ": empty label file");
  return out;
}

void save_labels(const LabelList& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw format_error(path.string() + ": cannot open for writing");
  for (std::uint32_t id : labels.ids) out << labels.names[id] << '\n';
  out.close();
  if (!out) throw format_error(path.string() + ": write failed");
}

NormalizeResult l2_normalize(const FeatureMatrix& m) {
  NormalizeResult res;
  res.features = m;
  for (std::size_t i = 0; i < m.rows; ++i) {
    double sq = 0.0;
    for (float v : m.row(i)) sq += static_cast<double>(v) * v;
    if (sq == 0.0) {
      ++res.zero_rows;
      continue;
    }
    const double norm = std::sqrt(sq);
    // Unit-norm rows pass through untouched so the transform is idempotent.
    if (std::abs(norm - 1.0) <= 0x1.0p-22) continue;
    auto row = res.features.row(i);
    for (std::size_t d = 0; d < m.dims; ++d)
      row[d] = static_cast<float>(static_cast<double>(row[d]) / norm);
  }
  return res;
}

}  // namespace crr

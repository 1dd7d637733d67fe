#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crr/common.hpp"

namespace crr {

/// N x D dense feature rows. 32-bit storage; all distance math accumulates
/// in 64-bit. Immutable after construction by convention: loaders and
/// transforms return fresh matrices, so instances are safe to share
/// read-only across worker threads.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dims = 0;
  std::vector<float> data;  // row-major, rows * dims

  static FeatureMatrix zeros(std::size_t rows, std::size_t dims) {
    return FeatureMatrix{rows, dims, std::vector<float>(rows * dims, 0.0f)};
  }

  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * dims, dims};
  }
  std::span<float> row(std::size_t i) {
    return {data.data() + i * dims, dims};
  }

  bool operator==(const FeatureMatrix&) const = default;
};

/// Labels interned to dense ids in order of first appearance.
struct LabelList {
  std::vector<std::uint32_t> ids;   // one per row
  std::vector<std::string> names;   // id -> original label

  std::size_t size() const { return ids.size(); }
  std::size_t class_count() const { return names.size(); }

  /// Interns `name`, assigning the next id on first sight.
  std::uint32_t intern(const std::string& name);

  bool operator==(const LabelList&) const = default;
};

/// N rows of B bits, packed LSB-first into 64-bit words; pad bits are zero.
struct BinaryCodeMatrix {
  std::size_t rows = 0;
  std::uint32_t bits = 0;
  std::vector<std::uint64_t> words;  // rows * words_per_row()

  std::size_t words_per_row() const { return (bits + 63u) / 64u; }

  static BinaryCodeMatrix zeros(std::size_t rows, std::uint32_t bits) {
    BinaryCodeMatrix m{rows, bits, {}};
    m.words.assign(rows * m.words_per_row(), 0);
    return m;
  }

  std::span<const std::uint64_t> row_words(std::size_t i) const {
    return {words.data() + i * words_per_row(), words_per_row()};
  }

  bool get(std::size_t row, std::uint32_t bit) const {
    return (words[row * words_per_row() + bit / 64u] >> (bit % 64u)) & 1u;
  }
  void set(std::size_t row, std::uint32_t bit) {
    words[row * words_per_row() + bit / 64u] |= std::uint64_t{1} << (bit % 64u);
  }

  bool operator==(const BinaryCodeMatrix&) const = default;
};

enum class FeatureFormat { crft, csv };

/// Parses "crft" / "csv"; anything else is an argument_error.
FeatureFormat parse_feature_format(const std::string& name);

/// Loads a feature matrix. CRFT files must carry dtype f32; CSV rows are
/// comma-separated decimal reals of equal length. Non-finite values, bad
/// magic, version or dtype mismatches, truncated or oversized payloads and
/// ragged CSV rows are rejected with the offending row where applicable.
FeatureMatrix load_features(const std::filesystem::path& path, FeatureFormat format);

/// Writes the CRFT binary layout (bit-exact) or CSV with round-trippable
/// decimal formatting.
void save_features(const FeatureMatrix& m, const std::filesystem::path& path,
                   FeatureFormat format = FeatureFormat::crft);

/// Packed bit matrices ride the same container with dtype=2.
BinaryCodeMatrix load_codes(const std::filesystem::path& path);
void save_codes(const BinaryCodeMatrix& m, const std::filesystem::path& path);

/// One UTF-8 label per LF-terminated line; ids assigned by first appearance.
LabelList load_labels(const std::filesystem::path& path);
void save_labels(const LabelList& labels, const std::filesystem::path& path);

struct NormalizeResult {
  FeatureMatrix features;
  std::size_t zero_rows = 0;  // rows left untouched because their norm is 0
};

/// Scales each row to unit Euclidean norm. Rows already within one part in
/// 2^22 of unit norm are returned unchanged, which makes the operation
/// exactly idempotent; zero rows stay zero and are counted.
NormalizeResult l2_normalize(const FeatureMatrix& m);

}  // namespace crr

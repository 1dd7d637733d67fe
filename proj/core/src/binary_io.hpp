#pragma once

// Little-endian primitive I/O shared by the CRFT/CRCB/CRIQ/CRTE writers.
// Build-internal; not installed.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "crr/common.hpp"

namespace crr::detail {

static_assert(std::endian::native == std::endian::little,
              "file writers assume a little-endian host");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path.string()), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw format_error(path_ + ": cannot open for writing");
  }

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void magic(const char m[4]) { bytes(m, 4); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }

  void close() {
    out_.close();
    if (!out_) throw format_error(path_ + ": write failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : path_(path.string()), in_(path, std::ios::binary) {
    if (!in_) throw format_error(path_ + ": cannot open");
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }

  std::uint64_t file_size() const { return size_; }
  std::uint64_t consumed() const { return consumed_; }
  const std::string& path() const { return path_; }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw format_error(path_ + ": truncated payload");
    consumed_ += n;
  }

  void expect_magic(const char m[4], const char* what) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, m, 4) != 0)
      throw format_error(path_ + ": bad magic (not a " + what + " file)");
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  float f32() { float v; bytes(&v, 4); return v; }
  double f64() { double v; bytes(&v, 8); return v; }

  /// Declared sizes must account for every byte in the file.
  void expect_exhausted() {
    if (consumed_ != size_)
      throw format_error(path_ + ": payload size disagrees with header (" +
                         std::to_string(size_ - consumed_) + " trailing bytes)");
  }

  /// Call before bulk reads so an absurd header fails fast instead of
  /// attempting a huge allocation.
  void expect_remaining(std::uint64_t n) {
    if (size_ - consumed_ < n)
      throw format_error(path_ + ": truncated payload");
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::uint64_t size_ = 0;
  std::uint64_t consumed_ = 0;
};

}  // namespace crr::detail

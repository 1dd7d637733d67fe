#include <doctest.h>

#include <cstring>
#include <fstream>

#include "crr/feature_store.hpp"
#include "support/oracles.hpp"

using namespace crr;

namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("crft zero matrix loads back") {
  oracle::TempDir tmp;
  const auto m = FeatureMatrix::zeros(2, 3);
  save_features(m, tmp / "z.crft");
  const auto back = load_features(tmp / "z.crft", FeatureFormat::crft);
  CHECK(back.rows == 2);
  CHECK(back.dims == 3);
  for (float v : back.data) CHECK(v == 0.0f);
}

TEST_CASE("crft byte layout is pinned") {
  oracle::TempDir tmp;
  FeatureMatrix m{1, 1, {0.0f}};
  save_features(m, tmp / "a.crft");
  auto bytes = slurp(tmp / "a.crft");
  REQUIRE(bytes.size() == 24);  // 20-byte header + 4 payload bytes
  CHECK(std::memcmp(bytes.data(), "CRFT", 4) == 0);
  CHECK(bytes[4] == 1);  // version
  CHECK(bytes[5] == 1);  // dtype f32
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);
  CHECK(bytes[8] == 1);  // dims u32 le
  CHECK(bytes[12] == 1);  // rows u64 le
  CHECK(bytes[20] == 0);
  CHECK(bytes[21] == 0);
  CHECK(bytes[22] == 0);
  CHECK(bytes[23] == 0);

  m.data[0] = 1.0f;
  save_features(m, tmp / "b.crft");
  bytes = slurp(tmp / "b.crft");
  CHECK(bytes[20] == 0x00);
  CHECK(bytes[21] == 0x00);
  CHECK(bytes[22] == 0x80);
  CHECK(bytes[23] == 0x3f);
}

TEST_CASE("crft roundtrip is bit-exact") {
  oracle::TempDir tmp;
  const auto m = oracle::random_matrix(7, 5, 42);
  save_features(m, tmp / "m.crft");
  const auto once = slurp(tmp / "m.crft");
  const auto back = load_features(tmp / "m.crft", FeatureFormat::crft);
  CHECK(back == m);
  save_features(back, tmp / "m2.crft");
  CHECK(slurp(tmp / "m2.crft") == once);
}

TEST_CASE("crft rejects bad magic, version, truncation, trailing bytes, nan") {
  oracle::TempDir tmp;
  const FeatureMatrix m{1, 2, {1.0f, 2.0f}};
  save_features(m, tmp / "m.crft");
  auto good = slurp(tmp / "m.crft");

  auto bad = good;
  bad[0] = 'X';
  spit(tmp / "bad.crft", bad);
  CHECK_THROWS_WITH_AS(load_features(tmp / "bad.crft", FeatureFormat::crft),
                       doctest::Contains("bad magic"), format_error);

  bad = good;
  bad[4] = 9;
  spit(tmp / "ver.crft", bad);
  CHECK_THROWS_AS(load_features(tmp / "ver.crft", FeatureFormat::crft), format_error);

  bad = good;
  bad.pop_back();
  spit(tmp / "trunc.crft", bad);
  CHECK_THROWS_WITH_AS(load_features(tmp / "trunc.crft", FeatureFormat::crft),
                       doctest::Contains("truncated"), format_error);

  bad = good;
  bad.push_back(0);
  spit(tmp / "extra.crft", bad);
  CHECK_THROWS_AS(load_features(tmp / "extra.crft", FeatureFormat::crft), format_error);

  bad = good;
  bad[20] = bad[21] = bad[22] = bad[23] = 0xff;  // -nan
  spit(tmp / "nan.crft", bad);
  CHECK_THROWS_WITH_AS(load_features(tmp / "nan.crft", FeatureFormat::crft),
                       doctest::Contains("non-finite"), format_error);
}

TEST_CASE("csv parses, rejects ragged rows, roundtrips values") {
  oracle::TempDir tmp;
  {
    std::ofstream out(tmp / "ok.csv");
    out << "1.5,-2,3e-2\n0.25,0,1e4\n";
  }
  const auto m = load_features(tmp / "ok.csv", FeatureFormat::csv);
  CHECK(m.rows == 2);
  CHECK(m.dims == 3);
  CHECK(m.data[0] == 1.5f);
  CHECK(m.data[5] == 10000.0f);

  {
    std::ofstream out(tmp / "ragged.csv");
    out << "1,2\n3\n";
  }
  CHECK_THROWS_WITH_AS(load_features(tmp / "ragged.csv", FeatureFormat::csv),
                       doctest::Contains("row 1"), format_error);

  const auto r = oracle::random_matrix(4, 3, 7);
  save_features(r, tmp / "r.csv", FeatureFormat::csv);
  CHECK(load_features(tmp / "r.csv", FeatureFormat::csv) == r);
}

TEST_CASE("labels intern by first appearance") {
  oracle::TempDir tmp;
  {
    std::ofstream out(tmp / "l.txt");
    out << "cat\ndog\ncat\n";
  }
  const auto labels = load_labels(tmp / "l.txt");
  CHECK(labels.ids == std::vector<std::uint32_t>{0, 1, 0});
  CHECK(labels.class_count() == 2);
  CHECK(labels.names[0] == "cat");

  {
    std::ofstream out(tmp / "many.txt");
    for (int i = 0; i < 25; ++i) out << "c" << i << "\n";
  }
  CHECK(load_labels(tmp / "many.txt").class_count() == 25);

  std::ofstream(tmp / "empty.txt");
  CHECK_THROWS_AS(load_labels(tmp / "empty.txt"), format_error);
}

TEST_CASE("labels roundtrip") {
  oracle::TempDir tmp;
  LabelList l;
  l.ids = {0, 1, 1, 2, 0};
  l.names = {"ant", "bee", "cow"};
  save_labels(l, tmp / "l.txt");
  CHECK(load_labels(tmp / "l.txt") == l);
}

TEST_CASE("l2_normalize basics") {
  FeatureMatrix m{3, 2, {3.0f, 4.0f, 0.0f, 0.0f, 0.6f, 0.8f}};
  const auto res = l2_normalize(m);
  CHECK(res.features.data[0] == doctest::Approx(0.6).epsilon(1e-7));
  CHECK(res.features.data[1] == doctest::Approx(0.8).epsilon(1e-7));
  CHECK(res.features.data[2] == 0.0f);
  CHECK(res.features.data[3] == 0.0f);
  CHECK(res.zero_rows == 1);
  // already-unit row untouched
  CHECK(res.features.data[4] == 0.6f);
  CHECK(res.features.data[5] == 0.8f);
}

TEST_CASE("l2_normalize is exactly idempotent on random rows") {
  const auto m = oracle::random_matrix(40, 9, 99, 3.0);
  const auto once = l2_normalize(m).features;
  const auto twice = l2_normalize(once).features;
  CHECK(twice == once);
}

TEST_CASE("packed code matrix roundtrips and validates pad bits") {
  oracle::TempDir tmp;
  auto codes = BinaryCodeMatrix::zeros(3, 70);
  codes.set(0, 0);
  codes.set(1, 64);
  codes.set(2, 69);
  save_codes(codes, tmp / "c.crft");
  CHECK(load_codes(tmp / "c.crft") == codes);

  // Corrupt a pad bit beyond bit 69.
  auto bytes = slurp(tmp / "c.crft");
  bytes[bytes.size() - 1] |= 0x80;
  spit(tmp / "pad.crft", bytes);
  CHECK_THROWS_WITH_AS(load_codes(tmp / "pad.crft"), doctest::Contains("pad"),
                       format_error);

  // dtype mismatch both ways
  CHECK_THROWS_AS(load_features(tmp / "c.crft", FeatureFormat::crft), format_error);
  const auto m = FeatureMatrix::zeros(1, 1);
  save_features(m, tmp / "f.crft");
  CHECK_THROWS_AS(load_codes(tmp / "f.crft"), format_error);
}

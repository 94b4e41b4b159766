#include <algorithm>
#include <vector>

#include "doctest.h"
#include "dctx/blockdct.hpp"
#include "dctx/error.hpp"
#include "dctx/jfif.hpp"
#include "support/oracles.hpp"

using namespace dctx;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected dctx::Error");
  return ErrorKind::Io;
}

}  // namespace

TEST_SUITE("jfif") {

TEST_CASE("zigzag tables are mutually inverse and start 0, 1, 8, 16, 9") {
  const auto& z2r = zigzag_to_raster();
  const auto& r2z = raster_to_zigzag();
  for (int i = 0; i < 64; ++i) CHECK(r2z[z2r[i]] == i);
  CHECK(z2r[0] == 0);
  CHECK(z2r[1] == 1);
  CHECK(z2r[2] == 8);
  CHECK(z2r[3] == 16);
  CHECK(z2r[4] == 9);
  CHECK(z2r[63] == 63);
}

TEST_CASE("encode then parse is the identity for gray, 4:4:4 and 4:2:0") {
  Rng rng(3);
  for (int kind = 0; kind < 3; ++kind)
    for (int trial = 0; trial < 10; ++trial) {
      const QuantizedImage q = oracle::random_quantized(rng, kind);
      const auto bytes = encode_jpeg(q);
      REQUIRE(bytes.size() > 4);
      CHECK(bytes[0] == 0xFF);
      CHECK(bytes[1] == 0xD8);
      CHECK(bytes[bytes.size() - 2] == 0xFF);
      CHECK(bytes.back() == 0xD9);
      CHECK(parse_jpeg(bytes) == q);
    }
}

TEST_CASE("encoding is deterministic") {
  Rng rng(5);
  const QuantizedImage q = oracle::random_quantized(rng, 2);
  CHECK(encode_jpeg(q) == encode_jpeg(q));
}

TEST_CASE("APPn and COM segments are skipped") {
  Rng rng(9);
  const QuantizedImage q = oracle::random_quantized(rng, 1);
  auto bytes = encode_jpeg(q);
  const std::vector<std::uint8_t> extra = {0xFF, 0xFE, 0x00, 0x07, 'h', 'e', 'l', 'l', 'o',
                                           0xFF, 0xE5, 0x00, 0x04, 0x01, 0x02};
  bytes.insert(bytes.begin() + 2, extra.begin(), extra.end());
  CHECK(parse_jpeg(bytes) == q);
}

TEST_CASE("stuffed 0xFF bytes survive the round trip") {
  // large alternating coefficients produce 0xFF bytes in the entropy stream
  QuantizedImage q;
  q.height = q.width = 16;
  q.quant_tables.push_back(QuantTable{});
  q.quant_tables[0].fill(1);
  Component c;
  c.id = 1;
  c.plane = IntPlane(16, 16);
  for (std::size_t i = 0; i < c.plane.size(); ++i) c.plane.data[i] = (i % 2 ? 1023 : -1023) / (1 + static_cast<int>(i % 5));
  for (int by = 0; by < 2; ++by)
    for (int bx = 0; bx < 2; ++bx) c.plane(8 * by, 8 * bx) = 500;
  q.components.push_back(c);
  const auto bytes = encode_jpeg(q);
  bool stuffed = false;
  for (std::size_t i = 0; i + 1 < bytes.size(); ++i) stuffed |= bytes[i] == 0xFF && bytes[i + 1] == 0x00;
  CHECK(stuffed);
  CHECK(parse_jpeg(bytes) == q);
}

TEST_CASE("coefficients outside the baseline range are rejected") {
  Rng rng(1);
  QuantizedImage q = oracle::random_quantized(rng, 0);
  q.components[0].plane(0, 1) = 5000;
  CHECK(kind_of([&] { encode_jpeg(q); }) == ErrorKind::RangeOverflow);
}

TEST_CASE("structural errors") {
  Rng rng(2);
  const QuantizedImage q = oracle::random_quantized(rng, 2);
  const auto good = encode_jpeg(q);

  SUBCASE("missing SOI") {
    std::vector<std::uint8_t> b(good.begin() + 2, good.end());
    CHECK(kind_of([&] { parse_jpeg(b); }) == ErrorKind::MissingMarker);
  }
  SUBCASE("progressive frame") {
    auto b = good;
    for (std::size_t i = 0; i + 1 < b.size(); ++i)
      if (b[i] == 0xFF && b[i + 1] == 0xC0) {
        b[i + 1] = 0xC2;
        break;
      }
    CHECK(kind_of([&] { parse_jpeg(b); }) == ErrorKind::UnsupportedProcess);
  }
  SUBCASE("truncated entropy data") {
    std::vector<std::uint8_t> b(good.begin(), good.begin() + static_cast<long>(good.size() * 3 / 4));
    CHECK(kind_of([&] { parse_jpeg(b); }) == ErrorKind::CorruptEntropyStream);
  }
  SUBCASE("unsupported sampling factors") {
    auto b = good;
    for (std::size_t i = 0; i + 1 < b.size(); ++i)
      if (b[i] == 0xFF && b[i + 1] == 0xC0) {
        b[i + 11] = 0x21;  // first component 2x1
        break;
      }
    CHECK(kind_of([&] { parse_jpeg(b); }) == ErrorKind::UnsupportedSampling);
  }
  SUBCASE("empty input") {
    CHECK(kind_of([&] { parse_jpeg(std::vector<std::uint8_t>{}); }) == ErrorKind::MissingMarker);
  }
}

TEST_CASE("validate rejects planes that do not match the frame") {
  Rng rng(4);
  QuantizedImage q = oracle::random_quantized(rng, 2);
  q.components[1].plane = IntPlane(8, 8);
  q.height = q.width = 40;
  CHECK(kind_of([&] { validate(q); }) == ErrorKind::BadDims);
}

TEST_CASE("compressed images survive the codec unchanged") {
  Rng rng(8);
  const PixelImage img = oracle::random_rgb(rng, 37, 29);
  for (auto s : {Subsampling::S444, Subsampling::S420}) {
    const QuantizedImage q = compress(img, 60, s);
    CHECK(parse_jpeg(encode_jpeg(q)) == q);
  }
}

}  // TEST_SUITE

#include <doctest.h>

#include <random>

#include <zlib.h>

#include "vfcbf/raster.hpp"

using namespace vfcbf;

namespace {

std::vector<std::uint8_t> noise(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> b(0, 255);
  std::vector<std::uint8_t> v(n);
  for (auto& x : v) x = static_cast<std::uint8_t>(b(rng));
  return v;
}

std::uint32_t be32(const std::vector<std::uint8_t>& v, std::size_t at) {
  return (std::uint32_t{v[at]} << 24) | (std::uint32_t{v[at + 1]} << 16) | (std::uint32_t{v[at + 2]} << 8) | v[at + 3];
}

}  // namespace

TEST_CASE("base64 known vectors") {
  const auto bytes = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
  CHECK(base64_encode({}) == "");
  CHECK(base64_encode(bytes("f")) == "Zg==");
  CHECK(base64_encode(bytes("fo")) == "Zm8=");
  CHECK(base64_encode(bytes("foo")) == "Zm9v");
  CHECK(base64_encode(bytes("foobar")) == "Zm9vYmFy");
  CHECK(base64_decode("Zm9vYg==") == bytes("foob"));
  CHECK_THROWS(base64_decode("Zm9*"));
}

TEST_CASE("base64 round-trips arbitrary bytes") {
  for (std::size_t n = 0; n < 70; ++n) {
    const auto v = noise(n, static_cast<unsigned>(n));
    CHECK(base64_decode(base64_encode(v)) == v);
  }
}

TEST_CASE("PNG round-trips gray and RGB") {
  for (int channels : {1, 3}) {
    for (auto [w, h] : {std::pair{1, 1}, std::pair{64, 64}, std::pair{17, 5}}) {
      const auto px = noise(static_cast<std::size_t>(w * h * channels), 3u + channels);
      const auto png = encode_png(w, h, channels, px);
      int dw = 0, dh = 0, dc = 0;
      CHECK(decode_png(png, dw, dh, dc) == px);
      CHECK(dw == w);
      CHECK(dh == h);
      CHECK(dc == channels);
    }
  }
  CHECK_THROWS_AS(encode_png(2, 2, 3, std::vector<std::uint8_t>(11)), std::invalid_argument);
  CHECK_THROWS_AS(encode_png(2, 2, 2, std::vector<std::uint8_t>(8)), std::invalid_argument);
}

TEST_CASE("PNG container is well formed") {
  const auto png = encode_png(3, 2, 3, noise(18, 1));
  const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  REQUIRE(png.size() > 8);
  CHECK(std::equal(sig, sig + 8, png.begin()));
  // Every chunk's CRC covers its type and data.
  std::size_t at = 8;
  std::vector<std::string> types;
  while (at + 12 <= png.size()) {
    const std::uint32_t len = be32(png, at);
    types.emplace_back(png.begin() + at + 4, png.begin() + at + 8);
    const std::uint32_t crc = static_cast<std::uint32_t>(crc32(0L, png.data() + at + 4, len + 4));
    CHECK(be32(png, at + 8 + len) == crc);
    at += 12 + len;
  }
  CHECK(at == png.size());
  REQUIRE(types.size() >= 3);
  CHECK(types.front() == "IHDR");
  CHECK(types.back() == "IEND");
  CHECK(be32(png, 16) == 3);
  CHECK(be32(png, 20) == 2);
}

TEST_CASE("depth preview: near is bright and downsampling averages") {
  RgbdImage img(4, 2, 10.0);
  img.depth(0, 0) = 0.0;
  img.depth(0, 1) = 0.0;
  img.depth(1, 0) = 0.0;
  img.depth(1, 1) = 0.0;
  int w = 0, h = 0;
  const auto full = depth_preview_bytes(img, 10.0, 1, w, h);
  CHECK(w == 4);
  CHECK(h == 2);
  CHECK(full[0] == 255);
  CHECK(full[3] == 0);
  const auto half = depth_preview_bytes(img, 10.0, 2, w, h);
  CHECK(w == 2);
  CHECK(h == 1);
  CHECK(half[0] == 255);
  CHECK(half[1] == 0);
}

TEST_CASE("RGB bytes quantize each channel") {
  RgbdImage img(2, 1, 1.0, Rgb{1.f, 0.f, 0.5f});
  const auto b = rgb_bytes(img);
  REQUIRE(b.size() == 6);
  CHECK(b[0] == 255);
  CHECK(b[1] == 0);
  CHECK((b[2] == 127 || b[2] == 128));
}

#include "vfcbf/raster.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace vfcbf {

namespace {

constexpr std::array<std::uint8_t, 8> kSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::vector<std::uint8_t> encode_png(int width, int height, int channels, const std::vector<std::uint8_t>& pixels) {
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
    throw std::invalid_argument("encode_png: bad dimensions or channel count");
  }
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  if (pixels.size() != stride * height) throw std::invalid_argument("encode_png: pixel buffer size mismatch");

  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * height);
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), pixels.begin() + static_cast<std::ptrdiff_t>(r * stride),
               pixels.begin() + static_cast<std::ptrdiff_t>((r + 1) * stride));
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("encode_png: deflate failed");
  }
  z.resize(zlen);

  std::vector<std::uint8_t> out(kSignature.begin(), kSignature.end());
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);
  ihdr.push_back(channels == 1 ? 0 : 2);
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

std::vector<std::uint8_t> decode_png(const std::vector<std::uint8_t>& png, int& width, int& height, int& channels) {
  if (png.size() < 8 || !std::equal(kSignature.begin(), kSignature.end(), png.begin())) {
    throw std::runtime_error("decode_png: not a PNG");
  }
  std::vector<std::uint8_t> z;
  width = height = channels = 0;
  std::size_t pos = 8;
  while (pos + 12 <= png.size()) {
    const std::uint32_t len = get_u32(&png[pos]);
    if (pos + 12 + len > png.size()) throw std::runtime_error("decode_png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(&png[pos + 4]);
    const std::uint8_t* data = &png[pos + 8];
    const auto crc = crc32(0L, &png[pos + 4], len + 4);
    if (crc != get_u32(data + len)) throw std::runtime_error("decode_png: CRC mismatch");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13 || data[8] != 8 || data[12] != 0 || (data[9] != 0 && data[9] != 2)) {
        throw std::runtime_error("decode_png: unsupported format");
      }
      width = static_cast<int>(get_u32(data));
      height = static_cast<int>(get_u32(data + 4));
      channels = data[9] == 0 ? 1 : 3;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      z.insert(z.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0) throw std::runtime_error("decode_png: missing header");
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  std::vector<std::uint8_t> raw((stride + 1) * height);
  uLongf rawlen = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &rawlen, z.data(), static_cast<uLong>(z.size())) != Z_OK || rawlen != raw.size()) {
    throw std::runtime_error("decode_png: inflate failed");
  }
  std::vector<std::uint8_t> out;
  out.reserve(stride * height);
  for (int r = 0; r < height; ++r) {
    const auto* row = &raw[r * (stride + 1)];
    if (row[0] != 0) throw std::runtime_error("decode_png: unsupported row filter");
    out.insert(out.end(), row + 1, row + 1 + stride);
  }
  return out;
}

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int s = 18; s >= 0; s -= 6) out += kAlphabet[(v >> s) & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64: length is not a multiple of 4");
  auto val = [](char c) -> int {
    const char* p = std::strchr(kAlphabet, c);
    return (c != '\0' && p) ? static_cast<int>(p - kAlphabet) : -1;
  };
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    const int pad = last ? (text[i + 3] == '=') + (text[i + 2] == '=') : 0;
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int d = 0;
      if (k >= 4 - pad) {
        if (c != '=') throw std::invalid_argument("base64: bad padding");
      } else if ((d = val(c)) < 0) {
        throw std::invalid_argument("base64: invalid character");
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::vector<std::uint8_t> rgb_bytes(const RgbdImage& image) {
  std::vector<std::uint8_t> out;
  out.reserve(image.size() * 3);
  for (const auto& c : image.colors()) {
    for (float ch : c) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(ch, 0.f, 1.f) * 255.f)));
  }
  return out;
}

std::vector<std::uint8_t> depth_preview_bytes(const RgbdImage& image, double max_range, int downsample, int& out_w,
                                              int& out_h) {
  if (downsample < 1) throw std::invalid_argument("depth preview: downsample must be >= 1");
  if (!(max_range > 0.0)) throw std::invalid_argument("depth preview: max_range must be positive");
  out_w = image.width() / downsample;
  out_h = image.height() / downsample;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(out_w) * out_h);
  const double n = static_cast<double>(downsample) * downsample;
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      double sum = 0.0;
      for (int i = 0; i < downsample; ++i) {
        for (int j = 0; j < downsample; ++j) sum += image.depth(r * downsample + i, c * downsample + j);
      }
      const double x = std::clamp(sum / n / max_range, 0.0, 1.0);
      out[static_cast<std::size_t>(r) * out_w + c] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - x)));
    }
  }
  return out;
}

}  // namespace vfcbf

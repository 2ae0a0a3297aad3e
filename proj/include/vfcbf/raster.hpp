#pragma once

// Lossless raster encoding for the teleop feed: PNG (zlib-compressed) and
// base64 text.

#include <cstdint>
#include <string>
#include <vector>

#include "vfcbf/geometry.hpp"

namespace vfcbf {

/// 8-bit PNG; channels 1 (gray) or 3 (RGB). Throws std::invalid_argument when
/// pixels.size() != width * height * channels.
std::vector<std::uint8_t> encode_png(int width, int height, int channels, const std::vector<std::uint8_t>& pixels);

/// Back to raw pixels; only reads what encode_png writes (8-bit, no interlace).
std::vector<std::uint8_t> decode_png(const std::vector<std::uint8_t>& png, int& width, int& height, int& channels);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// RGB channels quantized to 8 bits.
std::vector<std::uint8_t> rgb_bytes(const RgbdImage& image);
/// Depth mapped linearly from [0, max_range] to 255..0 (near is bright),
/// optionally box-downsampled by an integer factor.
std::vector<std::uint8_t> depth_preview_bytes(const RgbdImage& image, double max_range, int downsample, int& out_w,
                                              int& out_h);

}  // namespace vfcbf

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "bria/image.hpp"

namespace bria::png {

struct Info {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int channels = 0;
};

/// Header-only probe; throws Error(IoFailure) if the file is not a PNG.
Info probe(const std::filesystem::path& path);

/// Reads a single-channel 8- or 16-bit PNG; 8-bit samples are widened as-is.
Plane16 read_gray16(const std::filesystem::path& path);
Image<std::uint8_t> read_gray8(const std::filesystem::path& path);

/// `level` is the zlib compression level (0-9).
void write_gray16(const std::filesystem::path& path, const Plane16& img, int level = 1);
void write_gray8(const std::filesystem::path& path, const Image<std::uint8_t>& img, int level = 6);

/// Interleaved 8-bit RGB.
struct Rgb8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // 3 * width * height
};
void write_rgb8(const std::filesystem::path& path, const Rgb8& img, int level = 6);

}  // namespace bria::png

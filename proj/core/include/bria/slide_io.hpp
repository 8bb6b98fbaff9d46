#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bria/image.hpp"

namespace bria::io {

enum class Channel : int { Dapi = 0, Ck = 1, Cd45 = 2 };
inline constexpr int kNumChannels = 3;
inline constexpr std::array<Channel, kNumChannels> kChannels{Channel::Dapi, Channel::Ck, Channel::Cd45};

/// Names as they appear in slide.json ("DAPI", "CK", "CD45").
std::string_view channel_name(Channel c) noexcept;
/// Lowercase tag used in file and feature names ("dapi", "ck", "cd45").
std::string_view channel_tag(Channel c) noexcept;

struct GridPos {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
  friend auto operator<=>(const GridPos&, const GridPos&) = default;
};

struct SlideMeta {
  std::string slide_id;
  int grid_rows = 1;
  int grid_cols = 1;
  int fov_width_px = 2040;
  int fov_height_px = 2040;
  double pixel_size_um = 0.5;
  std::vector<std::string> channels{"DAPI", "CK", "CD45"};
  /// FOVs intentionally absent from the scan.
  std::vector<GridPos> missing_fovs;
};

using Planes = std::array<Plane16, kNumChannels>;

struct FieldOfView {
  int row = 0;
  int col = 0;
  Planes planes;

  const Plane16& plane(Channel c) const noexcept { return planes[static_cast<int>(c)]; }
  Plane16& plane(Channel c) noexcept { return planes[static_cast<int>(c)]; }
  int width() const noexcept { return planes[0].width(); }
  int height() const noexcept { return planes[0].height(); }
};

/// File name of one channel plane, e.g. "r0_c1_ck.png".
std::string plane_filename(GridPos pos, Channel c);

/// A slide on disk. Metadata is validated on construction; planes are read
/// on demand by load_fov(), so FOVs can be loaded from several threads.
class Slide {
public:
  Slide(std::filesystem::path root, SlideMeta meta, std::vector<GridPos> present);

  const SlideMeta& meta() const noexcept { return meta_; }
  const std::filesystem::path& root() const noexcept { return root_; }
  /// FOVs with all channel files on disk, in row-major order.
  const std::vector<GridPos>& fovs() const noexcept { return present_; }
  bool has_fov(GridPos pos) const;

  FieldOfView load_fov(GridPos pos) const;

private:
  std::filesystem::path root_;
  SlideMeta meta_;
  std::vector<GridPos> present_;
};

/// Errors: MissingMetadata, ChannelMissing, DimensionMismatch.
Slide load_slide(const std::filesystem::path& root);

void write_metadata(const std::filesystem::path& root, const SlideMeta& meta);
void write_fov(const std::filesystem::path& root, const FieldOfView& fov, int png_level = 1);

struct ChannelSummary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

struct QCReport {
  std::string slide_id;
  int fovs_expected = 0;
  int fovs_found = 0;
  std::array<ChannelSummary, kNumChannels> channels{};
  std::vector<std::string> failures;

  bool passed() const noexcept { return failures.empty(); }
};

/// Never throws for content problems: missing FOVs, unreadable planes and
/// all-zero planes are reported as failures.
QCReport validate_slide(const Slide& slide);

struct Thumbnail {
  int size = 0;
  /// FOV coordinates of thumbnail pixel (0, 0).
  PixelPos origin;
  Planes planes;

  const Plane16& plane(Channel c) const noexcept { return planes[static_cast<int>(c)]; }
  Point to_fov(Point p) const noexcept { return {p.x + origin.x, p.y + origin.y}; }
  Point to_thumb(Point p) const noexcept { return {p.x - origin.x, p.y - origin.y}; }
};

/// Pixel that a sub-pixel coordinate falls in.
inline PixelPos pixel_of(Point p) noexcept {
  return {static_cast<int>(std::floor(p.x + 0.5)), static_cast<int>(std::floor(p.y + 0.5))};
}

/// size x size crop whose pixel (size/2, size/2) is the pixel containing
/// `center`; out-of-bounds pixels are zero. Throws CenterOutsideFov.
Thumbnail crop(const FieldOfView& fov, Point center, int size);

/// Writes the in-bounds part of a thumbnail back into the FOV.
void paste(FieldOfView& fov, const Thumbnail& thumb);

}  // namespace bria::io

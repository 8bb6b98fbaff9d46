#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "bria/detect.hpp"
#include "bria/image.hpp"
#include "bria/slide_io.hpp"

namespace bria::cellseg {

/// Per-pixel class probabilities; the three planes sum to 1.
struct ProbMaps {
  PlaneF cell;
  PlaneF boundary;
  PlaneF background;

  ProbMaps() = default;
  ProbMaps(int width, int height);
  int width() const noexcept { return cell.width(); }
  int height() const noexcept { return cell.height(); }
};

struct ClassicalParams {
  double smooth_sigma = 2.0;
  int boundary_radius = 2;
  /// Logistic scale (px) used to soften the hard maps.
  double softness = 2.0;
  /// Relative weight of the boundary class before renormalisation.
  double boundary_weight = 0.15;
};

/// Stand-in for a trained network: Otsu foreground on the smoothed
/// per-pixel channel maximum, with its morphological gradient as boundary.
/// Throws Error(DegenerateInput) when the smoothed image is constant.
ProbMaps classical_probmaps(const io::Planes& planes, const ClassicalParams& params = {});
ProbMaps classical_probmaps(const io::FieldOfView& fov, const ClassicalParams& params = {});

/// Maps are stored as three 16-bit PNGs (value * 65535) next to a JSON
/// sidecar at `sidecar`.
void save_probmaps(const std::filesystem::path& sidecar, const ProbMaps& maps);
/// Renormalises pixels whose sum is within 0.05 of 1. Throws
/// Error(ShapeMismatch) or Error(NotNormalizable).
ProbMaps load_probmaps(const std::filesystem::path& sidecar);
/// Same validation for in-memory maps; returns the renormalised copy.
ProbMaps validate_probmaps(ProbMaps maps);

struct Window {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  friend bool operator==(const Window&, const Window&) = default;
};

struct Patch {
  ProbMaps maps;
  PixelPos offset;
};

/// Cell and boundary take the maximum over covering patches, background
/// takes 1 - max(1 - background); the result is renormalised. The outcome
/// does not depend on patch order. Throws Error(CoverageGap).
ProbMaps merge_patches(std::span<const Patch> patches, int width, int height);

/// Regular grid of patch x patch windows, the last row/column shifted to
/// end at the image edge; windows without a detection centroid are dropped.
std::vector<Window> patch_grid(int width, int height, int patch = 512, int overlap = 64);
std::vector<Window> patch_plan(int width, int height, std::span<const detect::Detection> detections,
                               int patch = 512, int overlap = 64);

struct CellMask {
  /// Bounding-box crop of the instance.
  Mask mask;
  /// FOV coordinates of mask pixel (0, 0).
  PixelPos offset;
  std::uint16_t label = 0;
  int detection_index = -1;
  int area_px = 0;
};

struct Instances {
  /// Label k+1 belongs to seed k; 0 is unassigned.
  LabelImage labels;
  std::vector<CellMask> masks;
};

/// Marker watershed on boundary - cell, restricted to cell + boundary >
/// background, flooded from the seed centroids. Seeds outside the
/// foreground start from the nearest foreground pixel.
Instances instance_segment(const ProbMaps& maps, std::span<const detect::Detection> seeds);

/// Instance mask of one seed rendered into an arbitrary window.
Mask mask_in_window(const CellMask& cm, PixelPos origin, int width, int height);

}  // namespace bria::cellseg

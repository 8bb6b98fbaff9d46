#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bria/image.hpp"
#include "bria/slide_io.hpp"

/// Synthetic slides with exact ground truth.
namespace bria::synth {

enum class CellClass { Ctc, Wbc, Artefact };
std::string_view class_name(CellClass c) noexcept;
/// Inverse of class_name(); throws Error(ParseError).
CellClass parse_class(std::string_view name);

struct CellSpec {
  Point center;
  double nucleus_radius_px = 6.0;
  double cell_radius_px = 9.0;
  CellClass cls = CellClass::Wbc;
  /// Peak signal above background: DAPI over the nucleus, CK and CD45 over
  /// the whole cell.
  std::array<double, io::kNumChannels> peaks{};
  std::uint64_t texture_seed = 0;
  /// 0 renders a circle; values in (0, 1) give an area-preserving ellipse.
  double eccentricity = 0.0;
  double angle_rad = 0.0;
};

enum class ArtefactKind { Flare, DyeAggregate };
std::string_view artefact_name(ArtefactKind k) noexcept;

struct ArtefactSpec {
  ArtefactKind kind = ArtefactKind::Flare;
  Point center;
  /// Flares: half-maximum radius. Aggregates: disk radius.
  double radius_px = 0.0;
  /// Pixels at or above half of the artefact's peak.
  int area_px = 0;
  double amplitude = 0.0;
};

struct FovTruth {
  io::GridPos pos;
  std::vector<CellSpec> cells;
  /// Label k+1 marks cells[k]; 0 is background.
  LabelImage nucleus_labels;
  LabelImage cell_labels;
  std::vector<ArtefactSpec> artefacts;
};

struct GroundTruth {
  std::string slide_id;
  std::vector<FovTruth> fovs;

  const FovTruth* find(io::GridPos pos) const;
};

struct ClassIntensity {
  std::array<double, 2> dapi;
  std::array<double, 2> ck;
  std::array<double, 2> cd45;
  /// Multiplies the sampled nucleus radius.
  double nucleus_scale = 1.0;
  /// Cell radius as a multiple of nucleus radius.
  std::array<double, 2> cell_ratio{1.4, 1.8};
  std::array<double, 2> eccentricity{0.0, 0.0};
};

struct NoiseSpec {
  std::array<double, io::kNumChannels> baseline{100.0, 100.0, 100.0};
  double read_sigma = 12.0;
  /// Photo-electron gain for shot noise; 0 disables shot noise.
  double gain = 1.0;
};

struct SlideSpec {
  std::string slide_id = "synthetic";
  int grid_rows = 1;
  int grid_cols = 1;
  int fov_width = 512;
  int fov_height = 512;
  double pixel_size_um = 0.5;

  int total_cells = 0;
  int n_ctc = 0;
  int n_artefact_cells = 0;
  int flares_per_fov = 0;
  int aggregates_per_fov = 0;

  std::array<double, 2> nucleus_radius{5.5, 7.5};
  double min_distance_factor = 1.5;
  int max_attempts = 1000;
  double texture_amplitude = 0.06;

  ClassIntensity wbc{{2200, 3400}, {0, 30}, {1200, 2400}, 1.0, {1.4, 1.7}, {0.0, 0.0}};
  ClassIntensity ctc{{2200, 3400}, {1200, 2800}, {0, 40}, 1.2, {1.5, 1.8}, {0.0, 0.0}};
  ClassIntensity artefact{{1200, 3600}, {800, 2400}, {900, 2400}, 0.75, {1.3, 1.6}, {0.5, 0.85}};

  NoiseSpec noise;
  std::uint64_t seed = 1;
};

struct SyntheticSlide {
  io::SlideMeta meta;
  std::vector<io::FieldOfView> fovs;
  GroundTruth truth;
};

/// Deterministic for a fixed spec. Throws Error(PlacementOverflow) when
/// rejection sampling cannot place every cell within max_attempts tries.
SyntheticSlide generate_slide(const SlideSpec& spec);

/// Cells for one FOV: sampled radii/intensities, placed by rejection sampling.
std::vector<CellSpec> place_cells(const SlideSpec& spec, std::span<const CellClass> classes, std::uint64_t seed);

/// Render cells onto a background-free signal image set and label images.
struct Rendering {
  std::array<PlaneF, io::kNumChannels> signal;
  LabelImage nucleus_labels;
  LabelImage cell_labels;
};
Rendering render_cells(int width, int height, std::span<const CellSpec> cells, double texture_amplitude);

/// Baseline + shot noise + read noise, quantised to 16 bits.
io::FieldOfView apply_noise(const std::array<PlaneF, io::kNumChannels>& signal, const NoiseSpec& noise,
                            std::uint64_t seed, io::GridPos pos);

/// A masked cell cut from a source image, used for montages.
struct GalleryPatch {
  io::Planes planes;
  Mask cell_mask;
  Mask nucleus_mask;
  CellClass cls = CellClass::Ctc;
};

/// Cut every cell of the given class from a synthetic FOV.
std::vector<GalleryPatch> extract_gallery(const io::FieldOfView& fov, const FovTruth& truth, CellClass cls,
                                          int margin = 3);

struct Montage {
  io::FieldOfView fov;
  FovTruth truth;
};

/// Alpha-blend `n` gallery patches at random non-overlapping positions.
/// Throws Error(BadParams) for an empty gallery with n > 0 and
/// Error(PlacementOverflow) when a patch cannot be placed.
Montage plant_montage(const io::FieldOfView& background, std::span<const GalleryPatch> gallery, int n,
                      std::uint64_t seed, int max_attempts = 1000);

struct Injected {
  io::FieldOfView fov;
  std::vector<ArtefactSpec> artefacts;
};

/// Flares add a broad CK-only Gaussian glow; dye aggregates add a radius-2
/// high-intensity CK speck.
Injected inject_artefacts(const io::FieldOfView& fov, ArtefactKind kind, int n, std::uint64_t seed);

/// Writes the slide-io layout plus ground_truth.json and truth/ label PNGs.
void write_synthetic(const std::filesystem::path& root, const SyntheticSlide& slide);
GroundTruth read_ground_truth(const std::filesystem::path& root);

}  // namespace bria::synth

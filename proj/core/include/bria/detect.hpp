#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "bria/image.hpp"
#include "bria/slide_io.hpp"

namespace bria::detect {

struct Detection {
  /// Sub-pixel FOV coordinates.
  Point centroid;
  double radius_px = 0.0;
  /// Scale-normalised LoG response, positive for bright blobs.
  double score = 0.0;
};

struct DetectParams {
  std::vector<double> sigmas{3.0, 3.5, 4.2, 5.0, 6.0};
  double response_threshold = 250.0;
  double min_separation_px = 7.0;
};

/// Multi-scale LoG blob detection. Output is sorted by descending score,
/// ties by (y, x). Throws Error(BadParams) for an empty or unsorted sigma
/// list, a non-positive threshold or an empty plane.
std::vector<Detection> detect_cells(const Plane16& dapi, const DetectParams& params = {});
std::vector<Detection> detect_cells(const PlaneF& dapi, const DetectParams& params = {});

/// Max over scales of the normalised response, with the index of the
/// winning scale. Exposed for tests and benchmarks.
struct ScaleSpace {
  PlaneF response;
  Image<std::uint8_t> best_scale;
};
ScaleSpace log_response(const PlaneF& plane, std::span<const double> sigmas);

struct DetectionMetrics {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double count_f1 = 0.0;
  double mean_centroid_dist_px = 0.0;
  double mean_centroid_dist_um = 0.0;
};

/// Greedy matching by ascending distance (each pair is mutually nearest
/// among still-unmatched points) within max_match_dist_px.
DetectionMetrics evaluate_detection(std::span<const Point> pred, std::span<const Point> truth,
                                    double max_match_dist_px = 10.0, double pixel_size_um = 0.5);
DetectionMetrics evaluate_detection(std::span<const Detection> pred, std::span<const Point> truth,
                                    double max_match_dist_px = 10.0, double pixel_size_um = 0.5);

std::vector<io::Thumbnail> crop_detections(const io::FieldOfView& fov, std::span<const Detection> detections,
                                           int size = 24);

void write_detections(const std::filesystem::path& path, io::GridPos pos, std::span<const Detection> detections);
std::vector<Detection> read_detections(const std::filesystem::path& path);

}  // namespace bria::detect

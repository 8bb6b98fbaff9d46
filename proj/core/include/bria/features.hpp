#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bria/image.hpp"
#include "bria/slide_io.hpp"

namespace bria::features {

inline constexpr int kNumFeatures = 122;
inline constexpr int kNumMorphology = 8;
inline constexpr int kNumIntensity = 44;
inline constexpr int kNumGabor = 32;
inline constexpr int kNumLaws = 32;
inline constexpr int kNumLbp = 6;

/// Global ordering: morphology(nuc), morphology(cell), intensity, Gabor,
/// Laws, LBP.
const std::vector<std::string>& feature_names();
/// Throws Error(UnknownFeatureName).
int feature_index(std::string_view name);
/// SHA-256 over the ordered names; stored with trained models.
const std::string& schema_hash();
/// {"version", "hash", "features": [{"index", "name", "group"}...]}
std::string schema_json();

/// Quality flags attached to a feature vector. Values are always finite;
/// a flag records that a conventional substitute was used.
enum Flag : std::uint32_t {
  kDegenerateNucleus = 1u << 0,
  kDegenerateCell = 1u << 1,
  kZeroVarianceCorrelation = 1u << 2,
  kZeroVarianceLbp = 1u << 3,
  kDegenerateColoc = 1u << 4,
};
std::vector<std::string> flag_names(std::uint32_t flags);

struct FeatureVector {
  std::array<double, kNumFeatures> values{};
  std::uint32_t flags = 0;

  double operator[](std::string_view name) const { return values[feature_index(name)]; }
};

struct Morphology {
  double size = 0.0;
  double roundness = 0.0;
  double elongation = 0.0;
  double hu1 = 0.0;
  bool degenerate = false;
};
/// Throws Error(EmptyMask) for an empty mask. A single pixel gives
/// (1, 1, 1, 0) with `degenerate` set.
Morphology morphology_features(const Mask& mask);

/// Perimeter of the convex hull of the centres of the set pixels.
double convex_hull_perimeter(const Mask& mask);

/// Quartile with linear interpolation between order statistics; `sorted`
/// must be ascending and nonempty.
double quantile_sorted(std::span<const double> sorted, double q);
/// Pearson correlation; 0 with `zero_variance` set if either side is constant.
double pearson(std::span<const double> a, std::span<const double> b, bool& zero_variance);
/// Average ranks (1-based).
std::vector<double> average_ranks(std::span<const double> v);

/// Ranked-weighted co-localisation. The overload without thresholds uses
/// per-channel Otsu thresholds of the given values; a constant channel
/// contributes no co-localised pixels.
double rwc(std::span<const double> a, std::span<const double> b);
double rwc(std::span<const double> a, std::span<const double> b, double threshold_a, double threshold_b);

struct IntensityResult {
  std::array<double, kNumIntensity> values{};
  std::uint32_t flags = 0;
};
/// Masks share the thumbnail frame. Throws Error(EmptyMask).
IntensityResult intensity_features(const io::Planes& thumb, const Mask& nuc, const Mask& cell, double ck_cutoff);

std::array<double, kNumGabor> gabor_features(const Plane16& ck);
std::array<double, kNumLaws> laws_features(const Plane16& ck);

struct LbpResult {
  std::array<double, kNumLbp> values{};
  std::uint32_t flags = 0;
};
/// Codes on interior pixels; bit k is set when neighbour k is strictly
/// brighter than the centre, neighbours clockwise from east.
Image<std::uint8_t> lbp_codes(const Plane16& plane);
double normalized_mutual_information(const Image<std::uint8_t>& a, const Image<std::uint8_t>& b);
LbpResult lbp_features(const io::Planes& thumb);

struct FeatureConfig {
  /// Pixels strictly above this CK value count towards the CK+ ratio.
  double ck_cutoff = 300.0;
};

/// Robust background level of a CK plane: median + 2 * (1.4826 * MAD).
double ck_cutoff_from_background(const Plane16& ck);

FeatureVector extract(const io::Planes& thumb, const Mask& nuc, const Mask& cell, const FeatureConfig& config);

}  // namespace bria::features

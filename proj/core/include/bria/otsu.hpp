#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "bria/image.hpp"

namespace bria {

inline constexpr int kOtsuBins = 256;
using Histogram256 = std::array<std::uint64_t, kOtsuBins>;

/// Index k of the split maximising between-class variance, where class 0 is
/// bins [0, k] and class 1 is bins (k, 255]. Candidates are k = 0..254;
/// ties resolve to the lowest k. Comparisons are exact (integer arithmetic).
/// Throws Error(DegenerateInput) when fewer than two bins are populated.
int otsu_bin(const Histogram256& hist);

/// Otsu threshold on real values via a 256-bin histogram spanning
/// [min, max]. `threshold` is the upper edge of the winning bin; use
/// above() to classify samples consistently with the binning.
struct OtsuThreshold {
  int bin = 0;
  double lo = 0.0;
  double hi = 0.0;
  double threshold = 0.0;

  int bin_of(double v) const noexcept;
  bool above(double v) const noexcept { return bin_of(v) > bin; }
};

/// Histogram used by otsu_threshold(); exposed for tests and reuse.
Histogram256 histogram256(std::span<const double> values, double lo, double hi);

/// Throws Error(DegenerateInput) for empty input or when all values are equal.
OtsuThreshold otsu_threshold(std::span<const double> values);
OtsuThreshold otsu_threshold(std::span<const float> values);

}  // namespace bria

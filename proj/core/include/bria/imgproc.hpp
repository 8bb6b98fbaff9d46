#pragma once

#include <span>
#include <vector>

#include "bria/image.hpp"

/// Small image-processing toolkit shared by the detection and segmentation
/// stages. All filters use reflect padding.
namespace bria::imgproc {

/// Normalised 1D Gaussian with radius ceil(3*sigma).
std::vector<float> gaussian_kernel(double sigma);
/// Second derivative of the 1D Gaussian, same support as gaussian_kernel().
std::vector<float> gaussian_d2_kernel(double sigma);

/// Correlate every row with `kx` and every column with `ky`.
PlaneF separable_filter(const PlaneF& in, std::span<const float> kx, std::span<const float> ky);
PlaneF gaussian_blur(const PlaneF& in, double sigma);

/// Dense 2D correlation with an odd-sized kernel (row-major, kw x kh).
PlaneD filter2d(const PlaneD& in, std::span<const double> kernel, int kw, int kh);

struct Gradient {
  PlaneD gx;
  PlaneD gy;
};
/// 3x3 Sobel gradient; gx grows to the right, gy grows downward.
Gradient sobel(const PlaneD& in);

enum class Connectivity { Four, Eight };

Mask dilate_cross(const Mask& m);
Mask dilate_disk(const Mask& m, int radius);
Mask erode_disk(const Mask& m, int radius);

/// 4- or 8-connected flood fill from `seed` over pixels where `passable` is
/// nonzero. Returns an empty-valued mask when the seed is not passable.
Mask flood_fill(const Mask& passable, PixelPos seed, Connectivity conn = Connectivity::Four);

/// Component of `m` containing `seed` (empty mask if seed pixel is 0).
Mask component_at(const Mask& m, PixelPos seed, Connectivity conn = Connectivity::Four);

/// Fill background regions that do not touch the image border.
Mask fill_holes(const Mask& m);

/// Exact Euclidean distance from every pixel to the nearest pixel where
/// `target` is nonzero. Pixels inside the target get 0. If the target is
/// empty every distance is +inf.
PlaneF distance_to(const Mask& target);

/// Positive inside `m`, negative outside; magnitude is the distance to the
/// nearest pixel of the opposite set minus one half.
PlaneF signed_distance(const Mask& m);

}  // namespace bria::imgproc

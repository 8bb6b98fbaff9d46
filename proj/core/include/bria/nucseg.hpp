#pragma once

#include "bria/detect.hpp"
#include "bria/image.hpp"
#include "bria/slide_io.hpp"

namespace bria::nucseg {

struct NucSegParams {
  /// Width of the Gaussian weight as a multiple of the detection radius.
  double kappa = 1.5;
  /// The mask never leaves the disk of radius disk_factor * radius.
  double disk_factor = 2.0;
};

/// B(p) = w(p) * max(0, -<n(p), grad I(p)>), with n the outward unit vector
/// from `center`, a Sobel gradient and w(p) = exp(-|p-c|^2 / (2 (kappa r)^2)).
PlaneD radial_transform(const PlaneD& dapi, Point center, double radius_px, double kappa = 1.5);

struct NuclearMask {
  Mask mask;
  int area_px = 0;
  /// FOV coordinates of mask pixel (0, 0).
  PixelPos offset;
  /// True when the ring did not enclose the centre and Otsu on w*I was used.
  bool fallback = false;
};

/// Segments the nucleus around `center` (thumbnail coordinates). The
/// result is a single hole-free 4-connected component containing the
/// centre pixel. Throws Error(EmptyMask) if no path yields pixels.
NuclearMask segment_nucleus(const Plane16& dapi_thumb, Point center, double radius_px,
                            const NucSegParams& params = {});
NuclearMask segment_nucleus(const io::Thumbnail& thumb, const detect::Detection& det,
                            const NucSegParams& params = {});

}  // namespace bria::nucseg

#include "bria/nucseg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bria/error.hpp"
#include "bria/imgproc.hpp"
#include "bria/otsu.hpp"

namespace bria::nucseg {

using imgproc::Connectivity;

PlaneD radial_transform(const PlaneD& dapi, Point center, double radius_px, double kappa) {
  if (!(radius_px > 0.0)) throw Error(ErrorCode::BadParams, "radius_px must be positive");
  const auto grad = imgproc::sobel(dapi);
  const double s = kappa * radius_px;
  const double inv2s2 = 1.0 / (2.0 * s * s);
  PlaneD out(dapi.width(), dapi.height(), 0.0);
  for (int y = 0; y < dapi.height(); ++y) {
    for (int x = 0; x < dapi.width(); ++x) {
      const double dx = x - center.x;
      const double dy = y - center.y;
      const double d2 = dx * dx + dy * dy;
      if (d2 == 0.0) continue;
      const double d = std::sqrt(d2);
      const double dot = (dx * grad.gx(x, y) + dy * grad.gy(x, y)) / d;
      if (dot < 0.0) out(x, y) = std::exp(-d2 * inv2s2) * -dot;
    }
  }
  return out;
}

namespace {

Mask disk_mask(int w, int h, Point c, double radius) {
  Mask m(w, h, 0);
  const double r2 = radius * radius;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= r2) m(x, y) = 1;
  return m;
}

bool touches_outside(const Mask& region, const Mask& allowed) {
  static constexpr int dx[] = {1, -1, 0, 0};
  static constexpr int dy[] = {0, 0, 1, -1};
  for (int y = 0; y < region.height(); ++y)
    for (int x = 0; x < region.width(); ++x) {
      if (!region(x, y)) continue;
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (!allowed.contains(nx, ny) || !allowed(nx, ny)) return true;
      }
    }
  return false;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

Mask finish(Mask m, PixelPos seed, const Mask& disk) {
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<std::uint8_t>(m[i] && disk[i]);
  m = imgproc::component_at(m, seed, Connectivity::Four);
  m = imgproc::fill_holes(m);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<std::uint8_t>(m[i] && disk[i]);
  return imgproc::component_at(m, seed, Connectivity::Four);
}

// Ring path: Otsu on B, close hairline gaps, fill the enclosed interior,
// then grow into the ring where intensity is above the half-way level
// between the interior and the region just outside the ring.
Mask ring_path(const PlaneD& img, const PlaneD& b, PixelPos seed, const Mask& disk) {
  OtsuThreshold t;
  try {
    t = otsu_threshold(std::span<const double>(b.data(), b.size()));
  } catch (const Error&) {
    return {};
  }
  Mask ring(b.width(), b.height(), 0);
  for (std::size_t i = 0; i < b.size(); ++i) ring[i] = t.above(b[i]) ? 1 : 0;
  ring = imgproc::dilate_cross(ring);

  Mask passable(b.width(), b.height(), 0);
  for (std::size_t i = 0; i < b.size(); ++i) passable[i] = static_cast<std::uint8_t>(disk[i] && !ring[i]);
  Mask inside = imgproc::flood_fill(passable, seed, Connectivity::Four);
  if (count_nonzero(inside) == 0 || touches_outside(inside, disk)) return {};

  // Pixels just beyond the ring, reached from the interior.
  Mask reach = inside;
  for (int k = 0; k < 4; ++k) reach = imgproc::dilate_cross(reach);
  Mask shell = imgproc::dilate_cross(reach);
  std::vector<double> in_vals, out_vals;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (inside[i]) in_vals.push_back(img[i]);
    else if (shell[i] && !reach[i] && disk[i]) out_vals.push_back(img[i]);
  }
  if (out_vals.empty()) return inside;
  const double level = 0.5 * (median(in_vals) + median(out_vals));

  Mask grown = inside;
  for (std::size_t i = 0; i < img.size(); ++i)
    if (reach[i] && ring[i] && img[i] >= level) grown[i] = 1;
  return finish(std::move(grown), seed, disk);
}

Mask fallback_path(const PlaneD& img, Point center, double radius, double kappa, PixelPos seed,
                   const Mask& disk) {
  // The weight alone would give a blob on a featureless thumbnail.
  const auto [lo, hi] = std::minmax_element(img.pixels().begin(), img.pixels().end());
  if (*lo == *hi) return {};
  const double s = kappa * radius;
  PlaneD wi(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double d2 = (x - center.x) * (x - center.x) + (y - center.y) * (y - center.y);
      wi(x, y) = std::exp(-d2 / (2.0 * s * s)) * img(x, y);
    }
  OtsuThreshold t;
  try {
    t = otsu_threshold(std::span<const double>(wi.data(), wi.size()));
  } catch (const Error&) {
    return {};
  }
  Mask m(img.width(), img.height(), 0);
  for (std::size_t i = 0; i < wi.size(); ++i) m[i] = t.above(wi[i]) ? 1 : 0;
  return finish(std::move(m), seed, disk);
}

}  // namespace

NuclearMask segment_nucleus(const Plane16& dapi_thumb, Point center, double radius_px, const NucSegParams& params) {
  if (!(radius_px > 0.0)) throw Error(ErrorCode::BadParams, "radius_px must be positive");
  const PixelPos seed = io::pixel_of(center);
  if (!dapi_thumb.contains(seed.x, seed.y)) throw Error(ErrorCode::CenterOutsideFov, "centre outside thumbnail");
  const PlaneD img = convert<double>(dapi_thumb);
  const Mask disk = disk_mask(img.width(), img.height(), center, params.disk_factor * radius_px);

  NuclearMask out;
  const PlaneD b = radial_transform(img, center, radius_px, params.kappa);
  out.mask = ring_path(img, b, seed, disk);
  if (out.mask.empty() || count_nonzero(out.mask) == 0) {
    out.fallback = true;
    out.mask = fallback_path(img, center, radius_px, params.kappa, seed, disk);
  }
  if (out.mask.empty() || count_nonzero(out.mask) == 0) {
    throw Error(ErrorCode::EmptyMask, "no nucleus found at (" + std::to_string(center.x) + ", " +
                                          std::to_string(center.y) + ")");
  }
  out.area_px = static_cast<int>(count_nonzero(out.mask));
  return out;
}

NuclearMask segment_nucleus(const io::Thumbnail& thumb, const detect::Detection& det, const NucSegParams& params) {
  NuclearMask m = segment_nucleus(thumb.plane(io::Channel::Dapi), thumb.to_thumb(det.centroid), det.radius_px, params);
  m.offset = thumb.origin;
  return m;
}

}  // namespace bria::nucseg

#include "bria/cellseg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <tuple>

#include "json.hpp"

#include "bria/error.hpp"
#include "bria/imgproc.hpp"
#include "bria/otsu.hpp"
#include "bria/png_io.hpp"

namespace bria::cellseg {

namespace fs = std::filesystem;
using nlohmann::json;

ProbMaps::ProbMaps(int width, int height)
    : cell(width, height, 0.0f), boundary(width, height, 0.0f), background(width, height, 1.0f) {}

namespace {

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void renormalise_pixel(float& c, float& b, float& g) {
  const double s = static_cast<double>(c) + b + g;
  c = static_cast<float>(c / s);
  b = static_cast<float>(b / s);
  g = static_cast<float>(g / s);
}

}  // namespace

ProbMaps classical_probmaps(const io::Planes& planes, const ClassicalParams& params) {
  const int w = planes[0].width();
  const int h = planes[0].height();
  PlaneF s(w, h, 0.0f);
  for (const auto& p : planes) {
    if (!p.same_shape(planes[0])) throw Error(ErrorCode::ShapeMismatch, "channel planes differ in shape");
    const auto [mn, mx] = std::minmax_element(p.pixels().begin(), p.pixels().end());
    if (*mx == *mn) continue;
    const float scale = 1.0f / static_cast<float>(*mx - *mn);
    for (std::size_t i = 0; i < p.size(); ++i) s[i] = std::max(s[i], (p[i] - *mn) * scale);
  }
  s = imgproc::gaussian_blur(s, params.smooth_sigma);
  const OtsuThreshold t = otsu_threshold(std::span<const float>(s.data(), s.size()));

  Mask fg(w, h, 0);
  for (std::size_t i = 0; i < s.size(); ++i) fg[i] = t.above(s[i]) ? 1 : 0;
  const Mask dil = imgproc::dilate_disk(fg, params.boundary_radius);
  const Mask ero = imgproc::erode_disk(fg, params.boundary_radius);
  Mask band(w, h, 0);
  for (std::size_t i = 0; i < band.size(); ++i) band[i] = static_cast<std::uint8_t>(dil[i] && !ero[i]);

  const PlaneF sd_fg = imgproc::signed_distance(fg);
  const PlaneF sd_band = imgproc::signed_distance(band);
  ProbMaps out(w, h);
  const double k = 1.0 / params.softness;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double inside = logistic(sd_fg[i] * k);
    const double edge = params.boundary_weight * logistic(sd_band[i] * k);
    const double total = 1.0 + edge;
    out.cell[i] = static_cast<float>(inside / total);
    out.boundary[i] = static_cast<float>(edge / total);
    out.background[i] = static_cast<float>((1.0 - inside) / total);
  }
  return out;
}

ProbMaps classical_probmaps(const io::FieldOfView& fov, const ClassicalParams& params) {
  return classical_probmaps(fov.planes, params);
}

ProbMaps validate_probmaps(ProbMaps maps) {
  if (!maps.cell.same_shape(maps.boundary) || !maps.cell.same_shape(maps.background)) {
    throw Error(ErrorCode::ShapeMismatch, "probability planes differ in shape");
  }
  for (std::size_t i = 0; i < maps.cell.size(); ++i) {
    float& c = maps.cell[i];
    float& b = maps.boundary[i];
    float& g = maps.background[i];
    if (!(c >= 0.0f && c <= 1.0f && b >= 0.0f && b <= 1.0f && g >= 0.0f && g <= 1.0f)) {
      throw Error(ErrorCode::NotNormalizable, "probability outside [0, 1] at pixel " + std::to_string(i));
    }
    const double s = static_cast<double>(c) + b + g;
    if (std::abs(s - 1.0) > 0.05) {
      throw Error(ErrorCode::NotNormalizable,
                  "probabilities sum to " + std::to_string(s) + " at pixel " + std::to_string(i));
    }
    renormalise_pixel(c, b, g);
  }
  return maps;
}

void save_probmaps(const fs::path& sidecar, const ProbMaps& maps) {
  const fs::path dir = sidecar.parent_path();
  const std::string stem = sidecar.stem().string();
  const std::array<std::pair<const char*, const PlaneF*>, 3> planes{
      {{"cell", &maps.cell}, {"boundary", &maps.boundary}, {"background", &maps.background}}};
  json j;
  j["width"] = maps.width();
  j["height"] = maps.height();
  j["scale"] = 65535;
  for (const auto& [name, plane] : planes) {
    Plane16 q(plane->width(), plane->height());
    for (std::size_t i = 0; i < q.size(); ++i) {
      q[i] = static_cast<std::uint16_t>(std::lround(std::clamp((*plane)[i], 0.0f, 1.0f) * 65535.0f));
    }
    const std::string file = stem + "_" + name + ".png";
    png::write_gray16(dir / file, q, 6);
    j["files"][name] = file;
  }
  std::ofstream out(sidecar);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + sidecar.string());
  out << j.dump(1) << '\n';
}

ProbMaps load_probmaps(const fs::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + sidecar.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  const double scale = j.value("scale", 65535.0);
  auto read = [&](const char* name) {
    const Plane16 q = png::read_gray16(sidecar.parent_path() / j.at("files").at(name).get<std::string>());
    PlaneF p(q.width(), q.height());
    for (std::size_t i = 0; i < q.size(); ++i) p[i] = static_cast<float>(q[i] / scale);
    return p;
  };
  ProbMaps maps;
  maps.cell = read("cell");
  maps.boundary = read("boundary");
  maps.background = read("background");
  return validate_probmaps(std::move(maps));
}

ProbMaps merge_patches(std::span<const Patch> patches, int width, int height) {
  PlaneF cell(width, height, 0.0f);
  PlaneF boundary(width, height, 0.0f);
  PlaneF inv_bg(width, height, 0.0f);
  Mask covered(width, height, 0);
  for (const Patch& p : patches) {
    const int pw = p.maps.width();
    const int ph = p.maps.height();
    if (p.offset.x < 0 || p.offset.y < 0 || p.offset.x + pw > width || p.offset.y + ph > height) {
      throw Error(ErrorCode::BadParams, "patch extends outside the target shape");
    }
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) {
        const int fx = x + p.offset.x, fy = y + p.offset.y;
        cell(fx, fy) = std::max(cell(fx, fy), p.maps.cell(x, y));
        boundary(fx, fy) = std::max(boundary(fx, fy), p.maps.boundary(x, y));
        inv_bg(fx, fy) = std::max(inv_bg(fx, fy), 1.0f - p.maps.background(x, y));
        covered(fx, fy) = 1;
      }
    }
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (!covered(x, y)) {
        throw Error(ErrorCode::CoverageGap,
                    "pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") not covered by any patch");
      }
  ProbMaps out;
  out.cell = std::move(cell);
  out.boundary = std::move(boundary);
  out.background = PlaneF(width, height);
  for (std::size_t i = 0; i < out.background.size(); ++i) {
    out.background[i] = 1.0f - inv_bg[i];
    const double s = static_cast<double>(out.cell[i]) + out.boundary[i] + out.background[i];
    if (s > 0.0) {
      renormalise_pixel(out.cell[i], out.boundary[i], out.background[i]);
    } else {
      out.background[i] = 1.0f;
    }
  }
  return out;
}

namespace {

std::vector<int> axis_starts(int extent, int patch, int overlap) {
  if (extent <= patch) return {0};
  const int stride = patch - overlap;
  const int n = (extent - patch + stride - 1) / stride + 1;
  std::vector<int> starts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) starts[i] = std::min(i * stride, extent - patch);
  return starts;
}

}  // namespace

std::vector<Window> patch_grid(int width, int height, int patch, int overlap) {
  if (patch <= 0 || overlap < 0 || overlap >= patch) {
    throw Error(ErrorCode::BadParams, "need patch > overlap >= 0");
  }
  std::vector<Window> out;
  for (int y : axis_starts(height, patch, overlap))
    for (int x : axis_starts(width, patch, overlap))
      out.push_back({x, y, std::min(patch, width), std::min(patch, height)});
  return out;
}

std::vector<Window> patch_plan(int width, int height, std::span<const detect::Detection> detections, int patch,
                               int overlap) {
  std::vector<Window> out;
  for (const Window& win : patch_grid(width, height, patch, overlap)) {
    for (const auto& d : detections) {
      const PixelPos p = io::pixel_of(d.centroid);
      if (p.x >= win.x && p.x < win.x + win.width && p.y >= win.y && p.y < win.y + win.height) {
        out.push_back(win);
        break;
      }
    }
  }
  return out;
}

namespace {

// Nearest foreground pixel by Euclidean distance, scanning square rings;
// ties resolve to the first pixel in raster order.
bool nearest_foreground(const Mask& fg, PixelPos p, int max_radius, PixelPos& found) {
  const int w = fg.width();
  const int h = fg.height();
  long best = std::numeric_limits<long>::max();
  for (int r = 0; r <= max_radius; ++r) {
    // Anything found in ring r is at distance >= r; stop once r^2 exceeds the best.
    if (static_cast<long>(r) * r > best) break;
    for (int y = p.y - r; y <= p.y + r; ++y) {
      if (y < 0 || y >= h) continue;
      const bool edge_row = y == p.y - r || y == p.y + r;
      for (int x = p.x - r; x <= p.x + r; x += edge_row ? 1 : 2 * r) {
        if (x >= 0 && x < w && fg(x, y)) {
          const long d2 = static_cast<long>(x - p.x) * (x - p.x) + static_cast<long>(y - p.y) * (y - p.y);
          if (d2 < best || (d2 == best && std::tie(y, x) < std::tie(found.y, found.x))) {
            best = d2;
            found = {x, y};
          }
        }
        if (r == 0) break;
      }
    }
  }
  return best != std::numeric_limits<long>::max();
}

}  // namespace

Instances instance_segment(const ProbMaps& maps, std::span<const detect::Detection> seeds) {
  const int w = maps.width();
  const int h = maps.height();
  if (seeds.size() >= std::numeric_limits<std::uint16_t>::max()) {
    throw Error(ErrorCode::BadParams, "too many seeds for a 16-bit label plane");
  }
  Instances out;
  out.labels = LabelImage(w, h, 0);
  Mask fg(w, h, 0);
  PlaneF topo(w, h);
  std::size_t fg_count = 0;
  for (std::size_t i = 0; i < fg.size(); ++i) {
    fg[i] = maps.cell[i] + maps.boundary[i] > maps.background[i] ? 1 : 0;
    fg_count += fg[i];
    topo[i] = maps.boundary[i] - maps.cell[i];
  }
  if (fg_count == 0) return out;

  using Item = std::tuple<float, std::uint64_t, int, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  std::uint64_t counter = 0;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    PixelPos p = io::pixel_of(seeds[k].centroid);
    if (!fg.contains(p.x, p.y) || !fg(p.x, p.y)) {
      PixelPos q{};
      if (!nearest_foreground(fg, {std::clamp(p.x, 0, w - 1), std::clamp(p.y, 0, h - 1)}, std::max(w, h), q)) {
        continue;
      }
      p = q;
    }
    // Two seeds on one pixel: the lower id keeps it.
    if (out.labels(p.x, p.y) != 0) continue;
    out.labels(p.x, p.y) = static_cast<std::uint16_t>(k + 1);
    queue.emplace(topo(p.x, p.y), counter++, p.x, p.y);
  }
  static constexpr int dx[] = {1, -1, 0, 0};
  static constexpr int dy[] = {0, 0, 1, -1};
  while (!queue.empty()) {
    const auto [v, c, x, y] = queue.top();
    queue.pop();
    const std::uint16_t label = out.labels(x, y);
    for (int n = 0; n < 4; ++n) {
      const int nx = x + dx[n], ny = y + dy[n];
      if (!fg.contains(nx, ny) || !fg(nx, ny) || out.labels(nx, ny) != 0) continue;
      out.labels(nx, ny) = label;
      queue.emplace(topo(nx, ny), counter++, nx, ny);
    }
  }

  // Bounding boxes, then per-instance crops.
  struct Box {
    int x0 = std::numeric_limits<int>::max(), y0 = std::numeric_limits<int>::max(), x1 = -1, y1 = -1, area = 0;
  };
  std::vector<Box> boxes(seeds.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int l = out.labels(x, y);
      if (l == 0) continue;
      Box& b = boxes[l - 1];
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x);
      b.y1 = std::max(b.y1, y);
      ++b.area;
    }
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    const Box& b = boxes[k];
    if (b.area == 0) continue;
    CellMask cm;
    cm.label = static_cast<std::uint16_t>(k + 1);
    cm.detection_index = static_cast<int>(k);
    cm.offset = {b.x0, b.y0};
    cm.area_px = b.area;
    cm.mask = Mask(b.x1 - b.x0 + 1, b.y1 - b.y0 + 1, 0);
    for (int y = b.y0; y <= b.y1; ++y)
      for (int x = b.x0; x <= b.x1; ++x)
        if (out.labels(x, y) == cm.label) cm.mask(x - b.x0, y - b.y0) = 1;
    out.masks.push_back(std::move(cm));
  }
  return out;
}

Mask mask_in_window(const CellMask& cm, PixelPos origin, int width, int height) {
  Mask out(width, height, 0);
  for (int y = 0; y < cm.mask.height(); ++y)
    for (int x = 0; x < cm.mask.width(); ++x) {
      if (!cm.mask(x, y)) continue;
      const int tx = x + cm.offset.x - origin.x;
      const int ty = y + cm.offset.y - origin.y;
      if (out.contains(tx, ty)) out(tx, ty) = 1;
    }
  return out;
}

}  // namespace bria::cellseg

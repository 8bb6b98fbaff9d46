#include "bria/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <unordered_map>

#include "json.hpp"

#include "bria/error.hpp"
#include "bria/imgproc.hpp"
#include "bria/png_io.hpp"
#include "bria/random.hpp"

namespace bria::synth {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view class_name(CellClass c) noexcept {
  switch (c) {
    case CellClass::Ctc: return "ctc";
    case CellClass::Wbc: return "wbc";
    case CellClass::Artefact: return "artefact";
  }
  return "";
}

CellClass parse_class(std::string_view name) {
  if (name == "ctc") return CellClass::Ctc;
  if (name == "wbc") return CellClass::Wbc;
  if (name == "artefact") return CellClass::Artefact;
  throw Error(ErrorCode::ParseError, "unknown cell class '" + std::string(name) + "'");
}

std::string_view artefact_name(ArtefactKind k) noexcept {
  return k == ArtefactKind::Flare ? "flare" : "dye_aggregate";
}

const FovTruth* GroundTruth::find(io::GridPos pos) const {
  for (const auto& f : fovs)
    if (f.pos == pos) return &f;
  return nullptr;
}

namespace {

double uniform(std::mt19937_64& rng, const std::array<double, 2>& range) {
  if (range[1] <= range[0]) return range[0];
  return std::uniform_real_distribution<double>(range[0], range[1])(rng);
}

// Flat core, raised-cosine falloff over [r-1, r+1]; exactly 0.5 at d = r.
double profile(double d, double r) {
  if (d <= r - 1.0) return 1.0;
  if (d >= r + 1.0) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (d - (r - 1.0)) / 2.0));
}

// Smooth value noise in [-1, 1] on a 3-px lattice.
double value_noise(std::uint64_t seed, double x, double y) {
  constexpr double spacing = 3.0;
  const double gx = x / spacing;
  const double gy = y / spacing;
  const double fx = std::floor(gx);
  const double fy = std::floor(gy);
  const double tx = gx - fx;
  const double ty = gy - fy;
  auto lattice = [&](double i, double j) {
    const auto h = derive_seed(seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(i) + (1 << 20)),
                               static_cast<std::uint64_t>(static_cast<std::int64_t>(j) + (1 << 20)));
    return 2.0 * unit_from_hash(h) - 1.0;
  };
  const double a = lattice(fx, fy), b = lattice(fx + 1, fy);
  const double c = lattice(fx, fy + 1), d = lattice(fx + 1, fy + 1);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

struct EllipseFrame {
  double cos_a, sin_a, inv_a, inv_b;
  // Elliptical distance: the level set d = r is the ellipse of nominal radius r.
  double scaled(double dx, double dy) const {
    const double u = dx * cos_a + dy * sin_a;
    const double v = -dx * sin_a + dy * cos_a;
    return std::sqrt(u * u * inv_a * inv_a + v * v * inv_b * inv_b);
  }
};

EllipseFrame frame_for(const CellSpec& c) {
  const double e = std::clamp(c.eccentricity, 0.0, 0.99);
  const double q = std::pow(1.0 - e * e, 0.25);
  // semi-axes a = r/q, b = r*q (area preserving), expressed per unit radius
  return {std::cos(c.angle_rad), std::sin(c.angle_rad), q, 1.0 / q};
}

const ClassIntensity& intensity_for(const SlideSpec& s, CellClass c) {
  switch (c) {
    case CellClass::Ctc: return s.ctc;
    case CellClass::Artefact: return s.artefact;
    case CellClass::Wbc: break;
  }
  return s.wbc;
}

}  // namespace

std::vector<CellSpec> place_cells(const SlideSpec& spec, std::span<const CellClass> classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CellSpec> cells;
  cells.reserve(classes.size());
  for (CellClass cls : classes) {
    const ClassIntensity& ci = intensity_for(spec, cls);
    CellSpec c;
    c.cls = cls;
    c.nucleus_radius_px = uniform(rng, spec.nucleus_radius) * ci.nucleus_scale;
    c.cell_radius_px = c.nucleus_radius_px * uniform(rng, ci.cell_ratio);
    c.peaks = {uniform(rng, ci.dapi), uniform(rng, ci.ck), uniform(rng, ci.cd45)};
    c.eccentricity = uniform(rng, ci.eccentricity);
    c.angle_rad = std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
    c.texture_seed = rng();
    cells.push_back(c);
  }
  if (cells.empty()) return cells;

  double mean_cell = 0.0;
  double max_nuc = 0.0;
  double max_cell = 0.0;
  for (const auto& c : cells) {
    mean_cell += c.cell_radius_px;
    // an ellipse's semi-major axis exceeds the nominal radius
    const double stretch = 1.0 / std::pow(1.0 - c.eccentricity * c.eccentricity, 0.25);
    max_nuc = std::max(max_nuc, c.nucleus_radius_px * stretch);
    max_cell = std::max(max_cell, c.cell_radius_px * stretch);
  }
  mean_cell /= static_cast<double>(cells.size());
  const double min_dist = spec.min_distance_factor * mean_cell;
  const double grid = std::max(min_dist, 2.0 * max_nuc + 1.0);
  const int gw = static_cast<int>(std::ceil(spec.fov_width / grid)) + 1;
  const int gh = static_cast<int>(std::ceil(spec.fov_height / grid)) + 1;
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(gw) * gh);

  for (std::size_t i = 0; i < cells.size(); ++i) {
    CellSpec& c = cells[i];
    const double stretch = 1.0 / std::pow(1.0 - c.eccentricity * c.eccentricity, 0.25);
    const double margin = c.cell_radius_px * stretch + 1.5;
    if (2.0 * margin >= spec.fov_width || 2.0 * margin >= spec.fov_height) {
      throw Error(ErrorCode::PlacementOverflow, "cell larger than FOV");
    }
    std::uniform_real_distribution<double> ux(margin, spec.fov_width - 1 - margin);
    std::uniform_real_distribution<double> uy(margin, spec.fov_height - 1 - margin);
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
      const Point p{ux(rng), uy(rng)};
      const int bx = static_cast<int>(p.x / grid);
      const int by = static_cast<int>(p.y / grid);
      bool ok = true;
      for (int yy = std::max(0, by - 1); yy <= std::min(gh - 1, by + 1) && ok; ++yy) {
        for (int xx = std::max(0, bx - 1); xx <= std::min(gw - 1, bx + 1) && ok; ++xx) {
          for (int j : buckets[static_cast<std::size_t>(yy) * gw + xx]) {
            const CellSpec& o = cells[j];
            const double sj = 1.0 / std::pow(1.0 - o.eccentricity * o.eccentricity, 0.25);
            const double need = std::max(min_dist, c.nucleus_radius_px * stretch + o.nucleus_radius_px * sj + 1.0);
            if (std::hypot(p.x - o.center.x, p.y - o.center.y) < need) {
              ok = false;
              break;
            }
          }
        }
      }
      if (ok) {
        c.center = p;
        buckets[static_cast<std::size_t>(by) * gw + bx].push_back(static_cast<int>(i));
        placed = true;
      }
    }
    if (!placed) {
      throw Error(ErrorCode::PlacementOverflow,
                  "could not place cell " + std::to_string(i) + " of " + std::to_string(cells.size()));
    }
  }
  return cells;
}

Rendering render_cells(int width, int height, std::span<const CellSpec> cells, double texture_amplitude) {
  Rendering r;
  for (auto& s : r.signal) s = PlaneF(width, height, 0.0f);
  r.nucleus_labels = LabelImage(width, height, 0);
  r.cell_labels = LabelImage(width, height, 0);
  PlaneF best_ratio(width, height, std::numeric_limits<float>::infinity());

  for (std::size_t k = 0; k < cells.size(); ++k) {
    const CellSpec& c = cells[k];
    const auto label = static_cast<std::uint16_t>(k + 1);
    const EllipseFrame fr = frame_for(c);
    const double stretch = 1.0 / std::pow(1.0 - c.eccentricity * c.eccentricity, 0.25);
    const double reach = c.cell_radius_px * stretch + 1.5;
    const int x0 = std::max(0, static_cast<int>(std::floor(c.center.x - reach)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(c.center.x + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(c.center.y - reach)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(c.center.y + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - c.center.x;
        const double dy = y - c.center.y;
        const double d = fr.scaled(dx, dy);
        const double pn = profile(d, c.nucleus_radius_px);
        const double pc = profile(d, c.cell_radius_px);
        if (pc <= 0.0) continue;
        const double tex = 1.0 + texture_amplitude * value_noise(c.texture_seed, x, y);
        const std::array<double, 3> v{c.peaks[0] * pn * tex, c.peaks[1] * pc * tex, c.peaks[2] * pc * tex};
        for (int ch = 0; ch < 3; ++ch) {
          float& dst = r.signal[ch](x, y);
          dst = std::max(dst, static_cast<float>(v[ch]));
        }
        const double ratio = d / c.cell_radius_px;
        if (ratio <= 1.0 && ratio < best_ratio(x, y)) {
          best_ratio(x, y) = static_cast<float>(ratio);
          r.cell_labels(x, y) = label;
        }
      }
    }
  }
  // Nuclei never overlap, and a nucleus always belongs to its own cell.
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const CellSpec& c = cells[k];
    const auto label = static_cast<std::uint16_t>(k + 1);
    const EllipseFrame fr = frame_for(c);
    const double stretch = 1.0 / std::pow(1.0 - c.eccentricity * c.eccentricity, 0.25);
    const double reach = c.nucleus_radius_px * stretch + 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(c.center.x - reach)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(c.center.x + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(c.center.y - reach)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(c.center.y + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (fr.scaled(x - c.center.x, y - c.center.y) <= c.nucleus_radius_px) {
          r.nucleus_labels(x, y) = label;
          r.cell_labels(x, y) = label;
        }
      }
    }
  }
  return r;
}

io::FieldOfView apply_noise(const std::array<PlaneF, io::kNumChannels>& signal, const NoiseSpec& noise,
                            std::uint64_t seed, io::GridPos pos) {
  io::FieldOfView fov;
  fov.row = pos.row;
  fov.col = pos.col;
  for (int ch = 0; ch < io::kNumChannels; ++ch) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(ch)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const PlaneF& s = signal[ch];
    Plane16 out(s.width(), s.height());
    for (std::size_t i = 0; i < s.size(); ++i) {
      double v = noise.baseline[ch] + s[i];
      if (noise.gain > 0.0) {
        const double lambda = v / noise.gain;
        double counts;
        // Normal approximation above 50 expected counts.
        if (lambda < 50.0) {
          counts = static_cast<double>(std::poisson_distribution<int>(lambda)(rng));
        } else {
          counts = lambda + std::sqrt(lambda) * gauss(rng);
        }
        v = counts * noise.gain;
      }
      if (noise.read_sigma > 0.0) v += noise.read_sigma * gauss(rng);
      out[i] = static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
    }
    fov.planes[ch] = std::move(out);
  }
  return fov;
}

SyntheticSlide generate_slide(const SlideSpec& spec) {
  if (spec.grid_rows <= 0 || spec.grid_cols <= 0 || spec.fov_width <= 0 || spec.fov_height <= 0) {
    throw Error(ErrorCode::BadParams, "grid and FOV dimensions must be positive");
  }
  if (spec.total_cells < 0 || spec.n_ctc < 0 || spec.n_artefact_cells < 0 ||
      spec.n_ctc + spec.n_artefact_cells > spec.total_cells) {
    throw Error(ErrorCode::BadParams, "class counts exceed total_cells");
  }
  SyntheticSlide out;
  out.meta.slide_id = spec.slide_id;
  out.meta.grid_rows = spec.grid_rows;
  out.meta.grid_cols = spec.grid_cols;
  out.meta.fov_width_px = spec.fov_width;
  out.meta.fov_height_px = spec.fov_height;
  out.meta.pixel_size_um = spec.pixel_size_um;
  out.truth.slide_id = spec.slide_id;

  std::vector<CellClass> classes(static_cast<std::size_t>(spec.total_cells), CellClass::Wbc);
  std::fill_n(classes.begin(), spec.n_ctc, CellClass::Ctc);
  std::fill_n(classes.begin() + spec.n_ctc, spec.n_artefact_cells, CellClass::Artefact);
  std::mt19937_64 rng(derive_seed(spec.seed, 0xC1A55));
  std::shuffle(classes.begin(), classes.end(), rng);

  const int nfov = spec.grid_rows * spec.grid_cols;
  std::size_t cursor = 0;
  for (int f = 0; f < nfov; ++f) {
    const io::GridPos pos{f / spec.grid_cols, f % spec.grid_cols};
    const std::size_t count = static_cast<std::size_t>(spec.total_cells / nfov + (f < spec.total_cells % nfov ? 1 : 0));
    std::span<const CellClass> fov_classes(classes.data() + cursor, count);
    cursor += count;

    FovTruth truth;
    truth.pos = pos;
    truth.cells = place_cells(spec, fov_classes, derive_seed(spec.seed, static_cast<std::uint64_t>(f), 1));
    Rendering rend = render_cells(spec.fov_width, spec.fov_height, truth.cells, spec.texture_amplitude);
    io::FieldOfView fov = apply_noise(rend.signal, spec.noise, derive_seed(spec.seed, static_cast<std::uint64_t>(f), 2), pos);
    truth.nucleus_labels = std::move(rend.nucleus_labels);
    truth.cell_labels = std::move(rend.cell_labels);

    if (spec.flares_per_fov > 0) {
      Injected inj = inject_artefacts(fov, ArtefactKind::Flare, spec.flares_per_fov,
                                      derive_seed(spec.seed, static_cast<std::uint64_t>(f), 3));
      fov = std::move(inj.fov);
      truth.artefacts.insert(truth.artefacts.end(), inj.artefacts.begin(), inj.artefacts.end());
    }
    if (spec.aggregates_per_fov > 0) {
      Injected inj = inject_artefacts(fov, ArtefactKind::DyeAggregate, spec.aggregates_per_fov,
                                      derive_seed(spec.seed, static_cast<std::uint64_t>(f), 4));
      fov = std::move(inj.fov);
      truth.artefacts.insert(truth.artefacts.end(), inj.artefacts.begin(), inj.artefacts.end());
    }
    out.fovs.push_back(std::move(fov));
    out.truth.fovs.push_back(std::move(truth));
  }
  return out;
}

std::vector<GalleryPatch> extract_gallery(const io::FieldOfView& fov, const FovTruth& truth, CellClass cls,
                                          int margin) {
  std::vector<GalleryPatch> out;
  const int w = fov.width();
  const int h = fov.height();
  for (std::size_t k = 0; k < truth.cells.size(); ++k) {
    if (truth.cells[k].cls != cls) continue;
    const auto label = static_cast<std::uint16_t>(k + 1);
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    const CellSpec& c = truth.cells[k];
    const int reach = static_cast<int>(std::ceil(c.cell_radius_px * 2.0)) + 2;
    const int cx = static_cast<int>(c.center.x), cy = static_cast<int>(c.center.y);
    for (int y = std::max(0, cy - reach); y <= std::min(h - 1, cy + reach); ++y)
      for (int x = std::max(0, cx - reach); x <= std::min(w - 1, cx + reach); ++x)
        if (truth.cell_labels(x, y) == label) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    if (x1 < 0) continue;
    x0 = std::max(0, x0 - margin);
    y0 = std::max(0, y0 - margin);
    x1 = std::min(w - 1, x1 + margin);
    y1 = std::min(h - 1, y1 + margin);
    GalleryPatch p;
    p.cls = cls;
    const int pw = x1 - x0 + 1, ph = y1 - y0 + 1;
    p.cell_mask = Mask(pw, ph, 0);
    p.nucleus_mask = Mask(pw, ph, 0);
    for (int ch = 0; ch < io::kNumChannels; ++ch) p.planes[ch] = Plane16(pw, ph);
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) {
        for (int ch = 0; ch < io::kNumChannels; ++ch) p.planes[ch](x, y) = fov.planes[ch](x + x0, y + y0);
        p.cell_mask(x, y) = truth.cell_labels(x + x0, y + y0) == label ? 1 : 0;
        p.nucleus_mask(x, y) = truth.nucleus_labels(x + x0, y + y0) == label ? 1 : 0;
      }
    out.push_back(std::move(p));
  }
  return out;
}

Montage plant_montage(const io::FieldOfView& background, std::span<const GalleryPatch> gallery, int n,
                      std::uint64_t seed, int max_attempts) {
  if (n < 0) throw Error(ErrorCode::BadParams, "n must be >= 0");
  if (n > 0 && gallery.empty()) throw Error(ErrorCode::BadParams, "empty gallery");
  Montage m;
  m.fov = background;
  m.truth.pos = {background.row, background.col};
  const int w = background.width();
  const int h = background.height();
  m.truth.nucleus_labels = LabelImage(w, h, 0);
  m.truth.cell_labels = LabelImage(w, h, 0);
  Mask occupied(w, h, 0);
  std::mt19937_64 rng(seed);

  for (int i = 0; i < n; ++i) {
    const GalleryPatch& p = gallery[rng() % gallery.size()];
    const int pw = p.cell_mask.width();
    const int ph = p.cell_mask.height();
    if (pw > w || ph > h) throw Error(ErrorCode::PlacementOverflow, "patch larger than FOV");
    // Alpha: 1 inside the mask, 0.5 on a one-pixel feathered rim.
    const Mask footprint = imgproc::dilate_cross(p.cell_mask);
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      const int ox = static_cast<int>(rng() % static_cast<std::uint64_t>(w - pw + 1));
      const int oy = static_cast<int>(rng() % static_cast<std::uint64_t>(h - ph + 1));
      bool clash = false;
      for (int y = 0; y < ph && !clash; ++y)
        for (int x = 0; x < pw; ++x)
          if (footprint(x, y) && occupied(ox + x, oy + y)) {
            clash = true;
            break;
          }
      if (clash) continue;
      const auto label = static_cast<std::uint16_t>(m.truth.cells.size() + 1);
      double sx = 0, sy = 0, area = 0, nuc_area = 0;
      std::array<double, 3> sums{};
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) {
          if (!footprint(x, y)) continue;
          const double alpha = p.cell_mask(x, y) ? 1.0 : 0.5;
          for (int ch = 0; ch < io::kNumChannels; ++ch) {
            auto& dst = m.fov.planes[ch](ox + x, oy + y);
            dst = static_cast<std::uint16_t>(std::lround((1.0 - alpha) * dst + alpha * p.planes[ch](x, y)));
          }
          occupied(ox + x, oy + y) = 1;
          if (p.cell_mask(x, y)) {
            m.truth.cell_labels(ox + x, oy + y) = label;
            sx += ox + x;
            sy += oy + y;
            area += 1;
            for (int ch = 0; ch < 3; ++ch) sums[ch] += p.planes[ch](x, y);
          }
          if (p.nucleus_mask(x, y)) {
            m.truth.nucleus_labels(ox + x, oy + y) = label;
            nuc_area += 1;
          }
        }
      CellSpec spec;
      spec.cls = p.cls;
      spec.center = {sx / area, sy / area};
      spec.cell_radius_px = std::sqrt(area / std::numbers::pi);
      spec.nucleus_radius_px = std::sqrt(std::max(nuc_area, 1.0) / std::numbers::pi);
      for (int ch = 0; ch < 3; ++ch) spec.peaks[ch] = sums[ch] / area;
      m.truth.cells.push_back(spec);
      placed = true;
    }
    if (!placed) {
      throw Error(ErrorCode::PlacementOverflow, "could not place montage patch " + std::to_string(i));
    }
  }
  return m;
}

Injected inject_artefacts(const io::FieldOfView& fov, ArtefactKind kind, int n, std::uint64_t seed) {
  Injected out{fov, {}};
  if (n <= 0) return out;
  std::mt19937_64 rng(seed);
  Plane16& ck = out.fov.plane(io::Channel::Ck);
  const int w = ck.width();
  const int h = ck.height();
  for (int i = 0; i < n; ++i) {
    ArtefactSpec a;
    a.kind = kind;
    if (kind == ArtefactKind::Flare) {
      a.center = {std::uniform_real_distribution<double>(0, w - 1)(rng),
                  std::uniform_real_distribution<double>(0, h - 1)(rng)};
      const double sigma = std::uniform_real_distribution<double>(40.0, 120.0)(rng);
      a.amplitude = std::uniform_real_distribution<double>(300.0, 800.0)(rng);
      a.radius_px = sigma * std::sqrt(2.0 * std::log(2.0));
      const int reach = static_cast<int>(std::ceil(3.0 * sigma));
      for (int y = std::max(0, static_cast<int>(a.center.y) - reach); y <= std::min(h - 1, static_cast<int>(a.center.y) + reach); ++y)
        for (int x = std::max(0, static_cast<int>(a.center.x) - reach); x <= std::min(w - 1, static_cast<int>(a.center.x) + reach); ++x) {
          const double d2 = (x - a.center.x) * (x - a.center.x) + (y - a.center.y) * (y - a.center.y);
          const double add = a.amplitude * std::exp(-d2 / (2.0 * sigma * sigma));
          if (add >= 0.5 * a.amplitude) ++a.area_px;
          ck(x, y) = static_cast<std::uint16_t>(std::min(65535.0, ck(x, y) + std::round(add)));
        }
    } else {
      constexpr int r = 2;
      a.center = {static_cast<double>(r + static_cast<int>(rng() % static_cast<std::uint64_t>(std::max(1, w - 2 * r)))),
                  static_cast<double>(r + static_cast<int>(rng() % static_cast<std::uint64_t>(std::max(1, h - 2 * r))))};
      a.amplitude = std::uniform_real_distribution<double>(4000.0, 8000.0)(rng);
      a.radius_px = r;
      const int cx = static_cast<int>(a.center.x), cy = static_cast<int>(a.center.y);
      for (int y = cy - r; y <= cy + r; ++y)
        for (int x = cx - r; x <= cx + r; ++x) {
          if (!ck.contains(x, y) || (x - cx) * (x - cx) + (y - cy) * (y - cy) > r * r) continue;
          ++a.area_px;
          ck(x, y) = static_cast<std::uint16_t>(std::min(65535.0, ck(x, y) + a.amplitude));
        }
    }
    out.artefacts.push_back(a);
  }
  return out;
}

namespace {

std::string truth_name(io::GridPos p, const char* what) {
  return "r" + std::to_string(p.row) + "_c" + std::to_string(p.col) + "_" + what + ".png";
}

}  // namespace

void write_synthetic(const fs::path& root, const SyntheticSlide& slide) {
  io::write_metadata(root, slide.meta);
  for (const auto& fov : slide.fovs) io::write_fov(root, fov);
  fs::create_directories(root / "truth");
  json j;
  j["slide_id"] = slide.truth.slide_id;
  j["fovs"] = json::array();
  for (const auto& f : slide.truth.fovs) {
    json jf;
    jf["row"] = f.pos.row;
    jf["col"] = f.pos.col;
    jf["cells"] = json::array();
    for (std::size_t k = 0; k < f.cells.size(); ++k) {
      const auto& c = f.cells[k];
      jf["cells"].push_back({{"id", k},
                             {"label", k + 1},
                             {"center", {c.center.x, c.center.y}},
                             {"nucleus_radius", c.nucleus_radius_px},
                             {"cell_radius", c.cell_radius_px},
                             {"class", class_name(c.cls)},
                             {"peaks", {{"dapi", c.peaks[0]}, {"ck", c.peaks[1]}, {"cd45", c.peaks[2]}}},
                             {"texture_seed", c.texture_seed},
                             {"eccentricity", c.eccentricity},
                             {"angle", c.angle_rad}});
    }
    jf["artefacts"] = json::array();
    for (const auto& a : f.artefacts) {
      jf["artefacts"].push_back({{"kind", artefact_name(a.kind)},
                                 {"center", {a.center.x, a.center.y}},
                                 {"radius", a.radius_px},
                                 {"area", a.area_px},
                                 {"amplitude", a.amplitude},
                                 {"label", "artefact"}});
    }
    jf["nucleus_labels"] = "truth/" + truth_name(f.pos, "nuc_labels");
    jf["cell_labels"] = "truth/" + truth_name(f.pos, "cell_labels");
    png::write_gray16(root / "truth" / truth_name(f.pos, "nuc_labels"), f.nucleus_labels, 6);
    png::write_gray16(root / "truth" / truth_name(f.pos, "cell_labels"), f.cell_labels, 6);
    j["fovs"].push_back(jf);
  }
  std::ofstream out(root / "ground_truth.json");
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write ground_truth.json");
  out << j.dump(1) << '\n';
}

GroundTruth read_ground_truth(const fs::path& root) {
  std::ifstream in(root / "ground_truth.json");
  if (!in) throw Error(ErrorCode::IoFailure, "no ground_truth.json in " + root.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  GroundTruth gt;
  gt.slide_id = j.at("slide_id").get<std::string>();
  for (const auto& jf : j.at("fovs")) {
    FovTruth f;
    f.pos = {jf.at("row").get<int>(), jf.at("col").get<int>()};
    for (const auto& jc : jf.at("cells")) {
      CellSpec c;
      c.center = {jc.at("center").at(0).get<double>(), jc.at("center").at(1).get<double>()};
      c.nucleus_radius_px = jc.at("nucleus_radius").get<double>();
      c.cell_radius_px = jc.at("cell_radius").get<double>();
      c.cls = parse_class(jc.at("class").get<std::string>());
      c.peaks = {jc.at("peaks").at("dapi").get<double>(), jc.at("peaks").at("ck").get<double>(),
                 jc.at("peaks").at("cd45").get<double>()};
      c.texture_seed = jc.at("texture_seed").get<std::uint64_t>();
      c.eccentricity = jc.at("eccentricity").get<double>();
      c.angle_rad = jc.at("angle").get<double>();
      f.cells.push_back(c);
    }
    for (const auto& ja : jf.at("artefacts")) {
      ArtefactSpec a;
      a.kind = ja.at("kind").get<std::string>() == "flare" ? ArtefactKind::Flare : ArtefactKind::DyeAggregate;
      a.center = {ja.at("center").at(0).get<double>(), ja.at("center").at(1).get<double>()};
      a.radius_px = ja.at("radius").get<double>();
      a.area_px = ja.at("area").get<int>();
      a.amplitude = ja.at("amplitude").get<double>();
      f.artefacts.push_back(a);
    }
    f.nucleus_labels = png::read_gray16(root / jf.at("nucleus_labels").get<std::string>());
    f.cell_labels = png::read_gray16(root / jf.at("cell_labels").get<std::string>());
    gt.fovs.push_back(std::move(f));
  }
  return gt;
}

}  // namespace bria::synth

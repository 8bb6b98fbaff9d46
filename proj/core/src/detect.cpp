#include "bria/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <tuple>

#include "json.hpp"

#include "bria/error.hpp"
#include "bria/imgproc.hpp"

namespace bria::detect {

using nlohmann::json;

ScaleSpace log_response(const PlaneF& plane, std::span<const double> sigmas) {
  ScaleSpace ss{PlaneF(plane.width(), plane.height(), -std::numeric_limits<float>::infinity()),
                Image<std::uint8_t>(plane.width(), plane.height(), 0)};
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    const double sigma = sigmas[s];
    const auto g = imgproc::gaussian_kernel(sigma);
    const auto d2 = imgproc::gaussian_d2_kernel(sigma);
    const PlaneF lxx = imgproc::separable_filter(plane, d2, g);
    const PlaneF lyy = imgproc::separable_filter(plane, g, d2);
    const float norm = static_cast<float>(-sigma * sigma);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      const float r = norm * (lxx[i] + lyy[i]);
      if (r > ss.response[i]) {
        ss.response[i] = r;
        ss.best_scale[i] = static_cast<std::uint8_t>(s);
      }
    }
  }
  return ss;
}

namespace {

void check_params(const DetectParams& p) {
  if (p.sigmas.empty()) throw Error(ErrorCode::BadParams, "sigmas must be nonempty");
  if (p.sigmas.size() > 255) throw Error(ErrorCode::BadParams, "too many scales");
  for (std::size_t i = 0; i < p.sigmas.size(); ++i) {
    if (!(p.sigmas[i] > 0.0)) throw Error(ErrorCode::BadParams, "sigmas must be positive");
    if (i > 0 && p.sigmas[i] <= p.sigmas[i - 1]) throw Error(ErrorCode::BadParams, "sigmas must be ascending");
  }
  if (!(p.response_threshold > 0.0)) throw Error(ErrorCode::BadParams, "response_threshold must be positive");
  if (p.min_separation_px < 0.0) throw Error(ErrorCode::BadParams, "min_separation_px must be >= 0");
}

// Vertex offset of the parabola through (-1, a), (0, b), (1, c).
double parabolic_offset(double a, double b, double c) {
  const double denom = a - 2.0 * b + c;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

struct Peak {
  int x, y;
  float score;
};

}  // namespace

std::vector<Detection> detect_cells(const PlaneF& dapi, const DetectParams& params) {
  check_params(params);
  if (dapi.empty()) throw Error(ErrorCode::BadParams, "empty plane");
  const int w = dapi.width();
  const int h = dapi.height();
  const ScaleSpace ss = log_response(dapi, params.sigmas);
  const PlaneF& r = ss.response;
  const auto thr = static_cast<float>(params.response_threshold);

  // 3x3 local maxima; on plateaus the first pixel in raster order wins.
  std::vector<Peak> peaks;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = r(x, y);
      if (v <= thr) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (!r.contains(nx, ny)) continue;
          const float n = r(nx, ny);
          const bool before = dy < 0 || (dy == 0 && dx < 0);
          if (n > v || (before && n == v)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) peaks.push_back({x, y, v});
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.y, a.x) < std::tie(b.y, b.x);
  });

  // Greedy suppression on a bucket grid.
  const double sep = params.min_separation_px;
  const double cell = std::max(sep, 1.0);
  const int gw = static_cast<int>(w / cell) + 1;
  const int gh = static_cast<int>(h / cell) + 1;
  std::vector<std::vector<int>> grid(static_cast<std::size_t>(gw) * gh);
  std::vector<Detection> out;
  for (const Peak& p : peaks) {
    const double ox = p.x > 0 && p.x < w - 1 ? parabolic_offset(r(p.x - 1, p.y), p.score, r(p.x + 1, p.y)) : 0.0;
    const double oy = p.y > 0 && p.y < h - 1 ? parabolic_offset(r(p.x, p.y - 1), p.score, r(p.x, p.y + 1)) : 0.0;
    const Point c{std::clamp(p.x + ox, 0.0, w - 1.0), std::clamp(p.y + oy, 0.0, h - 1.0)};
    const int bx = static_cast<int>(c.x / cell);
    const int by = static_cast<int>(c.y / cell);
    bool keep = true;
    for (int yy = std::max(0, by - 1); yy <= std::min(gh - 1, by + 1) && keep; ++yy)
      for (int xx = std::max(0, bx - 1); xx <= std::min(gw - 1, bx + 1) && keep; ++xx)
        for (int j : grid[static_cast<std::size_t>(yy) * gw + xx]) {
          const Point& q = out[j].centroid;
          if (std::hypot(c.x - q.x, c.y - q.y) < sep) {
            keep = false;
            break;
          }
        }
    if (!keep) continue;
    grid[static_cast<std::size_t>(by) * gw + bx].push_back(static_cast<int>(out.size()));
    out.push_back({c, params.sigmas[ss.best_scale(p.x, p.y)] * std::numbers::sqrt2, p.score});
  }
  return out;
}

std::vector<Detection> detect_cells(const Plane16& dapi, const DetectParams& params) {
  return detect_cells(convert<float>(dapi), params);
}

DetectionMetrics evaluate_detection(std::span<const Point> pred, std::span<const Point> truth,
                                    double max_match_dist_px, double pixel_size_um) {
  if (!(max_match_dist_px > 0.0)) throw Error(ErrorCode::BadParams, "max_match_dist_px must be positive");
  struct Pair {
    double d;
    int p, t;
  };
  std::vector<Pair> pairs;
  if (!pred.empty() && !truth.empty()) {
    double mx = 0, my = 0;
    for (const auto& t : truth) {
      mx = std::max(mx, t.x);
      my = std::max(my, t.y);
    }
    const double cell = max_match_dist_px;
    const int gw = static_cast<int>(std::max(mx, 0.0) / cell) + 2;
    const int gh = static_cast<int>(std::max(my, 0.0) / cell) + 2;
    std::vector<std::vector<int>> grid(static_cast<std::size_t>(gw) * gh);
    auto bucket = [&](Point p) {
      return std::pair{std::clamp(static_cast<int>(std::floor(p.x / cell)), 0, gw - 1),
                       std::clamp(static_cast<int>(std::floor(p.y / cell)), 0, gh - 1)};
    };
    for (std::size_t t = 0; t < truth.size(); ++t) {
      auto [bx, by] = bucket(truth[t]);
      grid[static_cast<std::size_t>(by) * gw + bx].push_back(static_cast<int>(t));
    }
    for (std::size_t p = 0; p < pred.size(); ++p) {
      auto [bx, by] = bucket(pred[p]);
      for (int yy = std::max(0, by - 1); yy <= std::min(gh - 1, by + 1); ++yy)
        for (int xx = std::max(0, bx - 1); xx <= std::min(gw - 1, bx + 1); ++xx)
          for (int t : grid[static_cast<std::size_t>(yy) * gw + xx]) {
            const double d = std::hypot(pred[p].x - truth[t].x, pred[p].y - truth[t].y);
            if (d <= max_match_dist_px) pairs.push_back({d, static_cast<int>(p), t});
          }
    }
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const Pair& a, const Pair& b) { return std::tie(a.d, a.p, a.t) < std::tie(b.d, b.p, b.t); });
  std::vector<char> used_p(pred.size(), 0), used_t(truth.size(), 0);
  DetectionMetrics m;
  double sum = 0.0;
  for (const Pair& pr : pairs) {
    if (used_p[pr.p] || used_t[pr.t]) continue;
    used_p[pr.p] = used_t[pr.t] = 1;
    ++m.tp;
    sum += pr.d;
  }
  m.fp = static_cast<int>(pred.size()) - m.tp;
  m.fn = static_cast<int>(truth.size()) - m.tp;
  const int denom = 2 * m.tp + m.fp + m.fn;
  m.count_f1 = denom > 0 ? 2.0 * m.tp / denom : 0.0;
  m.mean_centroid_dist_px = m.tp > 0 ? sum / m.tp : 0.0;
  m.mean_centroid_dist_um = m.mean_centroid_dist_px * pixel_size_um;
  return m;
}

DetectionMetrics evaluate_detection(std::span<const Detection> pred, std::span<const Point> truth,
                                    double max_match_dist_px, double pixel_size_um) {
  std::vector<Point> pts;
  pts.reserve(pred.size());
  for (const auto& d : pred) pts.push_back(d.centroid);
  return evaluate_detection(std::span<const Point>(pts), truth, max_match_dist_px, pixel_size_um);
}

std::vector<io::Thumbnail> crop_detections(const io::FieldOfView& fov, std::span<const Detection> detections,
                                           int size) {
  std::vector<io::Thumbnail> out;
  out.reserve(detections.size());
  for (const auto& d : detections) out.push_back(io::crop(fov, d.centroid, size));
  return out;
}

void write_detections(const std::filesystem::path& path, io::GridPos pos, std::span<const Detection> detections) {
  json j;
  j["fov"] = {pos.row, pos.col};
  j["detections"] = json::array();
  for (const auto& d : detections) {
    j["detections"].push_back(
        {{"centroid", {d.centroid.x, d.centroid.y}}, {"radius", d.radius_px}, {"score", d.score}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  std::vector<Detection> out;
  try {
    const json j = json::parse(in);
    for (const auto& d : j.at("detections")) {
      out.push_back({{d.at("centroid").at(0).get<double>(), d.at("centroid").at(1).get<double>()},
                     d.at("radius").get<double>(),
                     d.at("score").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return out;
}

}  // namespace bria::detect

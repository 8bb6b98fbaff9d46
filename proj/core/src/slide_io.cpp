#include "bria/slide_io.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "bria/error.hpp"
#include "bria/png_io.hpp"

namespace bria::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view channel_name(Channel c) noexcept {
  switch (c) {
    case Channel::Dapi: return "DAPI";
    case Channel::Ck: return "CK";
    case Channel::Cd45: return "CD45";
  }
  return "";
}

std::string_view channel_tag(Channel c) noexcept {
  switch (c) {
    case Channel::Dapi: return "dapi";
    case Channel::Ck: return "ck";
    case Channel::Cd45: return "cd45";
  }
  return "";
}

std::string plane_filename(GridPos pos, Channel c) {
  std::ostringstream os;
  os << 'r' << pos.row << "_c" << pos.col << '_' << channel_tag(c) << ".png";
  return os.str();
}

namespace {

std::string fov_name(GridPos p) { return "r" + std::to_string(p.row) + "_c" + std::to_string(p.col); }

SlideMeta parse_meta(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::MissingMetadata, "no slide.json in " + file.parent_path().string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MissingMetadata, std::string("unreadable slide.json: ") + e.what());
  }
  SlideMeta m;
  try {
    m.slide_id = j.at("slide_id").get<std::string>();
    m.grid_rows = j.at("grid_rows").get<int>();
    m.grid_cols = j.at("grid_cols").get<int>();
    m.fov_width_px = j.at("fov_width_px").get<int>();
    m.fov_height_px = j.at("fov_height_px").get<int>();
    m.pixel_size_um = j.value("pixel_size_um", 0.5);
    m.channels = j.at("channels").get<std::vector<std::string>>();
    for (const auto& p : j.value("missing_fovs", json::array())) m.missing_fovs.push_back({p.at(0), p.at(1)});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MissingMetadata, std::string("invalid slide.json: ") + e.what());
  }
  if (m.grid_rows <= 0 || m.grid_cols <= 0 || m.fov_width_px <= 0 || m.fov_height_px <= 0 || !(m.pixel_size_um > 0)) {
    throw Error(ErrorCode::MissingMetadata, "slide.json has non-positive dimensions");
  }
  const std::vector<std::string> expected{"DAPI", "CK", "CD45"};
  if (m.channels != expected) {
    throw Error(ErrorCode::MissingMetadata, "channels must be [DAPI, CK, CD45]");
  }
  return m;
}

}  // namespace

Slide::Slide(fs::path root, SlideMeta meta, std::vector<GridPos> present)
    : root_(std::move(root)), meta_(std::move(meta)), present_(std::move(present)) {}

bool Slide::has_fov(GridPos pos) const { return std::find(present_.begin(), present_.end(), pos) != present_.end(); }

FieldOfView Slide::load_fov(GridPos pos) const {
  FieldOfView fov;
  fov.row = pos.row;
  fov.col = pos.col;
  for (Channel c : kChannels) {
    const fs::path p = root_ / plane_filename(pos, c);
    if (!fs::exists(p)) {
      throw Error(ErrorCode::ChannelMissing, fov_name(pos) + " " + std::string(channel_name(c)));
    }
    Plane16 plane = png::read_gray16(p);
    if (!plane.same_shape(meta_.fov_width_px, meta_.fov_height_px)) {
      throw Error(ErrorCode::DimensionMismatch, p.filename().string());
    }
    fov.plane(c) = std::move(plane);
  }
  return fov;
}

Slide load_slide(const fs::path& root) {
  SlideMeta meta = parse_meta(root / "slide.json");
  std::vector<GridPos> present;
  for (int r = 0; r < meta.grid_rows; ++r) {
    for (int c = 0; c < meta.grid_cols; ++c) {
      const GridPos pos{r, c};
      int found = 0;
      for (Channel ch : kChannels) found += fs::exists(root / plane_filename(pos, ch)) ? 1 : 0;
      if (found == 0) continue;  // whole FOV absent; reported by validate_slide
      for (Channel ch : kChannels) {
        const fs::path p = root / plane_filename(pos, ch);
        if (!fs::exists(p)) {
          throw Error(ErrorCode::ChannelMissing, fov_name(pos) + " " + std::string(channel_name(ch)));
        }
        const png::Info info = png::probe(p);
        if (info.width != meta.fov_width_px || info.height != meta.fov_height_px) {
          throw Error(ErrorCode::DimensionMismatch,
                      p.filename().string() + " is " + std::to_string(info.width) + "x" +
                          std::to_string(info.height));
        }
        if (info.channels != 1) throw Error(ErrorCode::DimensionMismatch, p.filename().string() + " is not single-channel");
      }
      present.push_back(pos);
    }
  }
  return Slide(root, std::move(meta), std::move(present));
}

void write_metadata(const fs::path& root, const SlideMeta& meta) {
  fs::create_directories(root);
  json j;
  j["slide_id"] = meta.slide_id;
  j["grid_rows"] = meta.grid_rows;
  j["grid_cols"] = meta.grid_cols;
  j["fov_width_px"] = meta.fov_width_px;
  j["fov_height_px"] = meta.fov_height_px;
  j["pixel_size_um"] = meta.pixel_size_um;
  j["bit_depth"] = 16;
  j["channels"] = meta.channels;
  json missing = json::array();
  for (const auto& p : meta.missing_fovs) missing.push_back({p.row, p.col});
  j["missing_fovs"] = missing;
  std::ofstream out(root / "slide.json");
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write slide.json");
  out << j.dump(2) << '\n';
}

void write_fov(const fs::path& root, const FieldOfView& fov, int png_level) {
  fs::create_directories(root);
  for (Channel c : kChannels) png::write_gray16(root / plane_filename({fov.row, fov.col}, c), fov.plane(c), png_level);
}

QCReport validate_slide(const Slide& slide) {
  const SlideMeta& m = slide.meta();
  QCReport rep;
  rep.slide_id = m.slide_id;
  std::array<double, kNumChannels> sum{};
  std::array<std::uint64_t, kNumChannels> count{};
  std::array<double, kNumChannels> mn, mx;
  mn.fill(std::numeric_limits<double>::infinity());
  mx.fill(-std::numeric_limits<double>::infinity());

  for (int r = 0; r < m.grid_rows; ++r) {
    for (int c = 0; c < m.grid_cols; ++c) {
      const GridPos pos{r, c};
      const bool declared_missing =
          std::find(m.missing_fovs.begin(), m.missing_fovs.end(), pos) != m.missing_fovs.end();
      if (declared_missing) continue;
      ++rep.fovs_expected;
      if (!slide.has_fov(pos)) {
        rep.failures.push_back("missing FOV " + fov_name(pos));
        continue;
      }
      FieldOfView fov;
      try {
        fov = slide.load_fov(pos);
      } catch (const Error& e) {
        rep.failures.push_back("unreadable FOV " + fov_name(pos) + ": " + e.what());
        continue;
      }
      ++rep.fovs_found;
      for (Channel ch : kChannels) {
        const int ci = static_cast<int>(ch);
        const auto px = fov.plane(ch).pixels();
        std::uint64_t s = 0;
        std::uint16_t lo = 65535, hi = 0;
        for (std::uint16_t v : px) {
          s += v;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        sum[ci] += static_cast<double>(s);
        count[ci] += px.size();
        mn[ci] = std::min(mn[ci], static_cast<double>(lo));
        mx[ci] = std::max(mx[ci], static_cast<double>(hi));
        if (hi == 0) rep.failures.push_back("all-zero " + std::string(channel_name(ch)) + " plane in FOV " + fov_name(pos));
      }
    }
  }
  for (int ci = 0; ci < kNumChannels; ++ci) {
    if (count[ci] == 0) continue;
    rep.channels[ci] = {mn[ci], mx[ci], sum[ci] / static_cast<double>(count[ci])};
  }
  return rep;
}

Thumbnail crop(const FieldOfView& fov, Point center, int size) {
  if (size < 1) throw Error(ErrorCode::BadParams, "crop size must be >= 1");
  const PixelPos c = pixel_of(center);
  if (c.x < 0 || c.y < 0 || c.x >= fov.width() || c.y >= fov.height()) {
    throw Error(ErrorCode::CenterOutsideFov,
                "(" + std::to_string(center.x) + ", " + std::to_string(center.y) + ")");
  }
  Thumbnail t;
  t.size = size;
  t.origin = {c.x - size / 2, c.y - size / 2};
  for (Channel ch : kChannels) {
    const Plane16& src = fov.plane(ch);
    Plane16 dst(size, size, 0);
    const int y0 = std::max(0, -t.origin.y);
    const int y1 = std::min(size, src.height() - t.origin.y);
    const int x0 = std::max(0, -t.origin.x);
    const int x1 = std::min(size, src.width() - t.origin.x);
    for (int y = y0; y < y1; ++y) {
      auto s = src.row(y + t.origin.y);
      auto d = dst.row(y);
      std::copy(s.begin() + (x0 + t.origin.x), s.begin() + (x1 + t.origin.x), d.begin() + x0);
    }
    t.planes[static_cast<int>(ch)] = std::move(dst);
  }
  return t;
}

void paste(FieldOfView& fov, const Thumbnail& thumb) {
  for (Channel ch : kChannels) {
    Plane16& dst = fov.plane(ch);
    const Plane16& src = thumb.plane(ch);
    for (int y = 0; y < src.height(); ++y) {
      for (int x = 0; x < src.width(); ++x) {
        const int fx = x + thumb.origin.x;
        const int fy = y + thumb.origin.y;
        if (dst.contains(fx, fy)) dst(fx, fy) = src(x, y);
      }
    }
  }
}

}  // namespace bria::io

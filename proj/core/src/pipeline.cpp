#include "bria/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "bria/error.hpp"
#include "bria/hash.hpp"
#include "bria/png_io.hpp"

namespace bria::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

json config_json(const PipelineConfig& c) {
  json j;
  j["detect"] = {{"sigmas", c.detect.sigmas},
                 {"response_threshold", c.detect.response_threshold},
                 {"min_separation_px", c.detect.min_separation_px}};
  j["nucseg"] = {{"kappa", c.nucseg.kappa}, {"disk_factor", c.nucseg.disk_factor}};
  j["cellseg"] = {{"smooth_sigma", c.cellseg.smooth_sigma},
                  {"boundary_radius", c.cellseg.boundary_radius},
                  {"softness", c.cellseg.softness},
                  {"boundary_weight", c.cellseg.boundary_weight},
                  {"patch_size", c.patch_size},
                  {"patch_overlap", c.patch_overlap}};
  j["thumb_size"] = c.thumb_size;
  j["display_size"] = c.display_size;
  j["ck_cutoff"] = c.ck_cutoff ? json(*c.ck_cutoff) : json("auto");
  j["rules"] = c.rules;
  j["rules_only"] = c.rules_only;
  j["classify_all"] = c.classify_all;
  j["model_path"] = c.model_path;
  j["keep_cells"] = c.keep_cells;
  j["workers"] = c.workers;
  j["seed"] = c.seed;
  return j;
}

}  // namespace

std::string PipelineConfig::to_json() const { return config_json(*this).dump(2); }

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  PipelineConfig c;
  json j;
  try {
    j = json::parse(text);
    if (j.contains("detect")) {
      const auto& d = j["detect"];
      c.detect.sigmas = d.value("sigmas", c.detect.sigmas);
      c.detect.response_threshold = d.value("response_threshold", c.detect.response_threshold);
      c.detect.min_separation_px = d.value("min_separation_px", c.detect.min_separation_px);
    }
    if (j.contains("nucseg")) {
      c.nucseg.kappa = j["nucseg"].value("kappa", c.nucseg.kappa);
      c.nucseg.disk_factor = j["nucseg"].value("disk_factor", c.nucseg.disk_factor);
    }
    if (j.contains("cellseg")) {
      const auto& s = j["cellseg"];
      c.cellseg.smooth_sigma = s.value("smooth_sigma", c.cellseg.smooth_sigma);
      c.cellseg.boundary_radius = s.value("boundary_radius", c.cellseg.boundary_radius);
      c.cellseg.softness = s.value("softness", c.cellseg.softness);
      c.cellseg.boundary_weight = s.value("boundary_weight", c.cellseg.boundary_weight);
      c.patch_size = s.value("patch_size", c.patch_size);
      c.patch_overlap = s.value("patch_overlap", c.patch_overlap);
    }
    c.thumb_size = j.value("thumb_size", c.thumb_size);
    c.display_size = j.value("display_size", c.display_size);
    if (j.contains("ck_cutoff") && j["ck_cutoff"].is_number()) c.ck_cutoff = j["ck_cutoff"].get<double>();
    c.rules = j.value("rules", c.rules);
    c.rules_only = j.value("rules_only", c.rules_only);
    c.classify_all = j.value("classify_all", c.classify_all);
    c.model_path = j.value("model_path", c.model_path);
    c.keep_cells = j.value("keep_cells", c.keep_cells);
    c.workers = j.value("workers", c.workers);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("pipeline config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string PipelineConfig::hash() const {
  json j = config_json(*this);
  j.erase("workers");
  j.erase("keep_cells");
  if (!model_path.empty() && fs::exists(model_path)) j["model_path"] = sha256_file(model_path);
  return sha256_hex(j.dump());
}

MaskRle encode_rle(const Mask& m) {
  MaskRle r{m.width(), m.height(), {}};
  std::uint8_t cur = 0;
  int run = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const std::uint8_t v = m[i] ? 1 : 0;
    if (v != cur) {
      r.runs.push_back(run);
      run = 0;
      cur = v;
    }
    ++run;
  }
  r.runs.push_back(run);
  return r;
}

Mask decode_rle(const MaskRle& rle) {
  Mask m(rle.width, rle.height, 0);
  std::size_t pos = 0;
  std::uint8_t v = 0;
  for (int run : rle.runs) {
    if (run < 0 || pos + static_cast<std::size_t>(run) > m.size()) throw Error(ErrorCode::ParseError, "bad mask RLE");
    std::fill_n(m.data() + pos, run, v);
    pos += static_cast<std::size_t>(run);
    v ^= 1;
  }
  if (pos != m.size()) throw Error(ErrorCode::ParseError, "mask RLE length mismatch");
  return m;
}

namespace {

Mask shift_mask(const Mask& m, PixelPos from_origin, PixelPos to_origin, int w, int h) {
  Mask out(w, h, 0);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m(x, y)) continue;
      const int tx = x + from_origin.x - to_origin.x;
      const int ty = y + from_origin.y - to_origin.y;
      if (out.contains(tx, ty)) out(tx, ty) = 1;
    }
  return out;
}

std::string candidate_id(const std::string& slide_id, io::GridPos pos, int index) {
  return slide_id + "_r" + std::to_string(pos.row) + "_c" + std::to_string(pos.col) + "_" + std::to_string(index);
}

const std::array<int, 6>& mfi_indices() {
  static const std::array<int, 6> idx{
      features::feature_index("Nuc_MFI_dapi"),  features::feature_index("Nuc_MFI_ck"),
      features::feature_index("Nuc_MFI_cd45"),  features::feature_index("Cell_MFI_dapi"),
      features::feature_index("Cell_MFI_ck"),   features::feature_index("Cell_MFI_cd45")};
  return idx;
}

}  // namespace

FovResult process_fov(const io::FieldOfView& fov, const std::string& slide_id, const PipelineConfig& config,
                      double ck_cutoff, const classify::Classifier* clf, const classify::RuleSet& rules) {
  FovResult r;
  const io::GridPos pos{fov.row, fov.col};
  const bool rules_only = config.rules_only || clf == nullptr;

  auto t0 = Clock::now();
  const auto dets = detect::detect_cells(fov.plane(io::Channel::Dapi), config.detect);
  r.times.detect = seconds_since(t0);
  r.funnel.detected = static_cast<long>(dets.size());

  t0 = Clock::now();
  std::vector<io::Thumbnail> thumbs;
  std::vector<std::optional<nucseg::NuclearMask>> nuclei(dets.size());
  thumbs.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    thumbs.push_back(io::crop(fov, dets[i].centroid, config.thumb_size));
    try {
      nuclei[i] = nucseg::segment_nucleus(thumbs[i], dets[i], config.nucseg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyMask) throw;
    }
  }
  r.times.nucseg = seconds_since(t0);

  t0 = Clock::now();
  const int w = fov.width(), h = fov.height();
  std::vector<cellseg::Patch> patches;
  // An all-background patch is the identity of the merge rule and covers
  // the windows dropped for lack of detections.
  patches.push_back({cellseg::ProbMaps(w, h), {0, 0}});
  for (const auto& win : cellseg::patch_plan(w, h, dets, config.patch_size, config.patch_overlap)) {
    io::Planes planes;
    for (int c = 0; c < io::kNumChannels; ++c) {
      planes[c] = Plane16(win.width, win.height);
      for (int y = 0; y < win.height; ++y) {
        const auto src = fov.planes[c].row(win.y + y).subspan(win.x, win.width);
        std::copy(src.begin(), src.end(), planes[c].row(y).begin());
      }
    }
    try {
      patches.push_back({cellseg::classical_probmaps(planes, config.cellseg), {win.x, win.y}});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateInput) throw;
    }
  }
  const cellseg::ProbMaps merged = cellseg::merge_patches(patches, w, h);
  const cellseg::Instances inst = cellseg::instance_segment(merged, dets);
  std::vector<const cellseg::CellMask*> cell_of(dets.size(), nullptr);
  for (const auto& cm : inst.masks) cell_of[cm.detection_index] = &cm;
  r.times.cellseg = seconds_since(t0);

  const features::FeatureConfig fcfg{ck_cutoff};
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (!nuclei[i]) continue;
    const io::Thumbnail& th = thumbs[i];
    const nucseg::NuclearMask& nm = *nuclei[i];
    Mask cell = cell_of[i] ? cellseg::mask_in_window(*cell_of[i], th.origin, th.size, th.size)
                           : Mask(th.size, th.size, 0);
    for (std::size_t k = 0; k < cell.size(); ++k) cell[k] = static_cast<std::uint8_t>(cell[k] | nm.mask[k]);

    t0 = Clock::now();
    features::FeatureVector fv = features::extract(th.planes, nm.mask, cell, fcfg);
    r.times.features += seconds_since(t0);
    ++r.funnel.segmented;

    t0 = Clock::now();
    const bool rule = classify::rule_filter(fv, rules);
    if (rule) ++r.funnel.rule_passed;
    bool classified = false, passed = false;
    double probability = rule ? 1.0 : 0.0;
    if (!rules_only && (rule || config.classify_all)) {
      const auto pred = classify::predict(*clf, fv);
      classified = true;
      probability = pred.probability;
      passed = pred.candidate;
      ++r.funnel.classifier_evaluated;
      if (passed) ++r.funnel.classifier_passed;
    }
    r.times.classify += seconds_since(t0);
    const bool is_candidate = rules_only ? rule : passed;

    if (config.keep_cells) {
      r.cells.push_back({pos, static_cast<int>(i), dets[i].centroid, dets[i].radius_px, rule, classified,
                         probability, fv});
    }
    if (!is_candidate) continue;
    ++r.funnel.candidates;
    Candidate c;
    c.id = candidate_id(slide_id, pos, static_cast<int>(i));
    c.fov = pos;
    c.index = static_cast<int>(i);
    c.centroid = dets[i].centroid;
    c.radius_px = dets[i].radius_px;
    c.probability = probability;
    c.rule_pass = rule;
    const auto& mi = mfi_indices();
    for (int k = 0; k < 3; ++k) {
      c.mfi_nuc[k] = fv.values[mi[k]];
      c.mfi_cell[k] = fv.values[mi[3 + k]];
    }
    c.features = fv;
    c.display = io::crop(fov, dets[i].centroid, config.display_size);
    c.nucleus_mask = shift_mask(nm.mask, th.origin, c.display.origin, config.display_size, config.display_size);
    c.cell_mask = shift_mask(cell, th.origin, c.display.origin, config.display_size, config.display_size);
    r.candidates.push_back(std::move(c));
  }
  return r;
}

SlideResult run_slide(const fs::path& slide_root, const PipelineConfig& config) {
  const auto wall0 = Clock::now();
  const io::Slide slide = io::load_slide(slide_root);
  SlideResult res;
  res.slide_id = slide.meta().slide_id;
  res.config_hash = config.hash();
  res.qc = io::validate_slide(slide);

  std::optional<classify::Classifier> clf;
  if (!config.rules_only && !config.model_path.empty()) clf = classify::load_classifier(config.model_path);
  res.rules_only = !clf.has_value();
  classify::RuleSet rules;
  for (const auto& text : config.rules) rules.rules.push_back(classify::parse_rule(text));

  const auto& fovs = slide.fovs();
  const int nworkers = std::max(1, config.workers);
  auto parallel_for = [&](auto&& body) {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < fovs.size();) body(i);
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < nworkers; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  };

  if (config.ck_cutoff) {
    res.ck_cutoff = *config.ck_cutoff;
  } else {
    std::vector<double> cut(fovs.size(), std::numeric_limits<double>::quiet_NaN());
    parallel_for([&](std::size_t i) {
      try {
        cut[i] = features::ck_cutoff_from_background(
            png::read_gray16(slide.root() / io::plane_filename(fovs[i], io::Channel::Ck)));
      } catch (const std::exception&) {
      }
    });
    std::erase_if(cut, [](double v) { return std::isnan(v); });
    if (cut.empty()) throw Error(ErrorCode::IoFailure, "no readable CK plane in " + slide_root.string());
    std::sort(cut.begin(), cut.end());
    res.ck_cutoff = cut[(cut.size() - 1) / 2];
  }

  std::vector<FovResult> per_fov(fovs.size());
  std::vector<std::string> errors(fovs.size());
  parallel_for([&](std::size_t i) {
    try {
      const auto t0 = Clock::now();
      const io::FieldOfView fov = slide.load_fov(fovs[i]);
      const double load = seconds_since(t0);
      per_fov[i] = process_fov(fov, res.slide_id, config, res.ck_cutoff, clf ? &*clf : nullptr, rules);
      per_fov[i].times.load = load;
    } catch (const std::exception& e) {
      errors[i] = "FOV r" + std::to_string(fovs[i].row) + "_c" + std::to_string(fovs[i].col) + ": " + e.what();
    }
  });

  for (std::size_t i = 0; i < fovs.size(); ++i) {
    if (!errors[i].empty()) {
      res.fov_errors.push_back(errors[i]);
      res.qc.failures.push_back(errors[i]);
      continue;
    }
    FovResult& f = per_fov[i];
    res.funnel.detected += f.funnel.detected;
    res.funnel.segmented += f.funnel.segmented;
    res.funnel.rule_passed += f.funnel.rule_passed;
    res.funnel.classifier_evaluated += f.funnel.classifier_evaluated;
    res.funnel.classifier_passed += f.funnel.classifier_passed;
    res.funnel.candidates += f.funnel.candidates;
    res.times.load += f.times.load;
    res.times.detect += f.times.detect;
    res.times.nucseg += f.times.nucseg;
    res.times.cellseg += f.times.cellseg;
    res.times.features += f.times.features;
    res.times.classify += f.times.classify;
    std::move(f.candidates.begin(), f.candidates.end(), std::back_inserter(res.candidates));
    std::move(f.cells.begin(), f.cells.end(), std::back_inserter(res.cells));
  }
  if (!fovs.empty() && res.fov_errors.size() == fovs.size()) {
    throw Error(ErrorCode::IoFailure, "every FOV failed; first error: " + res.fov_errors.front());
  }
  res.times.wall = seconds_since(wall0);
  return res;
}

namespace {

std::uint8_t stretch(std::uint16_t v, std::uint16_t lo, std::uint16_t hi) {
  if (hi <= lo) return 0;
  return static_cast<std::uint8_t>(std::lround(255.0 * (v - lo) / static_cast<double>(hi - lo)));
}

png::Rgb8 composite(const io::Thumbnail& t) {
  const int n = t.size;
  png::Rgb8 img{n, n, std::vector<std::uint8_t>(static_cast<std::size_t>(3) * n * n, 0)};
  // CD45 red, CK green, DAPI blue. Each channel runs from its own minimum
  // to the brightest pixel of the crop, so a channel holding only
  // background stays dark instead of being stretched into noise.
  constexpr std::array<io::Channel, 3> rgb{io::Channel::Cd45, io::Channel::Ck, io::Channel::Dapi};
  std::uint16_t hi = 0;
  for (io::Channel ch : rgb) {
    const auto px = t.plane(ch).pixels();
    hi = std::max(hi, *std::max_element(px.begin(), px.end()));
  }
  for (int c = 0; c < 3; ++c) {
    const Plane16& p = t.plane(rgb[c]);
    const std::uint16_t lo = *std::min_element(p.pixels().begin(), p.pixels().end());
    for (std::size_t i = 0; i < p.size(); ++i) img.data[3 * i + c] = stretch(p[i], lo, hi);
  }
  return img;
}

void draw_contour(png::Rgb8& img, const Mask& m, std::array<std::uint8_t, 3> color) {
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m(x, y)) continue;
      const bool edge = !m.contains(x - 1, y) || !m(x - 1, y) || !m.contains(x + 1, y) || !m(x + 1, y) ||
                        !m.contains(x, y - 1) || !m(x, y - 1) || !m.contains(x, y + 1) || !m(x, y + 1);
      if (!edge) continue;
      const std::size_t i = 3 * (static_cast<std::size_t>(y) * m.width() + x);
      std::copy(color.begin(), color.end(), img.data.begin() + static_cast<std::ptrdiff_t>(i));
    }
}

json rle_json(const Mask& m) {
  const MaskRle r = encode_rle(m);
  return {{"width", r.width}, {"height", r.height}, {"runs", r.runs}};
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
  }
  fs::rename(tmp, path);
}

json feature_row(const std::string& id, io::GridPos fov, int index, bool rule_pass,
                 const features::FeatureVector& fv) {
  return {{"id", id},
          {"fov", {fov.row, fov.col}},
          {"index", index},
          {"rule_pass", rule_pass},
          {"quality_flags", features::flag_names(fv.flags)},
          {"values", fv.values}};
}

json feature_table_header(const std::string& slide_id) {
  return {{"slide_id", slide_id},
          {"schema_hash", features::schema_hash()},
          {"feature_names", features::feature_names()},
          {"rows", json::array()}};
}

}  // namespace

std::string funnel_report(const SlideResult& r) {
  const Funnel& f = r.funnel;
  const bool monotone = f.detected >= f.segmented && f.segmented >= f.rule_passed &&
                        f.classifier_evaluated <= f.segmented && f.classifier_passed <= f.classifier_evaluated &&
                        f.candidates <= f.segmented && (r.rules_only || f.candidates == f.classifier_passed);
  if (!monotone) throw std::logic_error("funnel counts are not monotone");
  auto ratio = [](long num, long den) -> json {
    if (den == 0) return "n/a";
    return static_cast<double>(num) / static_cast<double>(den);
  };
  json j;
  j["slide_id"] = r.slide_id;
  j["config_hash"] = r.config_hash;
  j["mode"] = r.rules_only ? "rules-only" : "classifier";
  j["counts"] = {{"detected", f.detected},
                 {"segmented", f.segmented},
                 {"rule_passed", f.rule_passed},
                 {"classifier_evaluated", f.classifier_evaluated},
                 {"classifier_passed", f.classifier_passed},
                 {"candidates", f.candidates}};
  j["ratios"] = {{"segmented_per_detected", ratio(f.segmented, f.detected)},
                 {"rule_passed_per_detected", ratio(f.rule_passed, f.detected)},
                 {"candidates_per_detected", ratio(f.candidates, f.detected)},
                 {"reduction_factor", f.detected == 0 || f.candidates == 0 ? json("n/a") : ratio(f.detected, f.candidates)}};
  j["fov_errors"] = r.fov_errors;
  return j.dump(2);
}

ExportManifest export_result(const SlideResult& result, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  json cands = json::array();
  json feats = feature_table_header(result.slide_id);
  std::vector<std::string> files;
  for (std::size_t k = 0; k < result.candidates.size(); ++k) {
    const Candidate& c = result.candidates[k];
    json images;
    for (io::Channel ch : io::kChannels) {
      const std::string rel = "images/" + c.id + "_" + std::string(io::channel_tag(ch)) + ".png";
      png::write_gray16(out_dir / rel, c.display.plane(ch), 6);
      images[std::string(io::channel_tag(ch))] = rel;
      files.push_back(rel);
    }
    png::Rgb8 comp = composite(c.display);
    const std::string comp_rel = "images/" + c.id + "_composite.png";
    png::write_rgb8(out_dir / comp_rel, comp);
    draw_contour(comp, c.cell_mask, {255, 255, 255});
    draw_contour(comp, c.nucleus_mask, {255, 255, 0});
    const std::string over_rel = "images/" + c.id + "_overlay.png";
    png::write_rgb8(out_dir / over_rel, comp);
    images["composite"] = comp_rel;
    images["overlay"] = over_rel;
    files.push_back(comp_rel);
    files.push_back(over_rel);

    cands.push_back({{"id", c.id},
                     {"fov", {c.fov.row, c.fov.col}},
                     {"index", c.index},
                     {"centroid", {c.centroid.x, c.centroid.y}},
                     {"radius", c.radius_px},
                     {"probability", c.probability},
                     {"rule_pass", c.rule_pass},
                     {"mfi",
                      {{"nuc", {{"dapi", c.mfi_nuc[0]}, {"ck", c.mfi_nuc[1]}, {"cd45", c.mfi_nuc[2]}}},
                       {"cell", {{"dapi", c.mfi_cell[0]}, {"ck", c.mfi_cell[1]}, {"cd45", c.mfi_cell[2]}}}}},
                     {"features_ref", "features.json#/rows/" + std::to_string(k)},
                     {"images", images},
                     {"display_origin", {c.display.origin.x, c.display.origin.y}},
                     {"masks", {{"nucleus", rle_json(c.nucleus_mask)}, {"cell", rle_json(c.cell_mask)}}},
                     {"quality_flags", features::flag_names(c.features.flags)}});
    feats["rows"].push_back(feature_row(c.id, c.fov, c.index, c.rule_pass, c.features));
  }
  json doc;
  doc["slide_id"] = result.slide_id;
  doc["config_hash"] = result.config_hash;
  doc["mode"] = result.rules_only ? "rules-only" : "classifier";
  doc["ck_cutoff"] = result.ck_cutoff;
  doc["candidates"] = cands;
  write_text(out_dir / "candidates.json", doc.dump(1) + "\n");
  write_text(out_dir / "features.json", feats.dump() + "\n");
  write_text(out_dir / "report.json", funnel_report(result) + "\n");
  files.insert(files.end(), {"candidates.json", "features.json", "report.json"});
  std::sort(files.begin(), files.end());

  ExportManifest m;
  json jm;
  jm["slide_id"] = result.slide_id;
  jm["config_hash"] = result.config_hash;
  jm["files"] = json::array();
  for (const auto& rel : files) {
    ExportManifest::Entry e{rel, sha256_file(out_dir / rel), fs::file_size(out_dir / rel)};
    jm["files"].push_back({{"path", e.path}, {"sha256", e.sha256}, {"bytes", e.bytes}});
    m.files.push_back(std::move(e));
  }
  write_text(out_dir / "manifest.json", jm.dump(1) + "\n");
  return m;
}

void write_feature_table(const fs::path& path, const std::string& slide_id, const std::vector<CellRecord>& cells,
                         const std::vector<std::string>& labels) {
  if (!labels.empty() && labels.size() != cells.size()) throw Error(ErrorCode::BadParams, "one label per cell");
  json j = feature_table_header(slide_id);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellRecord& c = cells[i];
    json row = feature_row(candidate_id(slide_id, c.fov, c.index), c.fov, c.index, c.rule_pass, c.features);
    if (!labels.empty()) row["label"] = labels[i];
    j["rows"].push_back(std::move(row));
  }
  write_text(path, j.dump() + "\n");
}

FeatureTable read_feature_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  FeatureTable t;
  try {
    const json j = json::parse(in);
    if (j.at("schema_hash").get<std::string>() != features::schema_hash()) {
      throw Error(ErrorCode::SchemaMismatch, path.string() + " uses a different feature schema");
    }
    for (const auto& row : j.at("rows")) {
      t.ids.push_back(row.at("id").get<std::string>());
      t.labels.push_back(row.value("label", ""));
      t.rule_pass.push_back(row.value("rule_pass", false));
      t.X.push_back(row.at("values").get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return t;
}

std::vector<std::string> truth_labels(const std::vector<CellRecord>& cells, const synth::GroundTruth& truth) {
  std::vector<std::string> out;
  out.reserve(cells.size());
  for (const CellRecord& c : cells) {
    const synth::FovTruth* ft = truth.find(c.fov);
    std::string label = "background";
    if (ft) {
      const PixelPos p = io::pixel_of(c.centroid);
      if (ft->nucleus_labels.contains(p.x, p.y)) {
        const int k = ft->nucleus_labels(p.x, p.y);
        if (k > 0) label = std::string(synth::class_name(ft->cells[k - 1].cls));
      }
    }
    out.push_back(std::move(label));
  }
  return out;
}

}  // namespace bria::pipeline

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bria/cellseg.hpp"
#include "bria/classify.hpp"
#include "bria/detect.hpp"
#include "bria/features.hpp"
#include "bria/nucseg.hpp"
#include "bria/slide_io.hpp"
#include "bria/synth.hpp"

namespace bria::pipeline {

struct PipelineConfig {
  detect::DetectParams detect;
  nucseg::NucSegParams nucseg;
  cellseg::ClassicalParams cellseg;
  int patch_size = 512;
  int patch_overlap = 64;
  int thumb_size = 24;
  int display_size = 96;
  /// Unset: estimated from the slide's CK background.
  std::optional<double> ck_cutoff;
  std::vector<std::string> rules{"Nuc_MFI_ck > 269", "Nuc_MFI_cd45 <= 3000"};
  bool rules_only = false;
  /// Run the classifier on every segmented cell instead of rule-passed ones.
  bool classify_all = false;
  std::string model_path;
  /// Keep per-cell features for every segmented cell (training data).
  bool keep_cells = false;
  int workers = 1;
  std::uint64_t seed = 0;

  std::string to_json() const;
  static PipelineConfig from_json(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& path);
  /// SHA-256 of the canonical JSON without `workers`; the model path is
  /// replaced by the model file's hash.
  std::string hash() const;
};

struct MaskRle {
  int width = 0;
  int height = 0;
  /// Alternating run lengths in row-major order, starting with a 0-run.
  std::vector<int> runs;
};
MaskRle encode_rle(const Mask& m);
Mask decode_rle(const MaskRle& rle);

struct Candidate {
  std::string id;
  io::GridPos fov;
  int index = 0;
  Point centroid;
  double radius_px = 0.0;
  double probability = 0.0;
  bool rule_pass = false;
  std::array<double, io::kNumChannels> mfi_nuc{};
  std::array<double, io::kNumChannels> mfi_cell{};
  features::FeatureVector features;
  /// Display crop around the centroid and the masks in its frame.
  io::Thumbnail display;
  Mask nucleus_mask;
  Mask cell_mask;
};

/// Per-cell record kept when PipelineConfig::keep_cells is set.
struct CellRecord {
  io::GridPos fov;
  int index = 0;
  Point centroid;
  double radius_px = 0.0;
  bool rule_pass = false;
  bool classified = false;
  double probability = 0.0;
  features::FeatureVector features;
};

struct Funnel {
  long detected = 0;
  long segmented = 0;
  long rule_passed = 0;
  long classifier_evaluated = 0;
  long classifier_passed = 0;
  long candidates = 0;
};

struct StageTimes {
  double load = 0, detect = 0, nucseg = 0, cellseg = 0, features = 0, classify = 0, wall = 0;
};

struct SlideResult {
  std::string slide_id;
  std::string config_hash;
  bool rules_only = false;
  double ck_cutoff = 0.0;
  Funnel funnel;
  std::vector<Candidate> candidates;
  std::vector<CellRecord> cells;
  io::QCReport qc;
  std::vector<std::string> fov_errors;
  StageTimes times;
};

/// Runs detection through classification on every FOV with `workers`
/// threads. Output order is (row, col, detection index) regardless of
/// scheduling. Per-FOV failures are recorded, not thrown.
SlideResult run_slide(const std::filesystem::path& slide_root, const PipelineConfig& config);

/// Processes one FOV; used by run_slide and exposed for tests.
struct FovResult {
  Funnel funnel;
  std::vector<Candidate> candidates;
  std::vector<CellRecord> cells;
  StageTimes times;
};
FovResult process_fov(const io::FieldOfView& fov, const std::string& slide_id, const PipelineConfig& config,
                      double ck_cutoff, const classify::Classifier* clf, const classify::RuleSet& rules);

struct ExportManifest {
  struct Entry {
    std::string path;
    std::string sha256;
    std::uintmax_t bytes = 0;
  };
  std::vector<Entry> files;
};

/// Writes candidates.json, features.json, report.json, five PNGs per
/// candidate and manifest.json. Throws Error(IoFailure).
ExportManifest export_result(const SlideResult& result, const std::filesystem::path& out_dir);

/// Stage counts and reduction ratios as JSON; ratios are "n/a" with no
/// detections. Throws std::logic_error if the counts are not monotone.
std::string funnel_report(const SlideResult& result);

/// Writes every kept cell as a feature table (same layout as features.json).
/// `labels` may be empty or hold one class name per cell.
void write_feature_table(const std::filesystem::path& path, const std::string& slide_id,
                         const std::vector<CellRecord>& cells, const std::vector<std::string>& labels);

struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<std::string> labels;
  std::vector<bool> rule_pass;
  classify::Matrix X;
};
FeatureTable read_feature_table(const std::filesystem::path& path);

/// Class of the synthetic nucleus under each cell's centroid, or
/// "background" when the centroid misses every planted nucleus.
std::vector<std::string> truth_labels(const std::vector<CellRecord>& cells, const synth::GroundTruth& truth);

}  // namespace bria::pipeline

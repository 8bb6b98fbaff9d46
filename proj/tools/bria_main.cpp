// bria: command-line front end for the CTC detection pipeline.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "bria/error.hpp"
#include "bria/pipeline.hpp"
#include "bria/png_io.hpp"
#include "bria/review.hpp"
#include "bria/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bria;

namespace {

struct Common {
  std::string config;
  int workers = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string model;
  bool rules_only = false;
};

pipeline::PipelineConfig make_config(const Common& c) {
  pipeline::PipelineConfig cfg = c.config.empty() ? pipeline::PipelineConfig{} : pipeline::PipelineConfig::load(c.config);
  if (c.workers > 0) cfg.workers = c.workers;
  if (c.seed_set) cfg.seed = c.seed;
  if (!c.model.empty()) cfg.model_path = c.model;
  if (c.rules_only) cfg.rules_only = true;
  return cfg;
}

io::GridPos parse_fov(const std::string& s) {
  int r = 0, c = 0;
  if (std::sscanf(s.c_str(), "%d,%d", &r, &c) != 2) throw Error(ErrorCode::BadParams, "--fov expects ROW,COL");
  return {r, c};
}

classify::Matrix to_matrix(const pipeline::FeatureTable& t, bool rule_passed_only, std::vector<int>& y) {
  classify::Matrix X;
  y.clear();
  for (std::size_t i = 0; i < t.X.size(); ++i) {
    if (rule_passed_only && !t.rule_pass[i]) continue;
    if (t.labels[i].empty()) throw Error(ErrorCode::BadParams, "row " + t.ids[i] + " has no label");
    X.push_back(t.X[i]);
    y.push_back(t.labels[i] == "ctc" ? 1 : -1);
  }
  return X;
}

void print_times(const pipeline::StageTimes& t) {
  std::fprintf(stderr, "time (s): load %.2f detect %.2f nucseg %.2f cellseg %.2f features %.2f classify %.2f wall %.2f\n",
               t.load, t.detect, t.nucseg, t.cellseg, t.features, t.classify, t.wall);
}

review::HttpServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Circulating tumour cell detection on three-channel immunofluorescence slides"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  app.add_option("--workers", common.workers, "Worker threads (FOV-level)");
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { common.seed = s; common.seed_set = true; },
                                         "Random seed");
  app.add_option("--model", common.model, "Classifier model JSON");
  app.add_flag("--rules-only", common.rules_only, "Skip the classifier; candidates are rule-passed cells");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic slide with ground truth");
  synth::SlideSpec spec;
  std::string synth_out;
  int fov_size = 2040;
  synth_cmd->add_option("out", synth_out, "Output slide directory")->required();
  synth_cmd->add_option("--slide-id", spec.slide_id, "Slide identifier");
  synth_cmd->add_option("--rows", spec.grid_rows, "FOV grid rows");
  synth_cmd->add_option("--cols", spec.grid_cols, "FOV grid columns");
  synth_cmd->add_option("--fov-size", fov_size, "FOV width and height in pixels");
  synth_cmd->add_option("--cells", spec.total_cells, "Total planted cells")->required();
  synth_cmd->add_option("--ctc", spec.n_ctc, "Planted CTCs among them");
  synth_cmd->add_option("--artefact-cells", spec.n_artefact_cells, "Planted CK+/CD45+ artefact cells");
  synth_cmd->add_option("--flares", spec.flares_per_fov, "Flares per FOV");
  synth_cmd->add_option("--aggregates", spec.aggregates_per_fov, "Dye aggregates per FOV");

  // detect
  auto* detect_cmd = app.add_subcommand("detect", "Detect cells and write one detection file per FOV");
  std::string slide_path, out_path;
  detect_cmd->add_option("slide", slide_path)->required()->check(CLI::ExistingDirectory);
  detect_cmd->add_option("--out", out_path)->required();

  // segment
  auto* segment_cmd = app.add_subcommand("segment", "Segment one FOV and write the cell label image");
  std::string fov_arg = "0,0";
  segment_cmd->add_option("slide", slide_path)->required()->check(CLI::ExistingDirectory);
  segment_cmd->add_option("--fov", fov_arg, "ROW,COL");
  segment_cmd->add_option("--out", out_path)->required();

  // features
  auto* features_cmd = app.add_subcommand("features", "Extract a feature table for every segmented cell");
  features_cmd->add_option("slide", slide_path)->required()->check(CLI::ExistingDirectory);
  features_cmd->add_option("--out", out_path)->required();

  // train / eval / importance
  std::string table_path;
  bool all_cells = false;
  int folds = 5, repeats = 10;
  auto* train_cmd = app.add_subcommand("train", "Grid-search, fit and calibrate the SVM");
  train_cmd->add_option("table", table_path, "Labelled feature table")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_path)->required();
  train_cmd->add_option("--folds", folds);
  train_cmd->add_flag("--all-cells", all_cells, "Train on every cell, not just rule-passed ones");
  auto* eval_cmd = app.add_subcommand("eval", "Confusion matrix of a model on a labelled table");
  eval_cmd->add_option("table", table_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_flag("--all-cells", all_cells);
  auto* imp_cmd = app.add_subcommand("importance", "Permutation feature importance");
  imp_cmd->add_option("table", table_path)->required()->check(CLI::ExistingFile);
  imp_cmd->add_option("--repeats", repeats);
  imp_cmd->add_flag("--all-cells", all_cells);

  // run / export
  auto* run_cmd = app.add_subcommand("run", "Run the pipeline on a slide and print the funnel report");
  run_cmd->add_option("slide", slide_path)->required()->check(CLI::ExistingDirectory);
  run_cmd->add_option("--out", out_path, "Also export candidates here");
  auto* export_cmd = app.add_subcommand("export", "Run the pipeline and export candidates");
  export_cmd->add_option("slide", slide_path)->required()->check(CLI::ExistingDirectory);
  export_cmd->add_option("--out", out_path)->required();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Serve exports to reviewers over HTTP");
  std::vector<std::string> export_dirs;
  std::string log_dir = "verdicts", host = "127.0.0.1";
  int port = 8080;
  serve_cmd->add_option("exports", export_dirs, "Export directories")->required()->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--log-dir", log_dir, "Directory for verdict logs");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port (0 picks a free one)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      spec.fov_width = spec.fov_height = fov_size;
      if (common.seed_set) spec.seed = common.seed;
      const auto slide = synth::generate_slide(spec);
      synth::write_synthetic(synth_out, slide);
      std::printf("wrote %s: %dx%d FOVs, %d cells (%d CTC)\n", synth_out.c_str(), spec.grid_rows, spec.grid_cols,
                  spec.total_cells, spec.n_ctc);
    } else if (detect_cmd->parsed()) {
      const auto cfg = make_config(common);
      const io::Slide slide = io::load_slide(slide_path);
      fs::create_directories(out_path);
      long total = 0;
      for (const io::GridPos& pos : slide.fovs()) {
        const auto fov = slide.load_fov(pos);
        const auto dets = detect::detect_cells(fov.plane(io::Channel::Dapi), cfg.detect);
        total += static_cast<long>(dets.size());
        detect::write_detections(fs::path(out_path) / ("r" + std::to_string(pos.row) + "_c" + std::to_string(pos.col) +
                                                       ".json"),
                                 pos, dets);
      }
      std::printf("%ld detections in %zu FOVs\n", total, slide.fovs().size());
    } else if (segment_cmd->parsed()) {
      const auto cfg = make_config(common);
      const io::Slide slide = io::load_slide(slide_path);
      const auto fov = slide.load_fov(parse_fov(fov_arg));
      const auto dets = detect::detect_cells(fov.plane(io::Channel::Dapi), cfg.detect);
      const auto maps = cellseg::classical_probmaps(fov, cfg.cellseg);
      const auto inst = cellseg::instance_segment(maps, dets);
      png::write_gray16(out_path, inst.labels);
      std::printf("%zu cells segmented from %zu detections\n", inst.masks.size(), dets.size());
    } else if (features_cmd->parsed()) {
      auto cfg = make_config(common);
      cfg.keep_cells = true;
      cfg.rules_only = true;
      const auto res = pipeline::run_slide(slide_path, cfg);
      std::vector<std::string> labels;
      if (fs::exists(fs::path(slide_path) / "ground_truth.json")) {
        labels = pipeline::truth_labels(res.cells, synth::read_ground_truth(slide_path));
      }
      pipeline::write_feature_table(out_path, res.slide_id, res.cells, labels);
      std::printf("%zu cells, %ld rule-passed%s\n", res.cells.size(), res.funnel.rule_passed,
                  labels.empty() ? "" : ", labelled from ground truth");
    } else if (train_cmd->parsed()) {
      const auto table = pipeline::read_feature_table(table_path);
      std::vector<int> y;
      const auto X = to_matrix(table, !all_cells, y);
      classify::TrainReport rep;
      const auto clf = classify::train_classifier(X, y, classify::GridSpec{}, folds, common.seed,
                                                  std::max(1, common.workers), &rep);
      classify::save_classifier(out_path, clf);
      const auto& best = rep.grid.best;
      std::printf("%zu samples; best %s C=%g gamma=%g degree=%d, CV accuracy %.4f; Platt A=%.4f B=%.4f\n", X.size(),
                  std::string(classify::kernel_name(best.params.kernel.kind)).c_str(), best.params.C,
                  best.params.kernel.gamma, best.params.kernel.degree, best.mean_accuracy, rep.platt.a, rep.platt.b);
    } else if (eval_cmd->parsed() || imp_cmd->parsed()) {
      if (common.model.empty()) throw Error(ErrorCode::BadParams, "--model is required");
      const auto clf = classify::load_classifier(common.model);
      const auto table = pipeline::read_feature_table(table_path);
      std::vector<int> y;
      const auto X = to_matrix(table, !all_cells, y);
      if (eval_cmd->parsed()) {
        const auto c = classify::evaluate(clf, X, y);
        std::printf("tp %ld tn %ld fp %ld fn %ld\nsensitivity %.4f specificity %.4f accuracy %.4f\n", c.tp, c.tn,
                    c.fp, c.fn, c.sensitivity, c.specificity, c.accuracy);
      } else {
        auto imp = classify::permutation_importance(clf, X, y, repeats, common.seed);
        for (const auto& i : imp) std::printf("%-40s %.6f\n", i.name.c_str(), i.mean_drop);
      }
    } else if (run_cmd->parsed() || export_cmd->parsed()) {
      const auto cfg = make_config(common);
      const auto res = pipeline::run_slide(slide_path, cfg);
      std::cout << pipeline::funnel_report(res) << '\n';
      print_times(res.times);
      for (const auto& e : res.fov_errors) std::fprintf(stderr, "warning: %s\n", e.c_str());
      if (!out_path.empty()) {
        const auto m = pipeline::export_result(res, out_path);
        std::fprintf(stderr, "exported %zu files to %s\n", m.files.size(), out_path.c_str());
      }
    } else if (serve_cmd->parsed()) {
      std::vector<fs::path> dirs(export_dirs.begin(), export_dirs.end());
      review::ReviewService service(dirs, log_dir);
      review::HttpServer server(service);
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
      std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
      std::printf("serving %zu slide(s) on http://%s:%d\n", service.slides().size(), host.c_str(), bound);
      std::fflush(stdout);
      server.listen();
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bria: %s\n", e.what());
    return 1;
  }
  return 0;
}

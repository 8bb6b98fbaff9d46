#include <benchmark/benchmark.h>

#include "bria/cellseg.hpp"
#include "bria/synth.hpp"

using namespace bria;

namespace {

struct Scene {
  io::FieldOfView fov;
  std::vector<detect::Detection> dets;
  cellseg::ProbMaps maps;
};

const Scene& scene() {
  static const Scene s = [] {
    synth::SlideSpec spec;
    spec.fov_width = spec.fov_height = 1024;
    spec.total_cells = 320;
    spec.seed = 5;
    Scene out;
    out.fov = synth::generate_slide(spec).fovs[0];
    out.dets = detect::detect_cells(out.fov.plane(io::Channel::Dapi));
    out.maps = cellseg::classical_probmaps(out.fov);
    return out;
  }();
  return s;
}

void BM_ClassicalProbmaps(benchmark::State& state) {
  const auto& s = scene();
  for (auto _ : state) benchmark::DoNotOptimize(cellseg::classical_probmaps(s.fov));
}
BENCHMARK(BM_ClassicalProbmaps)->Unit(benchmark::kMillisecond);

void BM_Watershed(benchmark::State& state) {
  const auto& s = scene();
  for (auto _ : state) benchmark::DoNotOptimize(cellseg::instance_segment(s.maps, s.dets));
  state.counters["seeds"] = static_cast<double>(s.dets.size());
}
BENCHMARK(BM_Watershed)->Unit(benchmark::kMillisecond);

void BM_MergePatches(benchmark::State& state) {
  const auto& s = scene();
  std::vector<cellseg::Patch> patches;
  for (const auto& w : cellseg::patch_grid(1024, 1024)) {
    cellseg::ProbMaps m(w.width, w.height);
    for (int y = 0; y < w.height; ++y)
      for (int x = 0; x < w.width; ++x) {
        m.cell(x, y) = s.maps.cell(x + w.x, y + w.y);
        m.boundary(x, y) = s.maps.boundary(x + w.x, y + w.y);
        m.background(x, y) = s.maps.background(x + w.x, y + w.y);
      }
    patches.push_back({std::move(m), {w.x, w.y}});
  }
  for (auto _ : state) benchmark::DoNotOptimize(cellseg::merge_patches(patches, 1024, 1024));
}
BENCHMARK(BM_MergePatches)->Unit(benchmark::kMillisecond);

}  // namespace

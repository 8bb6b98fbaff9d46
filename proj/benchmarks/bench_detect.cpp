#include <map>

#include <benchmark/benchmark.h>

#include "bria/detect.hpp"
#include "bria/synth.hpp"

using namespace bria;

namespace {

const io::FieldOfView& fov_with(int size, int cells) {
  static std::map<std::pair<int, int>, io::FieldOfView> cache;
  auto [it, inserted] = cache.try_emplace({size, cells});
  if (inserted) {
    synth::SlideSpec s;
    s.fov_width = s.fov_height = size;
    s.total_cells = cells;
    s.seed = 3;
    it->second = synth::generate_slide(s).fovs[0];
  }
  return it->second;
}

void BM_DetectCells(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto& fov = fov_with(size, size * size / 3300);
  for (auto _ : state) benchmark::DoNotOptimize(detect::detect_cells(fov.plane(io::Channel::Dapi)));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_DetectCells)->Arg(512)->Arg(1024)->Arg(2040)->Unit(benchmark::kMillisecond);

void BM_LogResponse(benchmark::State& state) {
  const auto& fov = fov_with(1024, 300);
  const PlaneF plane = convert<float>(fov.plane(io::Channel::Dapi));
  const std::vector<double> sigmas{3.0, 3.5, 4.2, 5.0, 6.0};
  for (auto _ : state) benchmark::DoNotOptimize(detect::log_response(plane, sigmas));
}
BENCHMARK(BM_LogResponse)->Unit(benchmark::kMillisecond);

}  // namespace

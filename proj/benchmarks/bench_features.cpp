#include <random>

#include <benchmark/benchmark.h>

#include "bria/features.hpp"

using namespace bria;

namespace {

struct Thumb {
  io::Planes planes;
  Mask nuc, cell;
};

Thumb random_thumb() {
  std::mt19937_64 rng(1);
  Thumb t;
  for (auto& p : t.planes) {
    p = Plane16(24, 24);
    for (auto& v : p.pixels()) v = static_cast<std::uint16_t>(100 + rng() % 3000);
  }
  t.nuc = Mask(24, 24, 0);
  t.cell = Mask(24, 24, 0);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      const double d2 = (x - 12) * (x - 12) + (y - 12) * (y - 12);
      t.nuc(x, y) = d2 <= 36;
      t.cell(x, y) = d2 <= 100;
    }
  return t;
}

void BM_Extract(benchmark::State& state) {
  const Thumb t = random_thumb();
  for (auto _ : state) benchmark::DoNotOptimize(features::extract(t.planes, t.nuc, t.cell, {}));
}
BENCHMARK(BM_Extract);

void BM_Intensity(benchmark::State& state) {
  const Thumb t = random_thumb();
  for (auto _ : state) benchmark::DoNotOptimize(features::intensity_features(t.planes, t.nuc, t.cell, 300.0));
}
BENCHMARK(BM_Intensity);

void BM_Gabor(benchmark::State& state) {
  const Thumb t = random_thumb();
  for (auto _ : state) benchmark::DoNotOptimize(features::gabor_features(t.planes[1]));
}
BENCHMARK(BM_Gabor);

void BM_Lbp(benchmark::State& state) {
  const Thumb t = random_thumb();
  for (auto _ : state) benchmark::DoNotOptimize(features::lbp_features(t.planes));
}
BENCHMARK(BM_Lbp);

}  // namespace

#include <random>

#include <benchmark/benchmark.h>

#include "bria/classify.hpp"

using namespace bria;

namespace {

void make_data(int n, int dim, classify::Matrix& X, std::vector<int>& y) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0, 1);
  for (int i = 0; i < n; ++i) {
    const int l = i % 2 ? 1 : -1;
    std::vector<double> x(dim);
    for (auto& v : x) v = g(rng) + 0.3 * l;
    X.push_back(std::move(x));
    y.push_back(l);
  }
}

void BM_TrainRbf(benchmark::State& state) {
  classify::Matrix X;
  std::vector<int> y;
  make_data(static_cast<int>(state.range(0)), features::kNumFeatures, X, y);
  const auto Z = classify::Normalizer::fit(X).apply(X);
  for (auto _ : state)
    benchmark::DoNotOptimize(classify::train_svm(Z, y, {{classify::Kernel::Rbf, 0.01, 0, 3}, 10.0}));
}
BENCHMARK(BM_TrainRbf)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  classify::Matrix X;
  std::vector<int> y;
  make_data(400, features::kNumFeatures, X, y);
  classify::Classifier clf;
  clf.normalizer = classify::Normalizer::fit(X);
  clf.model = classify::train_svm(clf.normalizer.apply(X), y, {{classify::Kernel::Rbf, 0.01, 0, 3}, 10.0});
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(classify::predict(clf, X[i++ % X.size()]));
  state.counters["support_vectors"] = static_cast<double>(clf.model.support_vectors.size());
}
BENCHMARK(BM_Predict);

}  // namespace

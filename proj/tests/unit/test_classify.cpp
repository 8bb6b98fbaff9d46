#include <array>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bria/classify.hpp"
#include "bria/error.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace bria;
using namespace bria::classify;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::ParseError;
}

void separable(std::mt19937_64& rng, int n, int dim, Matrix& X, std::vector<int>& y) {
  std::normal_distribution<double> g(0, 1);
  X.clear();
  y.clear();
  for (int i = 0; i < n; ++i) {
    const int label = i % 2 ? 1 : -1;
    std::vector<double> x(dim);
    for (auto& v : x) v = g(rng);
    x[0] = label * (2.0 + std::abs(g(rng)));
    X.push_back(x);
    y.push_back(label);
  }
}

}  // namespace

TEST(Kernel, Values) {
  const std::vector<double> a{1, 2}, b{3, -1};
  EXPECT_DOUBLE_EQ(kernel_value({Kernel::Linear, 0, 0, 1}, a, b), 1.0);
  EXPECT_DOUBLE_EQ(kernel_value({Kernel::Rbf, 0.5, 0, 1}, a, b), std::exp(-0.5 * 13));
  EXPECT_DOUBLE_EQ(kernel_value({Kernel::Poly, 2.0, 1.0, 3}, a, b), 27.0);
  EXPECT_DOUBLE_EQ(kernel_value({Kernel::Sigmoid, 0.1, 0.0, 1}, a, b), std::tanh(0.1));
  EXPECT_EQ(parse_kernel("rbf"), Kernel::Rbf);
}

TEST(Normalizer, ScalesClampsAndChecksWidth) {
  const Matrix X{{0, 5, 1}, {10, 5, 3}};
  const auto n = Normalizer::fit(X);
  const auto v = n.apply(std::vector<double>{5, 9, 100});
  EXPECT_DOUBLE_EQ(v[0], 0.5);
  EXPECT_DOUBLE_EQ(v[1], 0.0);
  EXPECT_DOUBLE_EQ(v[2], 1.5);
  EXPECT_EQ(code_of([&] { n.apply(std::vector<double>{1, 2}); }), ErrorCode::SchemaMismatch);
}

TEST(Svm, XorWithRbf) {
  const Matrix X{{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  const std::vector<int> y{-1, -1, 1, 1};
  const auto m = train_svm(X, y, {{Kernel::Rbf, 1.0, 0, 3}, 10.0});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(m.decision(X[i]) > 0 ? 1 : -1, y[i]);
}

TEST(Svm, TwoPointMaxMargin) {
  const Matrix X{{0}, {1}};
  const std::vector<int> y{-1, 1};
  const auto m = train_svm(X, y, {{Kernel::Linear, 0, 0, 1}, 1000.0, 1e-6});
  // w = 2, b = -1: boundary at 0.5 with unit functional margin.
  EXPECT_NEAR(m.decision(std::vector<double>{0.5}), 0.0, 1e-6);
  EXPECT_NEAR(m.decision(std::vector<double>{0.0}), -1.0, 1e-6);
  EXPECT_NEAR(m.decision(std::vector<double>{1.0}), 1.0, 1e-6);
}

TEST(Svm, SingleClass) {
  const Matrix X{{0}, {1}};
  const std::vector<int> y{1, 1};
  EXPECT_EQ(code_of([&] { train_svm(X, y, {}); }), ErrorCode::SingleClass);
}

TEST(Svm, DualObjectiveMatchesBruteForceQp) {
  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const int n = 2 + seed % 7;
    std::normal_distribution<double> g(0, 1);
    Matrix X(n, std::vector<double>(2));
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      y[i] = i % 2 ? 1 : -1;
      X[i] = {g(rng) + 0.5 * y[i], g(rng)};
    }
    const double C = std::array{0.1, 1.0, 10.0}[seed % 3];
    const KernelParams k{Kernel::Rbf, 0.5, 0, 3};
    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) K(i, j) = kernel_value(k, X[i], X[j]);
    TrainInfo info;
    train_svm(X, y, {k, C}, &info);
    EXPECT_NEAR(info.objective, oracle::svm_dual_min(K, y, C), 1e-4) << "seed " << seed;
  }
}

TEST(Folds, StratifiedAndDeterministic) {
  std::vector<int> y(23, -1);
  for (int i = 0; i < 8; ++i) y[i * 2] = 1;
  const auto a = stratified_folds(y, 4, 9), b = stratified_folds(y, 4, 9);
  EXPECT_EQ(a, b);
  for (int f = 0; f < 4; ++f) {
    int pos = 0;
    for (std::size_t i = 0; i < y.size(); ++i) pos += a[i] == f && y[i] == 1;
    EXPECT_EQ(pos, 2);
  }
  EXPECT_EQ(code_of([&] { stratified_folds(y, 9, 0); }), ErrorCode::BadParams);
}

TEST(Grid, DefaultGridShape) {
  const auto cells = expand_grid(GridSpec{});
  EXPECT_EQ(cells.size(), 4u + 16u + 16u + 48u);
  EXPECT_EQ(cells.front().kernel.kind, Kernel::Linear);
}

TEST(Grid, SeparableDataSelectsPerfectCell) {
  std::mt19937_64 rng(3);
  Matrix X;
  std::vector<int> y;
  separable(rng, 60, 4, X, y);
  const auto r = grid_search_cv(X, y, GridSpec{}, 5, 1, 2);
  EXPECT_DOUBLE_EQ(r.best.mean_accuracy, 1.0);
  const auto again = grid_search_cv(X, y, GridSpec{}, 5, 1, 1);
  EXPECT_EQ(r.folds, again.folds);
  EXPECT_EQ(r.best.params.C, again.best.params.C);
  EXPECT_EQ(r.best.params.kernel.kind, again.best.params.kernel.kind);
}

TEST(Grid, TooManyFoldsFailsBeforeTraining) {
  const Matrix X{{0}, {1}, {2}};
  const std::vector<int> y{-1, 1, -1};
  EXPECT_EQ(code_of([&] { grid_search_cv(X, y, GridSpec{}, 2, 0); }), ErrorCode::BadParams);
}

TEST(Platt, SeparatedDecisionsGiveNegativeSlope) {
  std::vector<double> f;
  std::vector<int> y;
  for (int i = 0; i < 20; ++i) {
    f.push_back(i % 2 ? 2.0 : -2.0);
    y.push_back(i % 2 ? 1 : -1);
  }
  const Platt p = platt_calibrate(f, y);
  EXPECT_LT(p.a, 0.0);
  EXPECT_LE(platt_nll(f, y, p.a, p.b), platt_nll(f, y, -1.0, 0.0));
}

TEST(Platt, DominatesDefaultOnNoisyData) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> f;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    const int l = i % 3 ? -1 : 1;
    f.push_back(0.7 * l + 1.3 * g(rng));
    y.push_back(l);
  }
  const Platt p = platt_calibrate(f, y);
  EXPECT_LE(platt_nll(f, y, p.a, p.b), platt_nll(f, y, -1.0, 0.0));
  SVMModel m;
  m.platt_a = p.a;
  m.platt_b = p.b;
  m.kernel = {Kernel::Linear, 0, 0, 1};
  m.support_vectors = {{1.0}};
  m.dual_coef = {1.0};
  double prev = -1;
  for (double x = -3; x <= 3; x += 0.25) {
    const double pr = m.probability(std::vector<double>{x});
    EXPECT_GE(pr, prev);
    prev = pr;
  }
}

TEST(Predict, ThresholdIsInclusiveAndSchemaChecked) {
  Classifier clf;
  clf.normalizer = Normalizer::fit(Matrix{{0.0}, {1.0}});
  clf.model.kernel = {Kernel::Linear, 0, 0, 1};
  clf.model.support_vectors = {{1.0}};
  clf.model.dual_coef = {2.0};
  clf.model.bias = -1.0;
  clf.model.platt_a = -1.0;
  const std::vector<double> x{0.3};
  clf.model.threshold = clf.model.probability(clf.normalizer.apply(x));
  EXPECT_TRUE(predict(clf, x).candidate);
  clf.model.threshold = std::nextafter(clf.model.threshold, 1.0);
  EXPECT_FALSE(predict(clf, x).candidate);
  EXPECT_EQ(code_of([&] { predict(clf, std::vector<double>{1, 2}); }), ErrorCode::SchemaMismatch);
}

TEST(Predict, SupportVectorOfPositiveClassIsCandidate) {
  std::mt19937_64 rng(12);
  Matrix X;
  std::vector<int> y;
  separable(rng, 40, 3, X, y);
  const Classifier clf = train_classifier(X, y, GridSpec{{Kernel::Linear}, {1.0}, {1.0}, {1}}, 4, 0);
  for (std::size_t i = 0; i < X.size(); ++i)
    if (y[i] == 1) { EXPECT_TRUE(predict(clf, X[i]).candidate); }
}

TEST(Persistence, RoundTripAndSchemaCheck) {
  TempDir dir;
  std::mt19937_64 rng(13);
  Matrix X;
  std::vector<int> y;
  separable(rng, 30, features::kNumFeatures, X, y);
  Classifier clf = train_classifier(X, y, GridSpec{{Kernel::Rbf}, {1.0}, {0.01}, {1}}, 3, 0);
  save_classifier(dir / "m.json", clf);
  const Classifier back = load_classifier(dir / "m.json");
  for (const auto& x : X) EXPECT_DOUBLE_EQ(predict(back, x).probability, predict(clf, x).probability);
  clf.schema_hash = std::string(64, '0');
  save_classifier(dir / "bad.json", clf);
  EXPECT_EQ(code_of([&] { load_classifier(dir / "bad.json"); }), ErrorCode::SchemaMismatch);
}

TEST(Rules, PaperThresholds) {
  const RuleSet rules = default_rules();
  features::FeatureVector fv;
  fv.values[features::feature_index("Nuc_MFI_ck")] = 300;
  fv.values[features::feature_index("Nuc_MFI_cd45")] = 100;
  EXPECT_TRUE(rule_filter(fv, rules));
  fv.values[features::feature_index("Nuc_MFI_ck")] = 269;
  EXPECT_FALSE(rule_filter(fv, rules));
  fv.values[features::feature_index("Nuc_MFI_ck")] = 300;
  fv.values[features::feature_index("Nuc_MFI_cd45")] = 3000;
  EXPECT_TRUE(rule_filter(fv, rules));
  EXPECT_EQ(code_of([] { parse_rule("Nuc_MFI_gfp > 3"); }), ErrorCode::UnknownFeatureName);
  EXPECT_EQ(code_of([] { parse_rule("Nuc_MFI_ck >> 3"); }), ErrorCode::ParseError);
  EXPECT_EQ(format_rule(parse_rule("Nuc_MFI_cd45 <= 3000")), "Nuc_MFI_cd45 <= 3000");
}

TEST(Evaluate, PerfectInvertedAndPublishedCounts) {
  const auto perfect = confusion_from_counts(5, 7, 0, 0);
  EXPECT_EQ(perfect.sensitivity, 1.0);
  EXPECT_EQ(perfect.specificity, 1.0);
  EXPECT_EQ(perfect.accuracy, 1.0);
  const auto inverted = confusion_from_counts(0, 0, 7, 5);
  EXPECT_EQ(inverted.sensitivity, 0.0);
  EXPECT_EQ(inverted.specificity, 0.0);
  const auto v = confusion_from_counts(1210, 1648, 53, 11);
  EXPECT_NEAR(std::round(v.sensitivity * 1000) / 10, 99.1, 1e-9);
  EXPECT_NEAR(std::round(v.specificity * 1000) / 10, 96.9, 1e-9);
  EXPECT_NEAR(std::round(v.accuracy * 1000) / 10, 97.8, 1e-9);
}

TEST(Importance, SingleInformativeFeatureRanksFirst) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0, 1);
  const int ck = features::feature_index("Nuc_MFI_ck");
  Matrix X;
  std::vector<int> y;
  for (int i = 0; i < 80; ++i) {
    std::vector<double> x(features::kNumFeatures);
    for (auto& v : x) v = g(rng);
    x[5] = 4.0;  // constant column
    const int l = i % 2 ? 1 : -1;
    x[ck] = 300 + 200 * l + 30 * g(rng);
    X.push_back(x);
    y.push_back(l);
  }
  const Classifier clf = train_classifier(X, y, GridSpec{{Kernel::Linear}, {1.0}, {1.0}, {1}}, 4, 0);
  const auto imp = permutation_importance(clf, X, y, 3, 5);
  EXPECT_EQ(imp.front().name, "Nuc_MFI_ck");
  for (const auto& i : imp)
    if (i.index == 5) { EXPECT_EQ(i.mean_drop, 0.0); }
  const auto again = permutation_importance(clf, X, y, 3, 5);
  for (std::size_t i = 0; i < imp.size(); ++i) EXPECT_EQ(imp[i].index, again[i].index);
}

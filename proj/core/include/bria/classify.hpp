#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bria/features.hpp"

namespace bria::classify {

using Matrix = std::vector<std::vector<double>>;

enum class Kernel { Linear, Rbf, Sigmoid, Poly };
std::string_view kernel_name(Kernel k) noexcept;
Kernel parse_kernel(std::string_view name);

struct KernelParams {
  Kernel kind = Kernel::Rbf;
  double gamma = 1.0;
  double coef0 = 0.0;
  int degree = 3;
};
double kernel_value(const KernelParams& k, std::span<const double> a, std::span<const double> b);

/// Min-max scaling fit on training rows. Applied values are clamped to
/// [-0.5, 1.5]; constant columns map to 0.
struct Normalizer {
  std::vector<double> min;
  std::vector<double> max;

  static Normalizer fit(const Matrix& X);
  std::vector<double> apply(std::span<const double> x) const;
  Matrix apply(const Matrix& X) const;
};

struct SvmParams {
  KernelParams kernel;
  double C = 1.0;
  double tol = 1e-3;
  long max_iter = 1'000'000;
  std::size_t cache_mb = 64;
};

struct SVMModel {
  KernelParams kernel;
  double C = 1.0;
  Matrix support_vectors;
  /// alpha_i * y_i per support vector.
  std::vector<double> dual_coef;
  double bias = 0.0;
  double platt_a = -1.0;
  double platt_b = 0.0;
  double threshold = 0.3;

  double decision(std::span<const double> x) const;
  /// 1 / (1 + exp(A f + B)).
  double probability(std::span<const double> x) const;
};

struct TrainInfo {
  long iterations = 0;
  /// Maximal KKT violation m(alpha) - M(alpha) at exit.
  double kkt_gap = 0.0;
  /// 0.5 a'Qa - e'a at exit.
  double objective = 0.0;
  std::vector<double> alpha;
};

/// C-SVC dual solved by SMO with maximal-violating-pair selection.
/// Labels are +1 / -1. Throws Error(SingleClass) or Error(NonConvergence).
SVMModel train_svm(const Matrix& X, std::span<const int> y, const SvmParams& params, TrainInfo* info = nullptr);

/// Stratified fold index per row, seeded shuffle within each class.
/// Throws Error(BadParams) when k exceeds the minority class size.
std::vector<int> stratified_folds(std::span<const int> y, int k, std::uint64_t seed);

struct GridSpec {
  std::vector<Kernel> kernels{Kernel::Linear, Kernel::Rbf, Kernel::Sigmoid, Kernel::Poly};
  std::vector<double> C{0.1, 1.0, 10.0, 100.0};
  std::vector<double> gamma{0.01, 0.1, 1.0, 10.0};
  std::vector<int> degree{2, 3, 4};
  double coef0 = 0.0;
  double tol = 1e-3;
  long max_iter = 1'000'000;
};

struct GridCell {
  SvmParams params;
  double mean_accuracy = 0.0;
  bool failed = false;
};

struct GridResult {
  GridCell best;
  std::vector<GridCell> cells;
  std::vector<int> folds;
};

/// Candidate parameter sets in canonical order. Linear ignores gamma and
/// degree, RBF ignores degree.
std::vector<SvmParams> expand_grid(const GridSpec& grid);

/// k-fold CV over the grid; the normaliser is refit on each training split.
/// Ties go to smaller C, then smaller gamma (linear counts as 0), then
/// canonical order. Failed cells score 0.
GridResult grid_search_cv(const Matrix& X, std::span<const int> y, const GridSpec& grid, int k = 5,
                          std::uint64_t seed = 0, int threads = 1);

struct Platt {
  double a = -1.0;
  double b = 0.0;
  int iterations = 0;
};
/// Newton fit with Platt's target smoothing. Throws Error(SingleClass) or
/// Error(NonConvergence).
Platt platt_calibrate(std::span<const double> decision_values, std::span<const int> labels);
/// Negative log-likelihood under the smoothed targets.
double platt_nll(std::span<const double> f, std::span<const int> labels, double a, double b);

/// A trained SVM together with its normaliser and feature schema.
struct Classifier {
  SVMModel model;
  Normalizer normalizer;
  std::string schema_hash;
};

struct Prediction {
  double probability = 0.0;
  bool candidate = false;
};
/// Throws Error(SchemaMismatch) when the vector length does not match.
Prediction predict(const Classifier& clf, std::span<const double> x);
Prediction predict(const Classifier& clf, const features::FeatureVector& fv);

struct TrainReport {
  GridResult grid;
  Platt platt;
  TrainInfo final_fit;
};
/// Grid search, out-of-fold Platt calibration and a final fit on all rows.
Classifier train_classifier(const Matrix& X, std::span<const int> y, const GridSpec& grid, int k, std::uint64_t seed,
                            int threads = 1, TrainReport* report = nullptr);

void save_classifier(const std::filesystem::path& path, const Classifier& clf);
/// Throws Error(SchemaMismatch) if the stored schema hash differs from the
/// running build's feature schema.
Classifier load_classifier(const std::filesystem::path& path);

enum class Comparator { Greater, GreaterEqual, Less, LessEqual };

struct Rule {
  std::string feature;
  Comparator op = Comparator::Greater;
  double cutoff = 0.0;
  int index = -1;
};
struct RuleSet {
  std::vector<Rule> rules;
};

/// Parses "Nuc_MFI_ck > 269". Throws Error(UnknownFeatureName) or
/// Error(ParseError).
Rule parse_rule(std::string_view text);
std::string format_rule(const Rule& r);
/// Nuc_MFI_ck > 269 and Nuc_MFI_cd45 <= 3000.
RuleSet default_rules();
bool rule_filter(std::span<const double> x, const RuleSet& rules);
bool rule_filter(const features::FeatureVector& fv, const RuleSet& rules);

struct Confusion {
  long tp = 0;
  long tn = 0;
  long fp = 0;
  long fn = 0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
};
Confusion confusion_from_counts(long tp, long tn, long fp, long fn);
Confusion evaluate(const Classifier& clf, const Matrix& X, std::span<const int> y);

struct Importance {
  int index = 0;
  std::string name;
  double mean_drop = 0.0;
};
/// Mean accuracy drop over seeded column permutations, sorted descending,
/// ties by feature index.
std::vector<Importance> permutation_importance(const Classifier& clf, const Matrix& X, std::span<const int> y,
                                               int n_repeats, std::uint64_t seed);

}  // namespace bria::classify

#include "bria/classify.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <list>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "json.hpp"

#include "bria/error.hpp"
#include "bria/random.hpp"

namespace bria::classify {

using nlohmann::json;

std::string_view kernel_name(Kernel k) noexcept {
  switch (k) {
    case Kernel::Linear: return "linear";
    case Kernel::Rbf: return "rbf";
    case Kernel::Sigmoid: return "sigmoid";
    case Kernel::Poly: return "poly";
  }
  return "";
}

Kernel parse_kernel(std::string_view name) {
  if (name == "linear") return Kernel::Linear;
  if (name == "rbf") return Kernel::Rbf;
  if (name == "sigmoid") return Kernel::Sigmoid;
  if (name == "poly" || name == "polynomial") return Kernel::Poly;
  throw Error(ErrorCode::ParseError, "unknown kernel '" + std::string(name) + "'");
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double kernel_value(const KernelParams& k, std::span<const double> a, std::span<const double> b) {
  switch (k.kind) {
    case Kernel::Linear: return dot(a, b);
    case Kernel::Rbf: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      return std::exp(-k.gamma * s);
    }
    case Kernel::Sigmoid: return std::tanh(k.gamma * dot(a, b) + k.coef0);
    case Kernel::Poly: return std::pow(k.gamma * dot(a, b) + k.coef0, k.degree);
  }
  return 0.0;
}

Normalizer Normalizer::fit(const Matrix& X) {
  Normalizer n;
  if (X.empty()) return n;
  const std::size_t d = X[0].size();
  n.min.assign(d, std::numeric_limits<double>::infinity());
  n.max.assign(d, -std::numeric_limits<double>::infinity());
  for (const auto& row : X) {
    if (row.size() != d) throw Error(ErrorCode::ShapeMismatch, "ragged feature matrix");
    for (std::size_t j = 0; j < d; ++j) {
      n.min[j] = std::min(n.min[j], row[j]);
      n.max[j] = std::max(n.max[j], row[j]);
    }
  }
  return n;
}

std::vector<double> Normalizer::apply(std::span<const double> x) const {
  if (x.size() != min.size()) throw Error(ErrorCode::SchemaMismatch, "normaliser width differs from input");
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double range = max[j] - min[j];
    out[j] = range > 0.0 ? std::clamp((x[j] - min[j]) / range, -0.5, 1.5) : 0.0;
  }
  return out;
}

Matrix Normalizer::apply(const Matrix& X) const {
  Matrix out;
  out.reserve(X.size());
  for (const auto& row : X) out.push_back(apply(row));
  return out;
}

namespace {

// Columns of Q_ij = y_i y_j K(x_i, x_j), least-recently-used eviction.
class QCache {
public:
  QCache(const Matrix& X, std::span<const int> y, const KernelParams& k, std::size_t cache_mb)
      : X_(X), y_(y), k_(k), n_(X.size()) {
    const std::size_t col_bytes = std::max<std::size_t>(1, n_ * sizeof(double));
    max_cols_ = std::max<std::size_t>(2, cache_mb * 1024 * 1024 / col_bytes);
    diag_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) diag_[i] = kernel_value(k_, X_[i], X_[i]);
  }

  double diag(std::size_t i) const { return diag_[i]; }

  const std::vector<double>& column(std::size_t i) {
    auto it = map_.find(i);
    if (it != map_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
    if (map_.size() >= max_cols_) {
      map_.erase(lru_.back().first);
      lru_.pop_back();
    }
    std::vector<double> col(n_);
    for (std::size_t t = 0; t < n_; ++t) col[t] = y_[t] * y_[i] * kernel_value(k_, X_[t], X_[i]);
    lru_.emplace_front(i, std::move(col));
    map_[i] = lru_.begin();
    return lru_.front().second;
  }

private:
  const Matrix& X_;
  std::span<const int> y_;
  KernelParams k_;
  std::size_t n_;
  std::size_t max_cols_;
  std::vector<double> diag_;
  std::list<std::pair<std::size_t, std::vector<double>>> lru_;
  std::unordered_map<std::size_t, std::list<std::pair<std::size_t, std::vector<double>>>::iterator> map_;
};

void check_labels(std::span<const int> y) {
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == -1) neg = true;
    else throw Error(ErrorCode::BadParams, "labels must be +1 or -1");
  }
  if (!pos || !neg) throw Error(ErrorCode::SingleClass, "training data contains a single class");
}

}  // namespace

SVMModel train_svm(const Matrix& X, std::span<const int> y, const SvmParams& params, TrainInfo* info) {
  if (X.size() != y.size()) throw Error(ErrorCode::ShapeMismatch, "X and y differ in length");
  check_labels(y);
  if (!(params.C > 0.0)) throw Error(ErrorCode::BadParams, "C must be positive");
  const std::size_t n = X.size();
  const double C = params.C;
  constexpr double tau = 1e-12;

  QCache Q(X, y, params.kernel, params.cache_mb);
  std::vector<double> alpha(n, 0.0);
  std::vector<double> G(n, -1.0);
  auto in_up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0.0); };
  auto in_low = [&](std::size_t t) { return (y[t] == -1 && alpha[t] < C) || (y[t] == 1 && alpha[t] > 0.0); };

  long iter = 0;
  double gap = 0.0;
  for (;; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * G[t];
      if (in_up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(t) && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    gap = gmax - gmin;
    if (i == n || j == n || gap < params.tol) break;
    if (iter >= params.max_iter) {
      throw Error(ErrorCode::NonConvergence,
                  "SMO hit " + std::to_string(params.max_iter) + " iterations, KKT gap " + std::to_string(gap));
    }
    const std::vector<double> Qi = Q.column(i);
    const std::vector<double>& Qj = Q.column(j);
    const double old_ai = alpha[i], old_aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = Q.diag(i) + Q.diag(j) + 2.0 * Qi[j];
      if (quad <= 0.0) quad = tau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = Q.diag(i) + Q.diag(j) - 2.0 * Qi[j];
      if (quad <= 0.0) quad = tau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) G[t] += Qi[t] * dai + Qj[t] * daj;
  }

  // Bias from free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  int n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (alpha[t] >= C) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0.0) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);

  SVMModel m;
  m.kernel = params.kernel;
  m.C = C;
  m.bias = -rho;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0.0) {
      m.support_vectors.push_back(X[t]);
      m.dual_coef.push_back(alpha[t] * y[t]);
    }
  }
  if (info) {
    info->iterations = iter;
    info->kkt_gap = gap;
    double obj = 0.0;
    for (std::size_t t = 0; t < n; ++t) obj += alpha[t] * (G[t] - 1.0);
    info->objective = 0.5 * obj;
    info->alpha = alpha;
  }
  return m;
}

double SVMModel::decision(std::span<const double> x) const {
  double f = bias;
  for (std::size_t i = 0; i < support_vectors.size(); ++i) f += dual_coef[i] * kernel_value(kernel, support_vectors[i], x);
  return f;
}

double SVMModel::probability(std::span<const double> x) const {
  const double z = platt_a * decision(x) + platt_b;
  // Same value as 1 / (1 + exp(z)), without overflow for large |z|.
  return z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

std::vector<int> stratified_folds(std::span<const int> y, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::BadParams, "need at least 2 folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 1 ? pos : neg).push_back(i);
  if (static_cast<std::size_t>(k) > std::min(pos.size(), neg.size())) {
    throw Error(ErrorCode::BadParams, "k = " + std::to_string(k) + " exceeds the minority class size " +
                                          std::to_string(std::min(pos.size(), neg.size())));
  }
  std::vector<int> fold(y.size(), -1);
  int cls = 0;
  for (auto* group : {&pos, &neg}) {
    std::mt19937_64 rng(derive_seed(seed, 0xF01D, static_cast<std::uint64_t>(cls++)));
    std::shuffle(group->begin(), group->end(), rng);
    for (std::size_t r = 0; r < group->size(); ++r) fold[(*group)[r]] = static_cast<int>(r % k);
  }
  return fold;
}

std::vector<SvmParams> expand_grid(const GridSpec& grid) {
  std::vector<SvmParams> out;
  for (Kernel kind : grid.kernels)
    for (double C : grid.C) {
      auto add = [&](double gamma, int degree) {
        SvmParams p;
        p.kernel = {kind, gamma, grid.coef0, degree};
        p.C = C;
        p.tol = grid.tol;
        p.max_iter = grid.max_iter;
        out.push_back(p);
      };
      if (kind == Kernel::Linear) {
        add(0.0, 1);
      } else if (kind == Kernel::Poly) {
        for (double g : grid.gamma)
          for (int d : grid.degree) add(g, d);
      } else {
        for (double g : grid.gamma) add(g, 1);
      }
    }
  return out;
}

namespace {

struct Split {
  Matrix train_x, val_x;
  std::vector<int> train_y, val_y;
  std::vector<std::size_t> val_rows;
};

Split make_split(const Matrix& X, std::span<const int> y, const std::vector<int>& folds, int f) {
  Split s;
  Matrix raw_train, raw_val;
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (folds[i] == f) {
      raw_val.push_back(X[i]);
      s.val_y.push_back(y[i]);
      s.val_rows.push_back(i);
    } else {
      raw_train.push_back(X[i]);
      s.train_y.push_back(y[i]);
    }
  }
  if (raw_train.size() + raw_val.size() != X.size()) throw std::logic_error("fold split is not a partition");
  const Normalizer norm = Normalizer::fit(raw_train);
  s.train_x = norm.apply(raw_train);
  s.val_x = norm.apply(raw_val);
  return s;
}

bool better(const GridCell& a, const GridCell& b) {
  if (a.mean_accuracy != b.mean_accuracy) return a.mean_accuracy > b.mean_accuracy;
  if (a.params.C != b.params.C) return a.params.C < b.params.C;
  return a.params.kernel.gamma < b.params.kernel.gamma;
}

}  // namespace

GridResult grid_search_cv(const Matrix& X, std::span<const int> y, const GridSpec& grid, int k, std::uint64_t seed,
                          int threads) {
  if (X.size() != y.size()) throw Error(ErrorCode::ShapeMismatch, "X and y differ in length");
  check_labels(y);
  const std::vector<SvmParams> cells = expand_grid(grid);
  if (cells.empty()) throw Error(ErrorCode::BadParams, "empty grid");
  GridResult res;
  res.folds = stratified_folds(y, k, seed);
  std::vector<Split> splits;
  for (int f = 0; f < k; ++f) splits.push_back(make_split(X, y, res.folds, f));

  res.cells.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c; (c = next.fetch_add(1)) < cells.size();) {
      GridCell cell{cells[c], 0.0, false};
      double acc_sum = 0.0;
      try {
        for (const Split& s : splits) {
          const SVMModel m = train_svm(s.train_x, s.train_y, cells[c]);
          std::size_t correct = 0;
          for (std::size_t i = 0; i < s.val_x.size(); ++i) {
            const int pred = m.decision(s.val_x[i]) >= 0.0 ? 1 : -1;
            correct += pred == s.val_y[i] ? 1 : 0;
          }
          acc_sum += static_cast<double>(correct) / static_cast<double>(s.val_x.size());
        }
        cell.mean_accuracy = acc_sum / k;
      } catch (const Error&) {
        cell.failed = true;
        cell.mean_accuracy = 0.0;
      }
      res.cells[c] = cell;
    }
  };
  const int nt = std::max(1, threads);
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  res.best = res.cells[0];
  for (const GridCell& c : res.cells)
    if (better(c, res.best)) res.best = c;
  return res;
}

double platt_nll(std::span<const double> f, std::span<const int> labels, double a, double b) {
  double n_pos = 0, n_neg = 0;
  for (int l : labels) (l == 1 ? n_pos : n_neg) += 1;
  const double hi = (n_pos + 1.0) / (n_pos + 2.0);
  const double lo = 1.0 / (n_neg + 2.0);
  double v = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double t = labels[i] == 1 ? hi : lo;
    const double z = f[i] * a + b;
    v += z >= 0.0 ? t * z + std::log1p(std::exp(-z)) : (t - 1.0) * z + std::log1p(std::exp(z));
  }
  return v;
}

Platt platt_calibrate(std::span<const double> f, std::span<const int> labels) {
  if (f.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "decision values and labels differ");
  check_labels(labels);
  double n_pos = 0, n_neg = 0;
  for (int l : labels) (l == 1 ? n_pos : n_neg) += 1;
  const double hi = (n_pos + 1.0) / (n_pos + 2.0);
  const double lo = 1.0 / (n_neg + 2.0);
  constexpr int max_iter = 200;
  constexpr double min_step = 1e-10;
  constexpr double sigma = 1e-12;
  constexpr double eps = 1e-8;

  Platt p{0.0, std::log((n_neg + 1.0) / (n_pos + 1.0)), 0};
  double fval = platt_nll(f, labels, p.a, p.b);
  for (int it = 0;; ++it) {
    double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double z = f[i] * p.a + p.b;
      double pp, qq;
      if (z >= 0.0) {
        pp = std::exp(-z) / (1.0 + std::exp(-z));
        qq = 1.0 / (1.0 + std::exp(-z));
      } else {
        pp = 1.0 / (1.0 + std::exp(z));
        qq = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = pp * qq;
      h11 += f[i] * f[i] * d2;
      h22 += d2;
      h21 += f[i] * d2;
      const double t = labels[i] == 1 ? hi : lo;
      const double d1 = t - pp;
      g1 += f[i] * d1;
      g2 += d1;
    }
    p.iterations = it;
    if (std::hypot(g1, g2) < eps) return p;
    if (it >= max_iter) {
      throw Error(ErrorCode::NonConvergence, "Platt scaling did not converge in 200 iterations");
    }
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    bool moved = false;
    while (step >= min_step) {
      const double na = p.a + step * da, nb = p.b + step * db;
      const double nf = platt_nll(f, labels, na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        p.a = na;
        p.b = nb;
        fval = nf;
        moved = true;
        break;
      }
      step /= 2.0;
    }
    // No descent possible in floating point: the optimum is reached to
    // machine precision even if the gradient test is not met exactly.
    if (!moved) return p;
  }
}

Prediction predict(const Classifier& clf, std::span<const double> x) {
  if (x.size() != clf.normalizer.min.size()) {
    throw Error(ErrorCode::SchemaMismatch, "expected " + std::to_string(clf.normalizer.min.size()) +
                                               " features, got " + std::to_string(x.size()));
  }
  const auto z = clf.normalizer.apply(x);
  Prediction p;
  p.probability = clf.model.probability(z);
  p.candidate = p.probability >= clf.model.threshold;
  return p;
}

Prediction predict(const Classifier& clf, const features::FeatureVector& fv) {
  if (clf.schema_hash != features::schema_hash()) throw Error(ErrorCode::SchemaMismatch, "feature schema differs");
  return predict(clf, std::span<const double>(fv.values));
}

Classifier train_classifier(const Matrix& X, std::span<const int> y, const GridSpec& grid, int k, std::uint64_t seed,
                            int threads, TrainReport* report) {
  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep.grid = grid_search_cv(X, y, grid, k, seed, threads);
  const SvmParams& best = rep.grid.best.params;
  if (rep.grid.best.failed) throw Error(ErrorCode::NonConvergence, "every grid cell failed");

  // Out-of-fold decision values for calibration.
  std::vector<double> oof(X.size(), 0.0);
  for (int f = 0; f < k; ++f) {
    const Split s = make_split(X, y, rep.grid.folds, f);
    const SVMModel m = train_svm(s.train_x, s.train_y, best);
    for (std::size_t i = 0; i < s.val_x.size(); ++i) oof[s.val_rows[i]] = m.decision(s.val_x[i]);
  }
  rep.platt = platt_calibrate(oof, y);

  Classifier clf;
  clf.normalizer = Normalizer::fit(X);
  clf.model = train_svm(clf.normalizer.apply(X), y, best, &rep.final_fit);
  clf.model.platt_a = rep.platt.a;
  clf.model.platt_b = rep.platt.b;
  clf.schema_hash = X.empty() || X[0].size() != features::kNumFeatures ? std::string() : features::schema_hash();
  return clf;
}

void save_classifier(const std::filesystem::path& path, const Classifier& clf) {
  json j;
  j["format"] = "bria-svm";
  j["version"] = 1;
  j["kernel"] = kernel_name(clf.model.kernel.kind);
  j["C"] = clf.model.C;
  j["gamma"] = clf.model.kernel.gamma;
  j["degree"] = clf.model.kernel.degree;
  j["coef0"] = clf.model.kernel.coef0;
  j["bias"] = clf.model.bias;
  j["support_vectors"] = clf.model.support_vectors;
  j["dual_coef"] = clf.model.dual_coef;
  j["platt"] = {{"A", clf.model.platt_a}, {"B", clf.model.platt_b}};
  j["threshold"] = clf.model.threshold;
  j["feature_schema_hash"] = clf.schema_hash;
  j["n_features"] = clf.normalizer.min.size();
  j["normalizer"] = {{"min", clf.normalizer.min}, {"max", clf.normalizer.max}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

Classifier load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  Classifier clf;
  try {
    const json j = json::parse(in);
    if (j.value("format", "") != "bria-svm") throw Error(ErrorCode::ParseError, "not a bria model file");
    clf.model.kernel.kind = parse_kernel(j.at("kernel").get<std::string>());
    clf.model.kernel.gamma = j.at("gamma").get<double>();
    clf.model.kernel.degree = j.at("degree").get<int>();
    clf.model.kernel.coef0 = j.at("coef0").get<double>();
    clf.model.C = j.at("C").get<double>();
    clf.model.bias = j.at("bias").get<double>();
    clf.model.support_vectors = j.at("support_vectors").get<Matrix>();
    clf.model.dual_coef = j.at("dual_coef").get<std::vector<double>>();
    clf.model.platt_a = j.at("platt").at("A").get<double>();
    clf.model.platt_b = j.at("platt").at("B").get<double>();
    clf.model.threshold = j.at("threshold").get<double>();
    clf.schema_hash = j.at("feature_schema_hash").get<std::string>();
    clf.normalizer.min = j.at("normalizer").at("min").get<std::vector<double>>();
    clf.normalizer.max = j.at("normalizer").at("max").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (clf.normalizer.min.size() == features::kNumFeatures && clf.schema_hash != features::schema_hash()) {
    throw Error(ErrorCode::SchemaMismatch, "model was trained on a different feature schema");
  }
  return clf;
}

Rule parse_rule(std::string_view text) {
  static constexpr std::array<std::pair<std::string_view, Comparator>, 4> ops{
      {{">=", Comparator::GreaterEqual}, {"<=", Comparator::LessEqual}, {">", Comparator::Greater}, {"<", Comparator::Less}}};
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  for (const auto& [tok, op] : ops) {
    const auto pos = text.find(tok);
    if (pos == std::string_view::npos) continue;
    Rule r;
    r.feature = std::string(trim(text.substr(0, pos)));
    r.op = op;
    const std::string_view num = trim(text.substr(pos + tok.size()));
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), r.cutoff);
    if (ec != std::errc() || ptr != num.data() + num.size()) {
      throw Error(ErrorCode::ParseError, "bad cutoff in rule '" + std::string(text) + "'");
    }
    r.index = features::feature_index(r.feature);
    return r;
  }
  throw Error(ErrorCode::ParseError, "no comparator in rule '" + std::string(text) + "'");
}

std::string format_rule(const Rule& r) {
  const char* op = r.op == Comparator::Greater ? ">" : r.op == Comparator::GreaterEqual ? ">=" : r.op == Comparator::Less ? "<" : "<=";
  std::ostringstream os;
  os << r.feature << ' ' << op << ' ' << r.cutoff;
  return os.str();
}

RuleSet default_rules() { return {{parse_rule("Nuc_MFI_ck > 269"), parse_rule("Nuc_MFI_cd45 <= 3000")}}; }

bool rule_filter(std::span<const double> x, const RuleSet& rules) {
  for (const Rule& r : rules.rules) {
    const int idx = r.index >= 0 ? r.index : features::feature_index(r.feature);
    if (static_cast<std::size_t>(idx) >= x.size()) throw Error(ErrorCode::SchemaMismatch, "vector too short for rule");
    const double v = x[idx];
    bool ok = false;
    switch (r.op) {
      case Comparator::Greater: ok = v > r.cutoff; break;
      case Comparator::GreaterEqual: ok = v >= r.cutoff; break;
      case Comparator::Less: ok = v < r.cutoff; break;
      case Comparator::LessEqual: ok = v <= r.cutoff; break;
    }
    if (!ok) return false;
  }
  return true;
}

bool rule_filter(const features::FeatureVector& fv, const RuleSet& rules) {
  return rule_filter(std::span<const double>(fv.values), rules);
}

Confusion confusion_from_counts(long tp, long tn, long fp, long fn) {
  Confusion c{tp, tn, fp, fn};
  c.sensitivity = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  c.specificity = tn + fp > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
  const long total = tp + tn + fp + fn;
  c.accuracy = total > 0 ? static_cast<double>(tp + tn) / static_cast<double>(total) : 0.0;
  return c;
}

Confusion evaluate(const Classifier& clf, const Matrix& X, std::span<const int> y) {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const bool pred = predict(clf, X[i]).candidate;
    if (y[i] == 1) (pred ? tp : fn) += 1;
    else (pred ? fp : tn) += 1;
  }
  return confusion_from_counts(tp, tn, fp, fn);
}

std::vector<Importance> permutation_importance(const Classifier& clf, const Matrix& X, std::span<const int> y,
                                               int n_repeats, std::uint64_t seed) {
  if (X.empty()) return {};
  const std::size_t d = X[0].size();
  const double base = evaluate(clf, X, y).accuracy;
  const auto& names = features::feature_names();
  std::vector<Importance> out;
  Matrix work = X;
  for (std::size_t j = 0; j < d; ++j) {
    double drop = 0.0;
    for (int r = 0; r < n_repeats; ++r) {
      std::vector<double> col(X.size());
      for (std::size_t i = 0; i < X.size(); ++i) col[i] = X[i][j];
      std::mt19937_64 rng(derive_seed(seed, j, static_cast<std::uint64_t>(r)));
      std::shuffle(col.begin(), col.end(), rng);
      for (std::size_t i = 0; i < X.size(); ++i) work[i][j] = col[i];
      drop += base - evaluate(clf, work, y).accuracy;
    }
    for (std::size_t i = 0; i < X.size(); ++i) work[i][j] = X[i][j];
    out.push_back({static_cast<int>(j), d == names.size() ? names[j] : "f" + std::to_string(j),
                   n_repeats > 0 ? drop / n_repeats : 0.0});
  }
  std::stable_sort(out.begin(), out.end(), [](const Importance& a, const Importance& b) {
    if (a.mean_drop != b.mean_drop) return a.mean_drop > b.mean_drop;
    return a.index < b.index;
  });
  return out;
}

}  // namespace bria::classify

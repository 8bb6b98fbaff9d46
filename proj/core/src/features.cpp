#include "bria/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "bria/error.hpp"
#include "bria/hash.hpp"
#include "bria/imgproc.hpp"
#include "bria/otsu.hpp"

namespace bria::features {

namespace {

constexpr std::array<const char*, 3> kTags{"dapi", "ck", "cd45"};
constexpr std::array<int, 4> kGaborTheta{0, 45, 90, 135};
constexpr std::array<double, 2> kGaborFreq{0.1, 0.4};
constexpr std::array<int, 2> kGaborSigma{1, 3};
constexpr std::array<const char*, 4> kLawsNames{"L5", "E5", "S5", "R5"};
constexpr std::array<std::array<double, 5>, 4> kLaws{{
    {1, 4, 6, 4, 1},
    {-1, -2, 0, 2, 1},
    {-1, 0, 2, 0, -1},
    {1, -4, 6, -4, 1},
}};
// Channel pairs for correlations: (dapi, ck), (dapi, cd45), (ck, cd45).
constexpr std::array<std::pair<int, int>, 3> kPairs{{{0, 1}, {0, 2}, {1, 2}}};

std::vector<std::string> build_names() {
  std::vector<std::string> n;
  for (const char* obj : {"Nuc", "Cell"})
    for (const char* f : {"Size", "Roundness", "Elongation", "Hu1"}) n.push_back(std::string(obj) + "_" + f);
  for (const char* obj : {"Nuc", "Cell"}) {
    const std::string o = obj;
    for (const char* stat : {"MFI", "LQI", "MQI", "UQI", "IQR"})
      for (const char* t : kTags) n.push_back(o + "_" + stat + "_" + t);
    n.push_back(o + "_CKpos");
    for (auto [a, b] : kPairs) n.push_back(o + "_Corr_" + kTags[a] + "_" + kTags[b]);
    n.push_back(o + "_Coloc_ck_dapi");
    n.push_back(o + "_Coloc_ck_cd45");
  }
  n.push_back("MEAN_ck");
  n.push_back("STD_ck");
  for (int th : kGaborTheta)
    for (double f : kGaborFreq)
      for (int s : kGaborSigma) {
        std::ostringstream os;
        os << "Thumb_Gabor_t" << th << "_f" << f << "_s" << s;
        n.push_back(os.str() + "_mean");
        n.push_back(os.str() + "_std");
      }
  for (const char* a : kLawsNames)
    for (const char* b : kLawsNames) {
      n.push_back(std::string("Thumb_Laws_") + a + b + "_absmean");
      n.push_back(std::string("Thumb_Laws_") + a + b + "_std");
    }
  for (auto [a, b] : kPairs) n.push_back(std::string("Thumb_LBP_Corr_") + kTags[a] + "_" + kTags[b]);
  for (auto [a, b] : kPairs) n.push_back(std::string("Thumb_LBP_NMI_") + kTags[a] + "_" + kTags[b]);
  return n;
}

std::string group_of(int index) {
  if (index < kNumMorphology) return "morphology";
  index -= kNumMorphology;
  if (index < kNumIntensity) return "intensity";
  index -= kNumIntensity;
  if (index < kNumGabor) return "gabor";
  index -= kNumGabor;
  if (index < kNumLaws) return "laws";
  return "lbp";
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    auto n = build_names();
    if (n.size() != kNumFeatures) throw std::logic_error("feature schema size mismatch");
    return n;
  }();
  return names;
}

int feature_index(std::string_view name) {
  const auto& names = feature_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorCode::UnknownFeatureName, std::string(name));
  return static_cast<int>(it - names.begin());
}

const std::string& schema_hash() {
  static const std::string hash = [] {
    std::string joined;
    for (const auto& n : feature_names()) joined += n + "\n";
    return sha256_hex(joined);
  }();
  return hash;
}

std::string schema_json() {
  nlohmann::json j;
  j["version"] = 1;
  j["hash"] = schema_hash();
  j["features"] = nlohmann::json::array();
  const auto& names = feature_names();
  for (int i = 0; i < kNumFeatures; ++i) {
    j["features"].push_back({{"index", i}, {"name", names[i]}, {"group", group_of(i)}});
  }
  return j.dump(1);
}

std::vector<std::string> flag_names(std::uint32_t flags) {
  std::vector<std::string> out;
  if (flags & kDegenerateNucleus) out.emplace_back("degenerate_nucleus");
  if (flags & kDegenerateCell) out.emplace_back("degenerate_cell");
  if (flags & kZeroVarianceCorrelation) out.emplace_back("zero_variance_correlation");
  if (flags & kZeroVarianceLbp) out.emplace_back("zero_variance_lbp");
  if (flags & kDegenerateColoc) out.emplace_back("degenerate_coloc");
  return out;
}

double convex_hull_perimeter(const Mask& mask) {
  struct P {
    long x, y;
  };
  std::vector<P> pts;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask(x, y)) pts.push_back({x, y});
  if (pts.size() < 2) return 0.0;
  // Andrew's monotone chain; points are already sorted by (y, x).
  std::sort(pts.begin(), pts.end(), [](const P& a, const P& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  auto cross = [](const P& o, const P& a, const P& b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); };
  std::vector<P> hull(2 * pts.size());
  std::size_t k = 0;
  for (const P& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  double per = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const P& a = hull[i];
    const P& b = hull[(i + 1) % hull.size()];
    per += std::hypot(static_cast<double>(b.x - a.x), static_cast<double>(b.y - a.y));
  }
  return per;
}

Morphology morphology_features(const Mask& mask) {
  double n = 0, sx = 0, sy = 0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask(x, y)) {
        n += 1;
        sx += x;
        sy += y;
      }
  if (n == 0) throw Error(ErrorCode::EmptyMask, "morphology of an empty mask");
  Morphology m;
  m.size = n;
  if (n == 1) {
    m.roundness = m.elongation = 1.0;
    m.hu1 = 0.0;
    m.degenerate = true;
    return m;
  }
  const double cx = sx / n, cy = sy / n;
  double mu20 = 0, mu02 = 0, mu11 = 0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask(x, y)) {
        const double dx = x - cx, dy = y - cy;
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
      }
  const double perim = convex_hull_perimeter(mask);
  m.roundness = 4.0 * std::numbers::pi * n / (perim * perim);
  const double a = mu20 / n, c = mu02 / n, b = mu11 / n;
  const double lambda_max = 0.5 * (a + c) + std::sqrt(0.25 * (a - c) * (a - c) + b * b);
  const double major = 4.0 * std::sqrt(lambda_max);
  m.elongation = 4.0 * n / (std::numbers::pi * major * major);
  m.hu1 = (mu20 + mu02) / (n * n);
  return m;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double pearson(std::span<const double> a, std::span<const double> b, bool& zero_variance) {
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    zero_variance = true;
    return 0.0;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double rwc(std::span<const double> a, std::span<const double> b, double threshold_a, double threshold_b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "rwc inputs differ in length");
  if (a.empty()) throw Error(ErrorCode::EmptyMask, "rwc of an empty mask");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double rmax = static_cast<double>(a.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    den += a[i];
    if (a[i] > threshold_a && b[i] > threshold_b) num += a[i] * (rmax - std::abs(ra[i] - rb[i])) / rmax;
  }
  if (num <= 0.0 || den <= 0.0) return 0.0;
  return std::clamp(num / den, 0.0, 1.0);
}

namespace {

// Per-channel Otsu threshold expressed as a value cutoff; +inf when the
// channel is constant so that no pixel counts as co-localised.
double coloc_threshold(std::span<const double> v) {
  try {
    const OtsuThreshold t = otsu_threshold(v);
    // Largest sample at or below the split, so `x > cut` matches t.above(x).
    double cut = -std::numeric_limits<double>::infinity();
    for (double x : v)
      if (!t.above(x)) cut = std::max(cut, x);
    return cut;
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

double rwc(std::span<const double> a, std::span<const double> b) {
  return rwc(a, b, coloc_threshold(a), coloc_threshold(b));
}

IntensityResult intensity_features(const io::Planes& thumb, const Mask& nuc, const Mask& cell, double ck_cutoff) {
  IntensityResult r;
  std::size_t k = 0;
  for (const Mask* mask : {&nuc, &cell}) {
    if (!mask->same_shape(thumb[0])) throw Error(ErrorCode::ShapeMismatch, "mask and thumbnail differ in shape");
    std::array<std::vector<double>, 3> vals;
    for (std::size_t i = 0; i < mask->size(); ++i)
      if ((*mask)[i])
        for (int c = 0; c < 3; ++c) vals[c].push_back(thumb[c][i]);
    if (vals[0].empty()) throw Error(ErrorCode::EmptyMask, "intensity features of an empty mask");

    std::array<std::array<double, 5>, 3> stats{};
    for (int c = 0; c < 3; ++c) {
      std::vector<double> s = vals[c];
      std::sort(s.begin(), s.end());
      const double lq = quantile_sorted(s, 0.25), mq = quantile_sorted(s, 0.5), uq = quantile_sorted(s, 0.75);
      stats[c] = {mean_of(vals[c]), lq, mq, uq, uq - lq};
    }
    for (int stat = 0; stat < 5; ++stat)
      for (int c = 0; c < 3; ++c) r.values[k++] = stats[c][stat];

    std::size_t pos = 0;
    for (double v : vals[1]) pos += v > ck_cutoff ? 1 : 0;
    r.values[k++] = static_cast<double>(pos) / static_cast<double>(vals[1].size());

    for (auto [a, b] : kPairs) {
      bool zv = false;
      r.values[k++] = pearson(vals[a], vals[b], zv);
      if (zv) r.flags |= kZeroVarianceCorrelation;
    }
    const double tck = coloc_threshold(vals[1]);
    const double tdapi = coloc_threshold(vals[0]);
    const double tcd45 = coloc_threshold(vals[2]);
    if (std::isinf(tck) || std::isinf(tdapi) || std::isinf(tcd45)) r.flags |= kDegenerateColoc;
    r.values[k++] = rwc(vals[1], vals[0], tck, tdapi);
    r.values[k++] = rwc(vals[1], vals[2], tck, tcd45);
  }
  std::vector<double> ck(thumb[1].pixels().begin(), thumb[1].pixels().end());
  r.values[k++] = mean_of(ck);
  r.values[k++] = std_of(ck);
  return r;
}

namespace {

std::vector<double> gabor_kernel(int theta_deg, double freq, int sigma) {
  const int half = 3 * sigma;
  const int size = 2 * half + 1;
  const double th = theta_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  std::vector<double> k(static_cast<std::size_t>(size) * size);
  for (int y = -half; y <= half; ++y)
    for (int x = -half; x <= half; ++x) {
      const double xp = x * ct + y * st;
      const double yp = -x * st + y * ct;
      k[static_cast<std::size_t>(y + half) * size + (x + half)] =
          std::exp(-(xp * xp + yp * yp) / (2.0 * sigma * sigma)) * std::cos(2.0 * std::numbers::pi * freq * xp);
    }
  return k;
}

}  // namespace

std::array<double, kNumGabor> gabor_features(const Plane16& ck) {
  static const std::vector<std::vector<double>> bank = [] {
    std::vector<std::vector<double>> b;
    for (int th : kGaborTheta)
      for (double f : kGaborFreq)
        for (int s : kGaborSigma) b.push_back(gabor_kernel(th, f, s));
    return b;
  }();
  const PlaneD img = convert<double>(ck);
  std::array<double, kNumGabor> out{};
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const int size = 6 * kGaborSigma[i % kGaborSigma.size()] + 1;
    const PlaneD r = imgproc::filter2d(img, bank[i], size, size);
    out[2 * i] = mean_of(r.pixels());
    out[2 * i + 1] = std_of(r.pixels());
  }
  return out;
}

std::array<double, kNumLaws> laws_features(const Plane16& ck) {
  PlaneD img = convert<double>(ck);
  const double m = mean_of(img.pixels());
  for (auto& v : img.pixels()) v -= m;
  std::array<double, kNumLaws> out{};
  std::size_t k = 0;
  for (const auto& a : kLaws)
    for (const auto& b : kLaws) {
      std::array<double, 25> kern{};
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) kern[y * 5 + x] = a[y] * b[x];
      const PlaneD r = imgproc::filter2d(img, kern, 5, 5);
      double abs_sum = 0.0;
      for (double v : r.pixels()) abs_sum += std::abs(v);
      out[k++] = abs_sum / static_cast<double>(r.size());
      out[k++] = std_of(r.pixels());
    }
  return out;
}

Image<std::uint8_t> lbp_codes(const Plane16& p) {
  if (p.width() < 3 || p.height() < 3) throw Error(ErrorCode::BadParams, "LBP needs at least 3x3 pixels");
  static constexpr int dx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
  static constexpr int dy[8] = {0, 1, 1, 1, 0, -1, -1, -1};
  Image<std::uint8_t> out(p.width() - 2, p.height() - 2, 0);
  for (int y = 1; y < p.height() - 1; ++y)
    for (int x = 1; x < p.width() - 1; ++x) {
      const int c = p(x, y);
      int code = 0;
      for (int n = 0; n < 8; ++n)
        if (p(x + dx[n], y + dy[n]) - c > 0) code |= 1 << n;
      out(x - 1, y - 1) = static_cast<std::uint8_t>(code);
    }
  return out;
}

double normalized_mutual_information(const Image<std::uint8_t>& a, const Image<std::uint8_t>& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, "code images differ in shape");
  std::vector<double> joint(256 * 256, 0.0);
  std::array<double, 256> pa{}, pb{};
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[a[i] * 256 + b[i]] += 1.0;
    pa[a[i]] += 1.0;
    pb[b[i]] += 1.0;
  }
  auto entropy = [&](const std::array<double, 256>& p) {
    double h = 0.0;
    for (double c : p)
      if (c > 0) h -= (c / n) * std::log(c / n);
    return h;
  };
  const double ha = entropy(pa), hb = entropy(pb);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  double mi = 0.0;
  for (int i = 0; i < 256; ++i)
    for (int j = 0; j < 256; ++j) {
      const double c = joint[i * 256 + j];
      if (c > 0) mi += (c / n) * std::log(c * n / (pa[i] * pb[j]));
    }
  return std::clamp(2.0 * mi / (ha + hb), 0.0, 1.0);
}

LbpResult lbp_features(const io::Planes& thumb) {
  std::array<Image<std::uint8_t>, 3> codes;
  std::array<std::vector<double>, 3> cv;
  for (int c = 0; c < 3; ++c) {
    codes[c] = lbp_codes(thumb[c]);
    cv[c].assign(codes[c].pixels().begin(), codes[c].pixels().end());
  }
  LbpResult r;
  for (std::size_t p = 0; p < kPairs.size(); ++p) {
    bool zv = false;
    r.values[p] = pearson(cv[kPairs[p].first], cv[kPairs[p].second], zv);
    if (zv) r.flags |= kZeroVarianceLbp;
    r.values[3 + p] = normalized_mutual_information(codes[kPairs[p].first], codes[kPairs[p].second]);
  }
  return r;
}

double ck_cutoff_from_background(const Plane16& ck) {
  if (ck.empty()) throw Error(ErrorCode::BadParams, "empty CK plane");
  std::vector<double> v;
  const std::size_t step = std::max<std::size_t>(1, ck.size() / 262144);
  for (std::size_t i = 0; i < ck.size(); i += step) v.push_back(ck[i]);
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double med = *mid;
  for (double& x : v) x = std::abs(x - med);
  std::nth_element(v.begin(), mid, v.end());
  return med + 2.0 * 1.4826 * *mid;
}

FeatureVector extract(const io::Planes& thumb, const Mask& nuc, const Mask& cell, const FeatureConfig& config) {
  FeatureVector fv;
  std::size_t k = 0;
  const Morphology mn = morphology_features(nuc);
  const Morphology mc = morphology_features(cell);
  for (const Morphology* m : {&mn, &mc}) {
    fv.values[k++] = m->size;
    fv.values[k++] = m->roundness;
    fv.values[k++] = m->elongation;
    fv.values[k++] = m->hu1;
  }
  if (mn.degenerate) fv.flags |= kDegenerateNucleus;
  if (mc.degenerate) fv.flags |= kDegenerateCell;
  const IntensityResult in = intensity_features(thumb, nuc, cell, config.ck_cutoff);
  fv.flags |= in.flags;
  for (double v : in.values) fv.values[k++] = v;
  for (double v : gabor_features(thumb[1])) fv.values[k++] = v;
  for (double v : laws_features(thumb[1])) fv.values[k++] = v;
  const LbpResult lbp = lbp_features(thumb);
  fv.flags |= lbp.flags;
  for (double v : lbp.values) fv.values[k++] = v;
  return fv;
}

}  // namespace bria::features

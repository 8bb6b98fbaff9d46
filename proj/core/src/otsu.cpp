#include "bria/otsu.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bria/error.hpp"

namespace bria {

namespace {

using u128 = unsigned __int128;
using i128 = __int128;

// Score D^2 / den kept as (quotient, remainder, den) for exact comparison.
struct Score {
  u128 q = 0;
  u128 r = 0;
  std::uint64_t den = 1;
};

bool greater(const Score& a, const Score& b) {
  if (a.q != b.q) return a.q > b.q;
  // r < den <= 2^62, so the cross products fit in 128 bits.
  return a.r * static_cast<u128>(b.den) > b.r * static_cast<u128>(a.den);
}


}  // namespace

int otsu_bin(const Histogram256& hist) {
  std::uint64_t n = 0;
  u128 total_sum = 0;
  int populated = 0;
  for (int i = 0; i < kOtsuBins; ++i) {
    n += hist[i];
    total_sum += static_cast<u128>(i) * hist[i];
    if (hist[i]) ++populated;
  }
  if (populated < 2) throw Error(ErrorCode::DegenerateInput, "histogram has fewer than two populated bins");
  if (n > (std::uint64_t{1} << 31)) throw Error(ErrorCode::BadParams, "histogram total exceeds 2^31 samples");

  int best = 0;
  Score best_score;
  bool have = false;
  std::uint64_t w = 0;
  u128 s = 0;
  for (int k = 0; k < kOtsuBins - 1; ++k) {
    w += hist[k];
    s += static_cast<u128>(k) * hist[k];
    if (w == 0 || w == n) {
      if (!have) {
        best = k;
        best_score = Score{};
        have = true;
      }
      continue;
    }
    // sigma_B^2 * n^2 = (mu_T * w - s * n)^2 / (w (n - w)), scaled by n.
    const i128 d = static_cast<i128>(total_sum) * static_cast<i128>(w) - static_cast<i128>(s) * static_cast<i128>(n);
    const u128 mag = static_cast<u128>(d < 0 ? -d : d);
    const u128 num = mag * mag;
    const std::uint64_t den = w * (n - w);
    const Score sc{num / den, num % den, den};
    if (!have || greater(sc, best_score)) {
      best = k;
      best_score = sc;
      have = true;
    }
  }
  return best;
}

int OtsuThreshold::bin_of(double v) const noexcept {
  if (!(hi > lo)) return 0;
  const double t = (v - lo) / (hi - lo) * kOtsuBins;
  if (t <= 0.0) return 0;
  const int b = static_cast<int>(t);
  return std::min(b, kOtsuBins - 1);
}

Histogram256 histogram256(std::span<const double> values, double lo, double hi) {
  OtsuThreshold binner{0, lo, hi, 0.0};
  Histogram256 h{};
  for (double v : values) ++h[binner.bin_of(v)];
  return h;
}

OtsuThreshold otsu_threshold(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::DegenerateInput, "no values");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (!(*mx > *mn)) throw Error(ErrorCode::DegenerateInput, "all values equal");
  OtsuThreshold t{0, *mn, *mx, 0.0};
  const Histogram256 h = histogram256(values, t.lo, t.hi);
  t.bin = otsu_bin(h);
  t.threshold = t.lo + (t.bin + 1) * (t.hi - t.lo) / kOtsuBins;
  return t;
}

OtsuThreshold otsu_threshold(std::span<const float> values) {
  std::vector<double> v(values.begin(), values.end());
  return otsu_threshold(std::span<const double>(v));
}

}  // namespace bria

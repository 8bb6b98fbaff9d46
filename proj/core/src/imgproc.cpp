#include "bria/imgproc.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace bria::imgproc {

std::vector<float> gaussian_kernel(double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + r];
  }
  std::vector<float> out(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) out[i] = static_cast<float>(k[i] / sum);
  return out;
}

std::vector<float> gaussian_d2_kernel(double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  const double s2 = sigma * sigma;
  std::vector<double> g(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    g[i + r] = std::exp(-(i * i) / (2.0 * s2));
    sum += g[i + r];
  }
  std::vector<double> d2(g.size());
  double mean = 0.0;
  for (int i = -r; i <= r; ++i) {
    d2[i + r] = (i * i - s2) / (s2 * s2) * g[i + r] / sum;
    mean += d2[i + r];
  }
  // Truncation leaves a small DC term; remove it so constants map to zero.
  mean /= static_cast<double>(d2.size());
  std::vector<float> out(d2.size());
  for (std::size_t i = 0; i < d2.size(); ++i) out[i] = static_cast<float>(d2[i] - mean);
  return out;
}

namespace {

// Correlate rows of `in` with k into `out` (same shape).
void filter_rows(const PlaneF& in, std::span<const float> k, PlaneF& out) {
  const int w = in.width();
  const int h = in.height();
  const int r = static_cast<int>(k.size() / 2);
  std::vector<float> padded(static_cast<std::size_t>(w + 2 * r));
  for (int y = 0; y < h; ++y) {
    auto src = in.row(y);
    for (int i = 0; i < w + 2 * r; ++i) padded[i] = src[reflect_index(i - r, w)];
    auto dst = out.row(y);
    for (int x = 0; x < w; ++x) {
      const float* p = padded.data() + x;
      float acc = 0.0f;
      for (std::size_t j = 0; j < k.size(); ++j) acc += k[j] * p[j];
      dst[x] = acc;
    }
  }
}

void filter_cols(const PlaneF& in, std::span<const float> k, PlaneF& out) {
  const int w = in.width();
  const int h = in.height();
  const int r = static_cast<int>(k.size() / 2);
  std::vector<float> acc(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    for (std::size_t j = 0; j < k.size(); ++j) {
      const float kj = k[j];
      auto src = in.row(reflect_index(y + static_cast<int>(j) - r, h));
      for (int x = 0; x < w; ++x) acc[x] += kj * src[x];
    }
    std::copy(acc.begin(), acc.end(), out.row(y).begin());
  }
}

}  // namespace

PlaneF separable_filter(const PlaneF& in, std::span<const float> kx, std::span<const float> ky) {
  PlaneF tmp(in.width(), in.height());
  PlaneF out(in.width(), in.height());
  filter_rows(in, kx, tmp);
  filter_cols(tmp, ky, out);
  return out;
}

PlaneF gaussian_blur(const PlaneF& in, double sigma) {
  const auto k = gaussian_kernel(sigma);
  return separable_filter(in, k, k);
}

PlaneD filter2d(const PlaneD& in, std::span<const double> kernel, int kw, int kh) {
  const int w = in.width();
  const int h = in.height();
  const int rx = kw / 2;
  const int ry = kh / 2;
  const int pw = w + 2 * rx;
  const int ph = h + 2 * ry;
  std::vector<double> padded(static_cast<std::size_t>(pw) * ph);
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect_index(y - ry, h);
    for (int x = 0; x < pw; ++x) padded[static_cast<std::size_t>(y) * pw + x] = in(reflect_index(x - rx, w), sy);
  }
  PlaneD out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = 0; j < kh; ++j) {
        const double* prow = padded.data() + static_cast<std::size_t>(y + j) * pw + x;
        const double* krow = kernel.data() + static_cast<std::size_t>(j) * kw;
        for (int i = 0; i < kw; ++i) acc += krow[i] * prow[i];
      }
      out(x, y) = acc;
    }
  }
  return out;
}

Gradient sobel(const PlaneD& in) {
  const int w = in.width();
  const int h = in.height();
  Gradient g{PlaneD(w, h), PlaneD(w, h)};
  for (int y = 0; y < h; ++y) {
    const int ym = reflect_index(y - 1, h);
    const int yp = reflect_index(y + 1, h);
    for (int x = 0; x < w; ++x) {
      const int xm = reflect_index(x - 1, w);
      const int xp = reflect_index(x + 1, w);
      g.gx(x, y) = (in(xp, ym) + 2.0 * in(xp, y) + in(xp, yp)) - (in(xm, ym) + 2.0 * in(xm, y) + in(xm, yp));
      g.gy(x, y) = (in(xm, yp) + 2.0 * in(x, yp) + in(xp, yp)) - (in(xm, ym) + 2.0 * in(x, ym) + in(xp, ym));
    }
  }
  return g;
}

Mask dilate_cross(const Mask& m) {
  Mask out = m;
  const int w = m.width();
  const int h = m.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (m(x, y)) continue;
      if ((x > 0 && m(x - 1, y)) || (x + 1 < w && m(x + 1, y)) || (y > 0 && m(x, y - 1)) ||
          (y + 1 < h && m(x, y + 1))) {
        out(x, y) = 1;
      }
    }
  }
  return out;
}

namespace {

std::vector<PixelPos> disk_offsets(int radius) {
  std::vector<PixelPos> offs;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) offs.push_back({dx, dy});
  return offs;
}

}  // namespace

Mask dilate_disk(const Mask& m, int radius) {
  const auto offs = disk_offsets(radius);
  Mask out(m.width(), m.height(), 0);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m(x, y)) continue;
      for (const auto& o : offs) {
        const int xx = x + o.x;
        const int yy = y + o.y;
        if (m.contains(xx, yy)) out(xx, yy) = 1;
      }
    }
  }
  return out;
}

Mask erode_disk(const Mask& m, int radius) {
  // Pixels outside the image count as foreground so erosion does not eat
  // objects touching the border.
  const auto offs = disk_offsets(radius);
  Mask out(m.width(), m.height(), 0);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m(x, y)) continue;
      bool keep = true;
      for (const auto& o : offs) {
        const int xx = x + o.x;
        const int yy = y + o.y;
        if (m.contains(xx, yy) && !m(xx, yy)) {
          keep = false;
          break;
        }
      }
      out(x, y) = keep ? 1 : 0;
    }
  }
  return out;
}

Mask flood_fill(const Mask& passable, PixelPos seed, Connectivity conn) {
  Mask out(passable.width(), passable.height(), 0);
  if (!passable.contains(seed.x, seed.y) || !passable(seed.x, seed.y)) return out;
  static constexpr int dx4[] = {1, -1, 0, 0};
  static constexpr int dy4[] = {0, 0, 1, -1};
  static constexpr int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int n = conn == Connectivity::Four ? 4 : 8;
  const int* dxs = conn == Connectivity::Four ? dx4 : dx8;
  const int* dys = conn == Connectivity::Four ? dy4 : dy8;
  std::vector<PixelPos> stack{seed};
  out(seed.x, seed.y) = 1;
  while (!stack.empty()) {
    const PixelPos p = stack.back();
    stack.pop_back();
    for (int i = 0; i < n; ++i) {
      const int xx = p.x + dxs[i];
      const int yy = p.y + dys[i];
      if (passable.contains(xx, yy) && passable(xx, yy) && !out(xx, yy)) {
        out(xx, yy) = 1;
        stack.push_back({xx, yy});
      }
    }
  }
  return out;
}

Mask component_at(const Mask& m, PixelPos seed, Connectivity conn) { return flood_fill(m, seed, conn); }

Mask fill_holes(const Mask& m) {
  const int w = m.width();
  const int h = m.height();
  Mask outside(w, h, 0);
  std::vector<PixelPos> stack;
  auto push = [&](int x, int y) {
    if (m.contains(x, y) && !m(x, y) && !outside(x, y)) {
      outside(x, y) = 1;
      stack.push_back({x, y});
    }
  };
  for (int x = 0; x < w; ++x) {
    push(x, 0);
    push(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    push(0, y);
    push(w - 1, y);
  }
  while (!stack.empty()) {
    const PixelPos p = stack.back();
    stack.pop_back();
    push(p.x + 1, p.y);
    push(p.x - 1, p.y);
    push(p.x, p.y + 1);
    push(p.x, p.y - 1);
  }
  Mask out(w, h);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = outside[i] ? 0 : 1;
  return out;
}

namespace {

// Felzenszwalb & Huttenlocher lower-envelope squared distance transform.
void edt_1d(const float* f, int n, float* d, std::vector<int>& v, std::vector<float>& z) {
  constexpr float inf = std::numeric_limits<float>::infinity();
  int k = 0;
  int first = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] < inf) {
      first = q;
      break;
    }
  }
  if (first < 0) {
    for (int q = 0; q < n; ++q) d[q] = inf;
    return;
  }
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  for (int q = first + 1; q < n; ++q) {
    if (f[q] == inf) continue;
    float s;
    for (;;) {
      const int p = v[k];
      s = ((f[q] + static_cast<float>(q) * q) - (f[p] + static_cast<float>(p) * p)) / (2.0f * (q - p));
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[k]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<float>(q)) ++k;
    const float diff = static_cast<float>(q - v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace

PlaneF distance_to(const Mask& target) {
  constexpr float inf = std::numeric_limits<float>::infinity();
  const int w = target.width();
  const int h = target.height();
  PlaneF sq(w, h);
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = target[i] ? 0.0f : inf;
  const int n = std::max(w, h);
  std::vector<float> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = sq(x, y);
    edt_1d(f.data(), h, d.data(), v, z);
    for (int y = 0; y < h; ++y) sq(x, y) = d[y];
  }
  for (int y = 0; y < h; ++y) {
    auto r = sq.row(y);
    std::copy(r.begin(), r.end(), f.begin());
    edt_1d(f.data(), w, d.data(), v, z);
    for (int x = 0; x < w; ++x) r[x] = std::sqrt(d[x]);
  }
  return sq;
}

PlaneF signed_distance(const Mask& m) {
  Mask inv(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) inv[i] = m[i] ? 0 : 1;
  const PlaneF to_fg = distance_to(m);
  const PlaneF to_bg = distance_to(inv);
  PlaneF out(m.width(), m.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = m[i] ? to_bg[i] - 0.5f : -(to_fg[i] - 0.5f);
  }
  return out;
}

}  // namespace bria::imgproc

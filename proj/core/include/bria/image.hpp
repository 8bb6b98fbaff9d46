#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bria {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct PixelPos {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelPos&, const PixelPos&) = default;
};

/// Dense row-major 2D image.
template <typename T>
class Image {
public:
  using value_type = T;

  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    assert(width >= 0 && height >= 0);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> row(int y) noexcept {
    return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
  }
  std::span<const T> row(int y) const noexcept {
    return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
  }

  std::span<T> pixels() noexcept { return data_; }
  std::span<const T> pixels() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  bool same_shape(int w, int h) const noexcept { return w == width_ && h == height_; }
  template <typename U>
  bool same_shape(const Image<U>& other) const noexcept {
    return other.width() == width_ && other.height() == height_;
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

private:
  std::size_t index(int x, int y) const noexcept {
    assert(contains(x, y));
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Plane16 = Image<std::uint16_t>;
using PlaneF = Image<float>;
using PlaneD = Image<double>;
/// Binary mask, values 0 or 1.
using Mask = Image<std::uint8_t>;
using LabelImage = Image<std::uint16_t>;

template <typename Out, typename In>
Image<Out> convert(const Image<In>& in) {
  Image<Out> out(in.width(), in.height());
  std::transform(in.pixels().begin(), in.pixels().end(), out.pixels().begin(),
                 [](In v) { return static_cast<Out>(v); });
  return out;
}

inline std::size_t count_nonzero(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.pixels().begin(), m.pixels().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

/// Reflect-pad index into [0, n): symmetric about the edge, edge sample repeated
/// (d c b a | a b c d | d c b a).
inline int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace bria

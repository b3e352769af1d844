// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fdconv/errors.hpp"
#include "fdconv/rng.hpp"

namespace fdconv {

/// Dimensions of a rank-4 tensor in (batch, channel, height, width) order.
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  friend bool operator==(const Shape4&, const Shape4&) = default;

  /// Element count; throws ArgumentError on overflow of the index type.
  std::int64_t numel() const {
    std::int64_t p = 1;
    for (std::int64_t d : {std::int64_t{n}, std::int64_t{c}, std::int64_t{h}, std::int64_t{w}}) {
      if (d < 0) throw ArgumentError("Shape4: negative dimension");
      if (d != 0 && p > std::numeric_limits<std::int64_t>::max() / d)
        throw ArgumentError("Shape4: element count overflows index type");
      p *= d;
    }
    return p;
  }

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

/// Dense rank-4 tensor of doubles, row-major NCHW: flat index of (n,c,y,x)
/// is ((n*C + c)*H + y)*W + x. Plain value type; share read-only across
/// threads, mutate under exclusive access.
class Tensor4 {
 public:
  Tensor4() = default;

  explicit Tensor4(Shape4 s) : shape_(s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
      throw ArgumentError("Tensor4: all dimensions must be >= 1, got " + s.str());
    data_.assign(static_cast<std::size_t>(s.numel()), 0.0);
  }

  static Tensor4 zeros(Shape4 s) { return Tensor4(s); }

  /// Deterministic uniform fill over [lo, hi): SplitMix64(seed), one draw per
  /// element in flat layout order.
  static Tensor4 fill_random(Shape4 s, std::uint64_t seed, double lo, double hi) {
    if (!(lo < hi)) throw ArgumentError("fill_random: requires lo < hi");
    Tensor4 t(s);
    SplitMix64 g(seed);
    for (double& v : t.data_) v = g.uniform(lo, hi);
    return t;
  }

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }

  double get(int n, int c, int y, int x) const {
    check_index(n, c, y, x);
    return data_[flat(n, c, y, x)];
  }

  void set(int n, int c, int y, int x, double v) {
    check_index(n, c, y, x);
    data_[flat(n, c, y, x)] = v;
  }

  /// Unchecked flat index; kernels use this with indices they have validated.
  std::size_t flat(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  /// Pointer to the h*w block of one (batch, channel) plane.
  double* plane(int n, int c) { return data_.data() + flat(n, c, 0, 0); }
  const double* plane(int n, int c) const { return data_.data() + flat(n, c, 0, 0); }

 private:
  void check_index(int n, int c, int y, int x) const {
    if (n < 0 || n >= shape_.n || c < 0 || c >= shape_.c || y < 0 || y >= shape_.h || x < 0 ||
        x >= shape_.w)
      throw IndexError("Tensor4: index (" + std::to_string(n) + "," + std::to_string(c) + "," +
                       std::to_string(y) + "," + std::to_string(x) + ") out of bounds for shape " +
                       shape_.str());
  }

  Shape4 shape_{};
  std::vector<double> data_;
};

/// Integer class-label raster (batch, height, width), one byte per pixel.
/// 255 is the conventional ignore label.
struct LabelMap {
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> v;

  LabelMap() = default;
  LabelMap(int n_, int h_, int w_, std::uint8_t fill = 0) : n(n_), h(h_), w(w_) {
    if (n_ < 1 || h_ < 1 || w_ < 1) throw ArgumentError("LabelMap: dimensions must be >= 1");
    v.assign(static_cast<std::size_t>(n_) * h_ * w_, fill);
  }

  std::uint8_t get(int bi, int y, int x) const {
    check(bi, y, x);
    return v[flat(bi, y, x)];
  }
  void set(int bi, int y, int x, std::uint8_t c) {
    check(bi, y, x);
    v[flat(bi, y, x)] = c;
  }
  std::size_t flat(int bi, int y, int x) const noexcept {
    return (static_cast<std::size_t>(bi) * h + y) * w + x;
  }
  const std::uint8_t* row(int bi, int y) const { return v.data() + flat(bi, y, 0); }
  std::uint8_t* row(int bi, int y) { return v.data() + flat(bi, y, 0); }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  void check(int bi, int y, int x) const {
    if (bi < 0 || bi >= n || y < 0 || y >= h || x < 0 || x >= w)
      throw IndexError("LabelMap: index out of bounds");
  }
};

}  // namespace fdconv

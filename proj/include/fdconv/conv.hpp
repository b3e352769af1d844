// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0
//
// Channel-wise fractional dilated convolution. Each input channel carries its
// own positive real dilation factor d[c]; taps at non-integer positions are
// read through bilinear interpolation of the four surrounding grid points
// (zero outside the image), which makes the layer differentiable in d.

#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "fdconv/errors.hpp"
#include "fdconv/parallel.hpp"
#include "fdconv/rng.hpp"
#include "fdconv/tensor.hpp"

namespace fdconv {

/// One dilation factor per input channel plus the legal range [lo, hi].
struct DilationVector {
  std::vector<double> d;
  double lo = 1.0;
  double hi = 4.0;

  int channels() const { return static_cast<int>(d.size()); }

  void validate() const {
    if (!(lo > 0.0) || !(lo <= hi)) throw ArgumentError("DilationVector: requires 0 < lo <= hi");
    for (double x : d)
      if (!(x >= lo) || !(x <= hi))
        throw ArgumentError("DilationVector: entry " + std::to_string(x) + " outside [" +
                            std::to_string(lo) + "," + std::to_string(hi) + "]");
  }
};

struct DilationInit {
  enum class Mode { Constant, Uniform };
  Mode mode = Mode::Constant;
  double value = 1.0;       // Constant
  std::uint64_t seed = 0;   // Uniform

  static DilationInit constant(double v) { return {Mode::Constant, v, 0}; }
  static DilationInit uniform(std::uint64_t seed) { return {Mode::Uniform, 0.0, seed}; }
};

inline DilationVector init_dilations(const DilationInit& init, double lo, double hi, int channels) {
  if (!(lo > 0.0) || !(lo <= hi)) throw ArgumentError("init_dilations: requires 0 < lo <= hi");
  if (channels < 1) throw ArgumentError("init_dilations: channels must be >= 1");
  DilationVector out;
  out.lo = lo;
  out.hi = hi;
  out.d.resize(channels);
  if (init.mode == DilationInit::Mode::Constant) {
    if (init.value < lo || init.value > hi)
      throw ArgumentError("init_dilations: constant value " + std::to_string(init.value) +
                          " outside [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
    for (double& x : out.d) x = init.value;
  } else {
    SplitMix64 g(init.seed);
    for (double& x : out.d) x = g.uniform(lo, hi);
  }
  return out;
}

/// Clamps every entry into [lo, hi]. Idempotent.
inline DilationVector project_dilations(DilationVector v) {
  for (double& x : v.d) x = x < v.lo ? v.lo : (x > v.hi ? v.hi : x);
  return v;
}

/// Parameters of one fractional dilated convolution layer.
/// weights are (C_out, C_in, K, K), kernel K odd so taps are the centered
/// offsets {-r..r}, r = (K-1)/2. The dilation factor is shared by both axes
/// and all output channels, per input channel.
struct ConvLayerState {
  Tensor4 weights;
  std::vector<double> bias;
  DilationVector dilation;

  int out_channels() const { return weights.n(); }
  int in_channels() const { return weights.c(); }
  int kernel() const { return weights.h(); }
  int radius() const { return (kernel() - 1) / 2; }

  void validate() const {
    if (weights.h() != weights.w()) throw ShapeError("ConvLayerState: kernel must be square");
    if (weights.h() % 2 == 0) throw ShapeError("ConvLayerState: kernel size must be odd");
    if (static_cast<int>(bias.size()) != out_channels())
      throw ShapeError("ConvLayerState: bias length must equal out_channels");
    if (dilation.channels() != in_channels())
      throw ShapeError("ConvLayerState: dilation length must equal in_channels");
    dilation.validate();
  }
};

/// Gradients of one layer, shapes mirroring the parameters and the input.
struct LayerGradients {
  Tensor4 d_weights;
  std::vector<double> d_bias;
  std::vector<double> d_dilation;
  Tensor4 d_input;
};

/// Fractional sample position decomposed for bilinear interpolation.
/// Anchors are always (floor(u), floor(u)+1), even at integer u where the far
/// corner carries weight 0; this keeps a well-defined one-sided derivative.
struct BilinearStencil {
  double u = 0.0, v = 0.0;
  std::int64_t f_u = 0, f_v = 0;
  double du = 0.0, dv = 0.0;

  static BilinearStencil at(double u, double v) {
    BilinearStencil s;
    s.u = u;
    s.v = v;
    s.f_u = static_cast<std::int64_t>(std::floor(u));
    s.f_v = static_cast<std::int64_t>(std::floor(v));
    s.du = u - static_cast<double>(s.f_u);
    s.dv = v - static_cast<double>(s.f_v);
    return s;
  }

  /// Corner weights in order (f_u,f_v), (f_u,f_v+1), (f_u+1,f_v), (f_u+1,f_v+1).
  std::array<double, 4> corner_weights() const {
    return {(1.0 - du) * (1.0 - dv), (1.0 - du) * dv, du * (1.0 - dv), du * dv};
  }
};

/// Value of plane (n,c) at fractional position (u=row, v=col); corners outside
/// [0,H-1]x[0,W-1] contribute zero. Exact table lookup at integer (u,v).
inline double sample_bilinear(const Tensor4& x, int n, int c, double u, double v) {
  if (n < 0 || n >= x.n() || c < 0 || c >= x.c())
    throw IndexError("sample_bilinear: batch/channel index out of bounds");
  const auto s = BilinearStencil::at(u, v);
  const int H = x.h(), W = x.w();
  const double* p = x.plane(n, c);
  auto corner = [&](std::int64_t y, std::int64_t xx) -> double {
    if (y < 0 || y >= H || xx < 0 || xx >= W) return 0.0;
    return p[static_cast<std::size_t>(y) * W + xx];
  };
  const auto w = s.corner_weights();
  return w[0] * corner(s.f_u, s.f_v) + w[1] * corner(s.f_u, s.f_v + 1) +
         w[2] * corner(s.f_u + 1, s.f_v) + w[3] * corner(s.f_u + 1, s.f_v + 1);
}

namespace detail {

// Tap offset i*d decomposed into integer shift + fractional part. Output row m
// samples input row m + shift with constant frac across the plane, so each
// (channel, tap) pair needs just one stencil.
struct TapSplit {
  std::int64_t shift;
  double frac;
};

inline TapSplit split_tap(int tap, double d) {
  const double t = static_cast<double>(tap) * d;
  const double f = std::floor(t);
  return {static_cast<std::int64_t>(f), t - f};
}

// Writes one im2col row: dst[m*W+n] = bilinear sample of src (H*W plane) at
// (m + su.shift + su.frac, n + sv.shift + sv.frac), zero-padded.
inline void fill_patch_row(double* dst, const double* src, int H, int W, TapSplit su, TapSplit sv) {
  const double du = su.frac, dv = sv.frac;
  const double w00 = (1.0 - du) * (1.0 - dv), w01 = (1.0 - du) * dv;
  const double w10 = du * (1.0 - dv), w11 = du * dv;
  const std::int64_t gt = sv.shift;
  // Columns where both source columns n+gt and n+gt+1 are in range.
  std::int64_t lo = -gt;
  if (lo < 0) lo = 0;
  std::int64_t hi = W - 1 - gt;  // exclusive: needs n+gt+1 <= W-1
  if (hi > W) hi = W;
  if (hi < lo) hi = lo;

  auto col0 = [&](const double* row, std::int64_t n) -> double {
    const std::int64_t s = n + gt;
    return (s >= 0 && s < W) ? row[s] : 0.0;
  };
  auto col1 = [&](const double* row, std::int64_t n) -> double {
    const std::int64_t s = n + gt + 1;
    return (s >= 0 && s < W) ? row[s] : 0.0;
  };

  for (int m = 0; m < H; ++m, dst += W) {
    const std::int64_t r0 = m + su.shift, r1 = r0 + 1;
    const double* row0 = (r0 >= 0 && r0 < H) ? src + r0 * W : nullptr;
    const double* row1 = (r1 >= 0 && r1 < H) ? src + r1 * W : nullptr;
    if (!row0 && !row1) {
      std::memset(dst, 0, sizeof(double) * W);
      continue;
    }
    std::int64_t n = 0;
    if (row0 && row1) {
      for (; n < lo; ++n)
        dst[n] = w00 * col0(row0, n) + w01 * col1(row0, n) + w10 * col0(row1, n) + w11 * col1(row1, n);
      const double* a = row0 + gt;
      const double* b = row1 + gt;
      for (; n < hi; ++n) dst[n] = w00 * a[n] + w01 * a[n + 1] + w10 * b[n] + w11 * b[n + 1];
      for (; n < W; ++n)
        dst[n] = w00 * col0(row0, n) + w01 * col1(row0, n) + w10 * col0(row1, n) + w11 * col1(row1, n);
    } else {
      const double* row = row0 ? row0 : row1;
      const double wa = row0 ? w00 : w10, wb = row0 ? w01 : w11;
      for (; n < lo; ++n) dst[n] = wa * col0(row, n) + wb * col1(row, n);
      const double* a = row + gt;
      for (; n < hi; ++n) dst[n] = wa * a[n] + wb * a[n + 1];
      for (; n < W; ++n) dst[n] = wa * col0(row, n) + wb * col1(row, n);
    }
  }
}

inline void axpy(double* y, double a, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

/// Forward pass, "same" spatial size through zero padding:
///   y[b][o][m][n] = bias[o]
///     + sum_{c,i,j} weights[o][c][i+r][j+r] * B_c(m + i*d[c], n + j*d[c])
/// where B_c is the bilinear sample of input channel c and i,j run over the
/// centered tap offsets {-r..r}.
inline Tensor4 forward(const Tensor4& x, const ConvLayerState& layer) {
  layer.validate();
  if (x.c() != layer.in_channels())
    throw ShapeError("forward: input has " + std::to_string(x.c()) + " channels, layer expects " +
                     std::to_string(layer.in_channels()));
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const int K = layer.kernel(), r = layer.radius(), O = layer.out_channels();
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const std::size_t rows = static_cast<std::size_t>(C) * K * K;

  std::vector<detail::TapSplit> tap(static_cast<std::size_t>(C) * K);
  for (int c = 0; c < C; ++c)
    for (int k = 0; k < K; ++k) tap[c * K + k] = detail::split_tap(k - r, layer.dilation.d[c]);

  Tensor4 y(Shape4{N, O, H, W});
  parallel_chunks(static_cast<std::size_t>(N), [&](std::size_t, std::size_t b0, std::size_t b1) {
    std::vector<double> patch(rows * hw);
    for (std::size_t b = b0; b < b1; ++b) {
      const int bi = static_cast<int>(b);
      for (int c = 0; c < C; ++c) {
        const double* src = x.plane(bi, c);
        for (int ki = 0; ki < K; ++ki)
          for (int kj = 0; kj < K; ++kj) {
            double* dst = patch.data() + ((static_cast<std::size_t>(c) * K + ki) * K + kj) * hw;
            detail::fill_patch_row(dst, src, H, W, tap[c * K + ki], tap[c * K + kj]);
          }
      }
      for (int o = 0; o < O; ++o) {
        double* yo = y.plane(bi, o);
        const double beta = layer.bias[o];
        for (std::size_t p = 0; p < hw; ++p) yo[p] = beta;
      }
      const double* wptr = layer.weights.data();
      for (std::size_t row = 0; row < rows; ++row) {
        const double* pr = patch.data() + row * hw;
        for (int o = 0; o < O; ++o) {
          const double w = wptr[static_cast<std::size_t>(o) * rows + row];
          if (w != 0.0) detail::axpy(y.plane(bi, o), w, pr, hw);
        }
      }
    }
  });
  return y;
}

/// Conventional integer dilated convolution by direct table lookup (no
/// interpolation), zero padding, same output size. Independent of the
/// bilinear path; serves as its exactness oracle at integer dilations.
inline Tensor4 forward_integer(const Tensor4& x, const ConvLayerState& layer,
                               const std::vector<int>& d_int) {
  layer.validate();
  if (x.c() != layer.in_channels()) throw ShapeError("forward_integer: channel mismatch");
  if (static_cast<int>(d_int.size()) != layer.in_channels())
    throw ShapeError("forward_integer: d_int length must equal in_channels");
  for (int d : d_int)
    if (d < 1) throw ArgumentError("forward_integer: dilations must be positive");

  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const int K = layer.kernel(), r = layer.radius(), O = layer.out_channels();
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const std::size_t rows = static_cast<std::size_t>(C) * K * K;

  Tensor4 y(Shape4{N, O, H, W});
  parallel_chunks(static_cast<std::size_t>(N), [&](std::size_t, std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      const int bi = static_cast<int>(b);
      for (int o = 0; o < O; ++o) {
        double* yo = y.plane(bi, o);
        const double beta = layer.bias[o];
        for (std::size_t p = 0; p < hw; ++p) yo[p] = beta;
      }
      const double* wptr = layer.weights.data();
      for (int c = 0; c < C; ++c) {
        const double* src = x.plane(bi, c);
        for (int ki = 0; ki < K; ++ki)
          for (int kj = 0; kj < K; ++kj) {
            const int off_u = (ki - r) * d_int[c];
            const int off_v = (kj - r) * d_int[c];
            const std::size_t row = (static_cast<std::size_t>(c) * K + ki) * K + kj;
            // Valid output rows/cols where the shifted source index is in range.
            const int m0 = std::max(0, -off_u), m1 = std::min(H, H - off_u);
            const int n0 = std::max(0, -off_v), n1 = std::min(W, W - off_v);
            for (int o = 0; o < O; ++o) {
              const double w = wptr[static_cast<std::size_t>(o) * rows + row];
              if (w == 0.0) continue;
              double* yo = y.plane(bi, o);
              for (int m = m0; m < m1; ++m) {
                const double* s = src + static_cast<std::size_t>(m + off_u) * W + off_v;
                double* t = yo + static_cast<std::size_t>(m) * W;
                for (int n = n0; n < n1; ++n) t[n] += w * s[n];
              }
            }
          }
      }
    }
  });
  return y;
}

/// Full backward pass. grad_out must match the forward output shape. Returns
/// the exact derivatives of the bilinear forward:
///   d_bias[o]            = sum grad_out[b][o][m][n]
///   d_weights[o][c][i][j]= sum grad_out * B_c(u,v)
///   d_input              = scatter of grad_out * weight * corner weight into
///                          in-bounds corners (out-of-bounds corners get none)
///   d_dilation[c]        = sum grad_out * weight * (i * dB/du + j * dB/dv)
/// with dB/du = (1-dv)(x[fu+1][fv]-x[fu][fv]) + dv(x[fu+1][fv+1]-x[fu][fv+1])
/// and symmetrically dB/dv, zero-padded corner values.
inline LayerGradients backward(const Tensor4& x, const ConvLayerState& layer,
                               const Tensor4& grad_out) {
  layer.validate();
  if (x.c() != layer.in_channels()) throw ShapeError("backward: channel mismatch");
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const int K = layer.kernel(), r = layer.radius(), O = layer.out_channels();
  if (grad_out.shape() != Shape4{N, O, H, W})
    throw ShapeError("backward: grad_out shape " + grad_out.shape().str() +
                     " does not match forward output " + Shape4{N, O, H, W}.str());
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const std::size_t rows = static_cast<std::size_t>(C) * K * K;

  std::vector<detail::TapSplit> tap(static_cast<std::size_t>(C) * K);
  for (int c = 0; c < C; ++c)
    for (int k = 0; k < K; ++k) tap[c * K + k] = detail::split_tap(k - r, layer.dilation.d[c]);

  LayerGradients g;
  g.d_weights = Tensor4(layer.weights.shape());
  g.d_bias.assign(O, 0.0);
  g.d_dilation.assign(C, 0.0);
  g.d_input = Tensor4(x.shape());

  // Per-item accumulators, reduced in item order afterwards so the result is
  // independent of the thread count.
  std::vector<std::vector<double>> dw_item(N), db_item(N), dd_item(N);

  parallel_chunks(static_cast<std::size_t>(N), [&](std::size_t, std::size_t b0, std::size_t b1) {
    std::vector<double> patch(rows * hw);
    std::vector<double> gcol(rows * hw);
    for (std::size_t b = b0; b < b1; ++b) {
      const int bi = static_cast<int>(b);
      auto& dw = dw_item[b];
      auto& db = db_item[b];
      auto& dd = dd_item[b];
      dw.assign(static_cast<std::size_t>(O) * rows, 0.0);
      db.assign(O, 0.0);
      dd.assign(C, 0.0);

      for (int c = 0; c < C; ++c) {
        const double* src = x.plane(bi, c);
        for (int ki = 0; ki < K; ++ki)
          for (int kj = 0; kj < K; ++kj) {
            double* dst = patch.data() + ((static_cast<std::size_t>(c) * K + ki) * K + kj) * hw;
            detail::fill_patch_row(dst, src, H, W, tap[c * K + ki], tap[c * K + kj]);
          }
      }

      const double* wptr = layer.weights.data();
      for (int o = 0; o < O; ++o) {
        const double* go = grad_out.plane(bi, o);
        double s = 0.0;
        for (std::size_t p = 0; p < hw; ++p) s += go[p];
        db[o] = s;
      }
      for (std::size_t row = 0; row < rows; ++row) {
        const double* pr = patch.data() + row * hw;
        double* gr = gcol.data() + row * hw;
        std::memset(gr, 0, sizeof(double) * hw);
        for (int o = 0; o < O; ++o) {
          const double* go = grad_out.plane(bi, o);
          dw[static_cast<std::size_t>(o) * rows + row] = detail::dot(go, pr, hw);
          const double w = wptr[static_cast<std::size_t>(o) * rows + row];
          if (w != 0.0) detail::axpy(gr, w, go, hw);
        }
      }

      // Scatter gcol into d_input and accumulate the dilation gradient.
      for (int c = 0; c < C; ++c) {
        const double* src = x.plane(bi, c);
        double* dx = g.d_input.plane(bi, c);
        double dd_c = 0.0;
        for (int ki = 0; ki < K; ++ki) {
          const auto su = tap[c * K + ki];
          const int i = ki - r;
          for (int kj = 0; kj < K; ++kj) {
            const auto sv = tap[c * K + kj];
            const int j = kj - r;
            const double du = su.frac, dv = sv.frac;
            const double w00 = (1.0 - du) * (1.0 - dv), w01 = (1.0 - du) * dv;
            const double w10 = du * (1.0 - dv), w11 = du * dv;
            // d/dd coefficients of the four corner values:
            //   i * dB/du + j * dB/dv expanded over corners.
            const double c00 = -i * (1.0 - dv) - j * (1.0 - du);
            const double c01 = -i * dv + j * (1.0 - du);
            const double c10 = i * (1.0 - dv) - j * du;
            const double c11 = i * dv + j * du;
            const std::size_t row = (static_cast<std::size_t>(c) * K + ki) * K + kj;
            const double* gr = gcol.data() + row * hw;
            const std::int64_t gt = sv.shift;
            const bool need_dd = (i != 0 || j != 0);
            // Columns where both source columns n+gt and n+gt+1 are in range.
            std::int64_t lo = -gt;
            if (lo < 0) lo = 0;
            std::int64_t hi = W - 1 - gt;
            if (hi > W) hi = W;
            if (hi < lo) hi = lo;
            for (int m = 0; m < H; ++m) {
              const std::int64_t r0 = m + su.shift, r1 = r0 + 1;
              const bool h0 = (r0 >= 0 && r0 < H), h1 = (r1 >= 0 && r1 < H);
              if (!h0 && !h1) continue;  // all corners zero: no scatter, zero dd term
              const double* x0 = h0 ? src + r0 * W : nullptr;
              const double* x1 = h1 ? src + r1 * W : nullptr;
              double* t0 = h0 ? dx + r0 * W : nullptr;
              double* t1 = h1 ? dx + r1 * W : nullptr;
              const double* grm = gr + static_cast<std::size_t>(m) * W;
              // Edge columns with per-corner checks.
              auto edge = [&](std::int64_t n_begin, std::int64_t n_end) {
                for (std::int64_t n = n_begin; n < n_end; ++n) {
                  const double gv = grm[n];
                  const std::int64_t s0 = n + gt, s1 = s0 + 1;
                  const bool k0 = (s0 >= 0 && s0 < W), k1 = (s1 >= 0 && s1 < W);
                  const double v00 = (h0 && k0) ? x0[s0] : 0.0;
                  const double v01 = (h0 && k1) ? x0[s1] : 0.0;
                  const double v10 = (h1 && k0) ? x1[s0] : 0.0;
                  const double v11 = (h1 && k1) ? x1[s1] : 0.0;
                  if (need_dd) dd_c += gv * (c00 * v00 + c01 * v01 + c10 * v10 + c11 * v11);
                  if (h0 && k0) t0[s0] += gv * w00;
                  if (h0 && k1) t0[s1] += gv * w01;
                  if (h1 && k0) t1[s0] += gv * w10;
                  if (h1 && k1) t1[s1] += gv * w11;
                }
              };
              edge(0, lo);
              if (h0 && h1) {
                if (need_dd) {
                  const double* a = x0 + gt;
                  const double* b = x1 + gt;
                  double s = 0.0;
                  for (std::int64_t n = lo; n < hi; ++n)
                    s += grm[n] * (c00 * a[n] + c01 * a[n + 1] + c10 * b[n] + c11 * b[n + 1]);
                  dd_c += s;
                }
                double* ta = t0 + gt;
                double* tb = t1 + gt;
                for (std::int64_t n = lo; n < hi; ++n) ta[n] += grm[n] * w00;
                for (std::int64_t n = lo; n < hi; ++n) ta[n + 1] += grm[n] * w01;
                for (std::int64_t n = lo; n < hi; ++n) tb[n] += grm[n] * w10;
                for (std::int64_t n = lo; n < hi; ++n) tb[n + 1] += grm[n] * w11;
              } else {
                const double* xa = h0 ? x0 : x1;
                double* tt = h0 ? t0 : t1;
                const double wa = h0 ? w00 : w10, wb = h0 ? w01 : w11;
                const double ca = h0 ? c00 : c10, cb = h0 ? c01 : c11;
                if (need_dd) {
                  const double* a = xa + gt;
                  double s = 0.0;
                  for (std::int64_t n = lo; n < hi; ++n) s += grm[n] * (ca * a[n] + cb * a[n + 1]);
                  dd_c += s;
                }
                double* ta = tt + gt;
                for (std::int64_t n = lo; n < hi; ++n) ta[n] += grm[n] * wa;
                for (std::int64_t n = lo; n < hi; ++n) ta[n + 1] += grm[n] * wb;
              }
              edge(hi, W);
            }
          }
        }
        dd[c] += dd_c;
      }
    }
  });

  double* dwp = g.d_weights.data();
  for (int b = 0; b < N; ++b) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(O) * rows; ++i) dwp[i] += dw_item[b][i];
    for (int o = 0; o < O; ++o) g.d_bias[o] += db_item[b][o];
    for (int c = 0; c < C; ++c) g.d_dilation[c] += dd_item[b][c];
  }
  return g;
}

}  // namespace fdconv

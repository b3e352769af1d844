// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference oracle. Never calls the analytic backward path,
// so it stays independent of the implementation it checks.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fdconv/conv.hpp"
#include "fdconv/errors.hpp"
#include "fdconv/tensor.hpp"

namespace fdconv {

/// Per-parameter-tensor comparison of analytic vs finite-difference gradients.
struct GradEntry {
  std::string name;
  double max_rel = 0.0;
  double max_abs = 0.0;
  std::size_t worst_index = 0;
  bool pass = true;
};

struct GradReport {
  std::vector<GradEntry> entries;
  double tolerance = 1e-6;
  double abs_floor = 1e-8;
  bool pass = true;
};

/// Central finite differences: per scalar i,
/// (f(theta + step*e_i) - f(theta - step*e_i)) / (2*step).
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> theta, double step) {
  if (!(step > 0.0)) throw ArgumentError("fd_gradient: step must be positive");
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + step;
    const double fp = f(theta);
    theta[i] = orig - step;
    const double fm = f(theta);
    theta[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("fd_gradient: non-finite function value at coordinate " +
                         std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

namespace detail {

// A component passes at |a-f| <= tol*max(|a|,|f|) or |a-f| <= abs_floor: the
// floor absorbs finite-difference roundoff on components whose true value is
// zero (gated or zero-padded paths).
inline GradEntry compare_grads(const std::string& name, const double* analytic, const double* fd,
                               std::size_t n, double tol, double abs_floor) {
  GradEntry e;
  e.name = name;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = analytic[i], f = fd[i];
    const double abs_err = std::fabs(a - f);
    const double scale = std::max(std::fabs(a), std::fabs(f));
    const double rel = scale > 0.0 ? abs_err / scale : 0.0;
    if (abs_err > e.max_abs) e.max_abs = abs_err;
    if (rel > e.max_rel) {
      e.max_rel = rel;
      e.worst_index = i;
    }
    if (!(abs_err <= tol * scale || abs_err <= abs_floor)) e.pass = false;
  }
  return e;
}

}  // namespace detail

/// Layer configuration for a self-contained gradient check.
struct GradCheckConfig {
  int in_channels = 2;
  int out_channels = 2;
  int kernel = 3;
  int height = 6;
  int width = 6;
  std::vector<double> dilations = {1.3, 2.4};
  std::uint64_t seed = 7;
  double step = 1e-6;
  double tolerance = 1e-6;
  double abs_floor = 1e-8;
  double lattice_guard = 0.05;
};

/// Distance of every tap coordinate's fractional part from the integer
/// lattice, minimized over channels and tap indices.
inline double lattice_distance(const std::vector<double>& dilations, int radius) {
  double dist = 0.5;
  for (double d : dilations)
    for (int i = 1; i <= radius; ++i) {
      const double t = i * d;
      const double fr = t - std::floor(t);
      dist = std::min(dist, std::min(fr, 1.0 - fr));
    }
  return dist;
}

/// Builds a random layer and input under cfg.seed, forms the scalar loss
/// L = <grad_out, forward(x)> for a fixed random grad_out, and compares the
/// analytic backward against central finite differences for every scalar in
/// weights, bias, dilation and input.
inline GradReport check_layer(const GradCheckConfig& cfg) {
  if (static_cast<int>(cfg.dilations.size()) != cfg.in_channels)
    throw ArgumentError("check_layer: dilations length must equal in_channels");
  const int r = (cfg.kernel - 1) / 2;
  if (r > 0 && lattice_distance(cfg.dilations, r) < cfg.lattice_guard)
    throw ArgumentError(
        "check_layer: dilation places a tap within the lattice guard of an integer "
        "coordinate; bilinear interpolation is not differentiable there");

  ConvLayerState layer;
  layer.weights = Tensor4::fill_random(Shape4{cfg.out_channels, cfg.in_channels, cfg.kernel, cfg.kernel},
                                       cfg.seed * 31 + 1, -1.0, 1.0);
  layer.bias.resize(cfg.out_channels);
  SplitMix64 g(cfg.seed * 31 + 2);
  for (double& b : layer.bias) b = g.uniform(-0.5, 0.5);
  // Wide legal range: the values under test are arbitrary positives.
  layer.dilation.lo = 1e-3;
  layer.dilation.hi = 1e3;
  layer.dilation.d = cfg.dilations;

  const Tensor4 x =
      Tensor4::fill_random(Shape4{1, cfg.in_channels, cfg.height, cfg.width}, cfg.seed * 31 + 3, -1.0, 1.0);
  const Tensor4 grad_out = Tensor4::fill_random(
      Shape4{1, cfg.out_channels, cfg.height, cfg.width}, cfg.seed * 31 + 4, -1.0, 1.0);

  const LayerGradients analytic = backward(x, layer, grad_out);

  const auto loss_with = [&](const ConvLayerState& l, const Tensor4& xin) {
    const Tensor4 y = forward(xin, l);
    double s = 0.0;
    const double* a = grad_out.data();
    const double* b = y.data();
    for (std::size_t i = 0; i < y.size(); ++i) s += a[i] * b[i];
    return s;
  };

  GradReport report;
  report.tolerance = cfg.tolerance;
  report.abs_floor = cfg.abs_floor;

  // weights
  {
    std::vector<double> theta(layer.weights.data(), layer.weights.data() + layer.weights.size());
    auto f = [&](const std::vector<double>& th) {
      ConvLayerState l = layer;
      std::copy(th.begin(), th.end(), l.weights.data());
      return loss_with(l, x);
    };
    const auto fd = fd_gradient(f, theta, cfg.step);
    report.entries.push_back(detail::compare_grads("d_weights", analytic.d_weights.data(),
                                                   fd.data(), fd.size(), cfg.tolerance,
                                                   cfg.abs_floor));
  }
  // bias
  {
    auto f = [&](const std::vector<double>& th) {
      ConvLayerState l = layer;
      l.bias = th;
      return loss_with(l, x);
    };
    const auto fd = fd_gradient(f, layer.bias, cfg.step);
    report.entries.push_back(detail::compare_grads("d_bias", analytic.d_bias.data(), fd.data(),
                                                   fd.size(), cfg.tolerance, cfg.abs_floor));
  }
  // dilation
  {
    auto f = [&](const std::vector<double>& th) {
      ConvLayerState l = layer;
      l.dilation.d = th;
      return loss_with(l, x);
    };
    const auto fd = fd_gradient(f, layer.dilation.d, cfg.step);
    report.entries.push_back(detail::compare_grads("d_dilation", analytic.d_dilation.data(),
                                                   fd.data(), fd.size(), cfg.tolerance,
                                                   cfg.abs_floor));
  }
  // input
  {
    std::vector<double> theta(x.data(), x.data() + x.size());
    auto f = [&](const std::vector<double>& th) {
      Tensor4 xi = x;
      std::copy(th.begin(), th.end(), xi.data());
      return loss_with(layer, xi);
    };
    const auto fd = fd_gradient(f, theta, cfg.step);
    report.entries.push_back(detail::compare_grads("d_input", analytic.d_input.data(), fd.data(),
                                                   fd.size(), cfg.tolerance, cfg.abs_floor));
  }

  for (const auto& e : report.entries) report.pass = report.pass && e.pass;
  return report;
}

}  // namespace fdconv

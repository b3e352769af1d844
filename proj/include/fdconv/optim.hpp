// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0
//
// Batch SGD with momentum and weight decay under the "poly" learning-rate
// policy, applied uniformly to weights, biases and dilation factors. Uses the
// Caffe convention: the velocity absorbs the learning rate,
//   v <- momentum * v - lr * (g + wd * p);  p <- p + v.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fdconv/errors.hpp"
#include "fdconv/net.hpp"

namespace fdconv {

struct TrainConfig {
  int batch_size = 8;
  int patch_size = 40;
  double base_lr = 0.1;
  double power = 0.9;
  int max_iter = 700;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double dilation_lr_mult = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("TrainConfig: momentum must be in [0,1)");
    if (!(base_lr > 0.0)) throw ArgumentError("TrainConfig: base_lr must be positive");
    if (!(power > 0.0)) throw ArgumentError("TrainConfig: power must be positive");
    if (max_iter < 1) throw ArgumentError("TrainConfig: max_iter must be >= 1");
    if (batch_size < 1) throw ArgumentError("TrainConfig: batch_size must be >= 1");
    if (patch_size < 1) throw ArgumentError("TrainConfig: patch_size must be >= 1");
    if (weight_decay < 0.0) throw ArgumentError("TrainConfig: weight_decay must be >= 0");
    if (dilation_lr_mult < 0.0) throw ArgumentError("TrainConfig: dilation_lr_mult must be >= 0");
  }
};

/// base_lr * (1 - iter/max_iter)^power.
inline double poly_lr(int iter, const TrainConfig& cfg) {
  if (iter < 0 || iter > cfg.max_iter)
    throw ArgumentError("poly_lr: iter " + std::to_string(iter) + " outside [0, max_iter]");
  return cfg.base_lr * std::pow(1.0 - static_cast<double>(iter) / cfg.max_iter, cfg.power);
}

/// One velocity buffer per parameter tensor, zero-initialized.
struct MomentumState {
  std::vector<std::vector<double>> vel_weights;
  std::vector<std::vector<double>> vel_bias;
  std::vector<std::vector<double>> vel_dilation;

  static MomentumState zeros_like(const Net& net) {
    MomentumState st;
    for (std::size_t li = 0; li < net.layer_count(); ++li) {
      const auto& s = net.layer(li).state;
      st.vel_weights.emplace_back(s.weights.size(), 0.0);
      st.vel_bias.emplace_back(s.bias.size(), 0.0);
      st.vel_dilation.emplace_back(s.dilation.d.size(), 0.0);
    }
    return st;
  }
};

namespace detail {
inline void sgd_update(std::span<double> p, std::span<const double> g, std::span<double> v,
                       double lr, double momentum, double wd) {
  if (p.size() != g.size() || p.size() != v.size())
    throw ShapeError("sgd_update: parameter/gradient/velocity sizes disagree");
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = momentum * v[i] - lr * (g[i] + wd * p[i]);
    p[i] += v[i];
  }
}
}  // namespace detail

/// Applies one SGD step to every parameter of the net. Weight decay acts on
/// conv weights only; biases and dilation factors are exempt. Dilation
/// factors use lr * dilation_lr_mult, update only on learnable layers, and
/// are clamped back into their range afterwards.
inline void sgd_step(Net& net, const NetGradients& grads, MomentumState& st, double lr,
                     const TrainConfig& cfg) {
  if (grads.layers.size() != net.layer_count())
    throw ShapeError("sgd_step: gradient layer count does not match net");
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    auto& layer = net.layer(li);
    const auto& g = grads.layers[li];
    detail::sgd_update({layer.state.weights.data(), layer.state.weights.size()},
                       {g.d_weights.data(), g.d_weights.size()}, st.vel_weights[li], lr,
                       cfg.momentum, cfg.weight_decay);
    detail::sgd_update(layer.state.bias, g.d_bias, st.vel_bias[li], lr, cfg.momentum, 0.0);
    if (layer.learnable_dilation) {
      detail::sgd_update(layer.state.dilation.d, g.d_dilation, st.vel_dilation[li],
                         lr * cfg.dilation_lr_mult, cfg.momentum, 0.0);
      layer.state.dilation = project_dilations(layer.state.dilation);
    }
  }
  net.bump_version();
}

}  // namespace fdconv

// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0
//
// A small fully-convolutional segmentation head: standard and fractional
// dilated conv layers with ReLU, closed by a 1x1 conv to class logits and a
// per-pixel softmax cross-entropy loss.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fdconv/conv.hpp"
#include "fdconv/errors.hpp"
#include "fdconv/rng.hpp"
#include "fdconv/tensor.hpp"

namespace fdconv {

/// How a conv layer's dilation vector is created and treated during training.
struct DilationMode {
  enum class Kind { Fixed, Learnable };
  Kind kind = Kind::Fixed;
  double fixed_value = 1.0;                 // Fixed
  DilationInit init = DilationInit::constant(2.0);  // Learnable
  double lo = 1.0;
  double hi = 4.0;

  static DilationMode fixed(double d) {
    DilationMode m;
    m.kind = Kind::Fixed;
    m.fixed_value = d;
    m.lo = m.hi = d;
    return m;
  }
  static DilationMode learnable(DilationInit init, double lo, double hi) {
    DilationMode m;
    m.kind = Kind::Learnable;
    m.init = init;
    m.lo = lo;
    m.hi = hi;
    return m;
  }
};

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  bool relu_after = true;
  bool dilated_role = false;  // traced/exported as a dilated-head layer
  DilationMode dilation;
};

struct NetSpec {
  std::vector<ConvSpec> layers;
  int num_classes = 0;

  void validate() const {
    if (layers.empty()) throw ArgumentError("NetSpec: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.in_channels < 1 || l.out_channels < 1) throw ArgumentError("NetSpec: channels must be >= 1");
      if (l.kernel < 1 || l.kernel % 2 == 0) throw ArgumentError("NetSpec: kernel must be odd and >= 1");
      if (i > 0 && layers[i - 1].out_channels != l.in_channels)
        throw ArgumentError("NetSpec: layer " + std::to_string(i) + " expects " +
                            std::to_string(l.in_channels) + " input channels but previous layer emits " +
                            std::to_string(layers[i - 1].out_channels));
    }
    if (layers.back().out_channels != num_classes)
      throw ArgumentError("NetSpec: final layer must emit num_classes channels");
    if (layers.back().relu_after) throw ArgumentError("NetSpec: logits layer must not be followed by ReLU");
  }

  int dilated_layer_count() const {
    int n = 0;
    for (const auto& l : layers) n += l.dilated_role ? 1 : 0;
    return n;
  }

  /// Toy analogue of a dilated segmentation head: 3x3 conv stem, two dilated
  /// 3x3 convs whose per-channel dilation may be learned, 1x1 classifier.
  static NetSpec mini_largefov(int in_channels, int channels, int num_classes,
                               const std::vector<DilationMode>& dilated_modes) {
    if (dilated_modes.size() != 2)
      throw ArgumentError("mini_largefov: expects one DilationMode per dilated layer (2)");
    NetSpec s;
    s.num_classes = num_classes;
    s.layers.push_back({in_channels, channels, 3, true, false, DilationMode::fixed(1.0)});
    s.layers.push_back({channels, channels, 3, true, true, dilated_modes[0]});
    s.layers.push_back({channels, channels, 3, true, true, dilated_modes[1]});
    s.layers.push_back({channels, num_classes, 1, false, false, DilationMode::fixed(1.0)});
    return s;
  }
};

struct NetLayer {
  ConvLayerState state;
  bool relu_after = false;
  bool dilated_role = false;
  bool learnable_dilation = false;
};

/// Forward activations kept for the matching backward call. Stamped with the
/// parameter version so a stale cache is rejected.
struct NetCache {
  std::vector<Tensor4> inputs;   // input to each conv layer
  std::vector<Tensor4> preact;   // pre-activation output of each conv layer
  std::uint64_t version = 0;
  bool valid = false;
};

struct NetGradients {
  std::vector<LayerGradients> layers;
};

/// Single-writer network: forward/backward/update must be externally
/// serialized; distinct instances are independent.
class Net {
 public:
  static Net build(const NetSpec& spec, std::uint64_t seed) {
    spec.validate();
    Net net;
    net.spec_ = spec;
    SplitMix64 g(seed);
    for (const auto& ls : spec.layers) {
      NetLayer layer;
      // He-style uniform fan-in init: U(-s, s) with s = sqrt(6 / fan_in).
      const double fan_in = static_cast<double>(ls.in_channels) * ls.kernel * ls.kernel;
      const double s = std::sqrt(6.0 / fan_in);
      layer.state.weights = Tensor4(Shape4{ls.out_channels, ls.in_channels, ls.kernel, ls.kernel});
      for (std::size_t i = 0; i < layer.state.weights.size(); ++i)
        layer.state.weights.data()[i] = g.uniform(-s, s);
      layer.state.bias.assign(ls.out_channels, 0.0);
      if (ls.dilation.kind == DilationMode::Kind::Fixed) {
        layer.state.dilation = DilationVector{std::vector<double>(ls.in_channels, ls.dilation.fixed_value),
                                              ls.dilation.lo, ls.dilation.hi};
        layer.learnable_dilation = false;
      } else {
        DilationInit init = ls.dilation.init;
        if (init.mode == DilationInit::Mode::Uniform) init.seed = g.next();
        layer.state.dilation = init_dilations(init, ls.dilation.lo, ls.dilation.hi, ls.in_channels);
        layer.learnable_dilation = true;
      }
      layer.relu_after = ls.relu_after;
      layer.dilated_role = ls.dilated_role;
      layer.state.validate();
      net.layers_.push_back(std::move(layer));
    }
    return net;
  }

  const NetSpec& spec() const { return spec_; }
  std::size_t layer_count() const { return layers_.size(); }
  NetLayer& layer(std::size_t i) { return layers_.at(i); }
  const NetLayer& layer(std::size_t i) const { return layers_.at(i); }

  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  Tensor4 forward(const Tensor4& x, NetCache& cache) const {
    if (x.c() != spec_.layers.front().in_channels)
      throw ShapeError("Net::forward: input has " + std::to_string(x.c()) +
                       " channels, spec expects " + std::to_string(spec_.layers.front().in_channels));
    cache.inputs.clear();
    cache.preact.clear();
    Tensor4 cur = x;
    for (const auto& layer : layers_) {
      cache.inputs.push_back(cur);
      Tensor4 pre = fdconv::forward(cur, layer.state);
      cache.preact.push_back(pre);
      if (layer.relu_after)
        for (std::size_t i = 0; i < pre.size(); ++i)
          if (pre.data()[i] < 0.0) pre.data()[i] = 0.0;
      cur = std::move(pre);
    }
    cache.version = version_;
    cache.valid = true;
    return cur;
  }

  /// Inference-only forward (no cache retained).
  Tensor4 forward(const Tensor4& x) const {
    NetCache scratch;
    return forward(x, scratch);
  }

  /// Gradients for every parameter, chaining grad_logits back through ReLU
  /// gates (gradient 0 at and below zero pre-activation).
  NetGradients backward(const NetCache& cache, const Tensor4& grad_logits) const {
    if (!cache.valid || cache.inputs.size() != layers_.size())
      throw StateError("Net::backward: missing forward cache");
    if (cache.version != version_)
      throw StateError("Net::backward: cache is stale (parameters changed since forward)");
    NetGradients grads;
    grads.layers.resize(layers_.size());
    Tensor4 g = grad_logits;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& layer = layers_[li];
      if (layer.relu_after) {
        const Tensor4& pre = cache.preact[li];
        if (pre.shape() != g.shape()) throw ShapeError("Net::backward: gradient/preact shape mismatch");
        for (std::size_t i = 0; i < g.size(); ++i)
          if (pre.data()[i] <= 0.0) g.data()[i] = 0.0;
      }
      grads.layers[li] = fdconv::backward(cache.inputs[li], layer.state, g);
      g = grads.layers[li].d_input;
    }
    return grads;
  }

 private:
  NetSpec spec_;
  std::vector<NetLayer> layers_;
  std::uint64_t version_ = 0;
};

/// Mean per-pixel cross-entropy over non-ignored pixels plus its logits
/// gradient, already normalized by the valid pixel count.
struct LossOutput {
  double loss = 0.0;
  Tensor4 grad_logits;
  std::int64_t valid_count = 0;
  bool all_ignored = false;
};

inline LossOutput softmax_xent(const Tensor4& logits, const LabelMap& labels, int ignore_label = 255) {
  const int N = logits.n(), K = logits.c(), H = logits.h(), W = logits.w();
  if (labels.n != N || labels.h != H || labels.w != W)
    throw ShapeError("softmax_xent: labels shape does not match logits");
  LossOutput out;
  out.grad_logits = Tensor4(logits.shape());

  std::int64_t valid = 0;
  for (const std::uint8_t l : labels.v) {
    if (l == ignore_label) continue;
    if (l >= K) throw ArgumentError("softmax_xent: label " + std::to_string(l) + " >= num_classes");
    ++valid;
  }
  out.valid_count = valid;
  if (valid == 0) {
    out.all_ignored = true;
    return out;  // defined: loss 0, zero gradient
  }

  const double inv_valid = 1.0 / static_cast<double>(valid);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  double loss_sum = 0.0;
  std::vector<double> p(K);
  for (int b = 0; b < N; ++b) {
    const double* base = logits.plane(b, 0);
    double* gbase = out.grad_logits.plane(b, 0);
    for (int y = 0; y < H; ++y) {
      const std::uint8_t* lrow = labels.row(b, y);
      for (int x = 0; x < W; ++x) {
        const std::uint8_t lab = lrow[x];
        if (lab == ignore_label) continue;
        const std::size_t off = static_cast<std::size_t>(y) * W + x;
        double mx = base[off];
        for (int k = 1; k < K; ++k) mx = std::max(mx, base[off + k * plane]);
        double z = 0.0;
        for (int k = 0; k < K; ++k) {
          p[k] = std::exp(base[off + k * plane] - mx);
          z += p[k];
        }
        const double inv_z = 1.0 / z;
        for (int k = 0; k < K; ++k) {
          const double prob = p[k] * inv_z;
          gbase[off + k * plane] = (prob - (k == lab ? 1.0 : 0.0)) * inv_valid;
        }
        loss_sum += -(std::log(p[lab] * inv_z));
      }
    }
  }
  out.loss = loss_sum * inv_valid;
  return out;
}

}  // namespace fdconv

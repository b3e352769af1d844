// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0

#include "fdconv/net.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "fdconv/gradcheck.hpp"
#include "fdconv/optim.hpp"

using namespace fdconv;

namespace {

NetSpec default_spec(int channels = 16, int num_classes = 5) {
  const auto mode = DilationMode::learnable(DilationInit::constant(2.0), 1.0, 4.0);
  return NetSpec::mini_largefov(3, channels, num_classes, {mode, mode});
}

}  // namespace

TEST(NetSpec, MiniLargefovShape) {
  const NetSpec spec = default_spec();
  EXPECT_NO_THROW(spec.validate());
  ASSERT_EQ(spec.layers.size(), 4u);
  EXPECT_EQ(spec.dilated_layer_count(), 2);
  // Dilation parameter count: 2 learnable layers x 16 input channels.
  const Net net = Net::build(spec, 1);
  int dil_params = 0;
  for (std::size_t li = 0; li < net.layer_count(); ++li)
    if (net.layer(li).learnable_dilation) dil_params += net.layer(li).state.dilation.channels();
  EXPECT_EQ(dil_params, 32);
}

TEST(NetSpec, MismatchedChannelsRejected) {
  NetSpec spec = default_spec();
  spec.layers[1].in_channels = 8;
  EXPECT_THROW(spec.validate(), ArgumentError);
  NetSpec spec2 = default_spec();
  spec2.num_classes = 7;  // final layer still emits 5
  EXPECT_THROW(spec2.validate(), ArgumentError);
}

TEST(Net, BuildIsDeterministic) {
  const Net a = Net::build(default_spec(8, 3), 42);
  const Net b = Net::build(default_spec(8, 3), 42);
  for (std::size_t li = 0; li < a.layer_count(); ++li) {
    const auto& wa = a.layer(li).state.weights;
    const auto& wb = b.layer(li).state.weights;
    for (std::size_t i = 0; i < wa.size(); ++i) EXPECT_EQ(wa.data()[i], wb.data()[i]);
    EXPECT_EQ(a.layer(li).state.dilation.d, b.layer(li).state.dilation.d);
  }
}

TEST(Net, UniformDilationInitStaysInRange) {
  const auto mode = DilationMode::learnable(DilationInit::uniform(0), 1.0, 4.0);
  const Net net = Net::build(NetSpec::mini_largefov(3, 8, 3, {mode, mode}), 9);
  bool any_off_center = false;
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    if (!net.layer(li).learnable_dilation) continue;
    for (double d : net.layer(li).state.dilation.d) {
      EXPECT_GE(d, 1.0);
      EXPECT_LE(d, 4.0);
      any_off_center = any_off_center || std::fabs(d - 2.0) > 1e-9;
    }
  }
  EXPECT_TRUE(any_off_center);
}

TEST(Net, ZeroNetworkEmitsFinalBias) {
  Net net = Net::build(default_spec(6, 4), 3);
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    auto& w = net.layer(li).state.weights;
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = 0.0;
  }
  net.layer(net.layer_count() - 1).state.bias = {0.5, -0.25, 0.0, 2.0};
  const Tensor4 x = Tensor4::fill_random(Shape4{1, 3, 9, 9}, 4, 0.0, 1.0);
  const Tensor4 logits = net.forward(x);
  for (int k = 0; k < 4; ++k)
    for (int y = 0; y < 9; ++y)
      for (int xx = 0; xx < 9; ++xx)
        EXPECT_EQ(logits.get(0, k, y, xx), net.layer(3).state.bias[k]);
}

TEST(Net, SpatialSizePreservedAndDeterministic) {
  const Net net = Net::build(default_spec(8, 5), 17);
  for (int hw : {9, 12, 16}) {
    const Tensor4 x = Tensor4::fill_random(Shape4{2, 3, hw, hw}, 5, 0.0, 1.0);
    const Tensor4 a = net.forward(x);
    EXPECT_EQ(a.shape(), (Shape4{2, 5, hw, hw}));
    const Tensor4 b = net.forward(x);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
  }
}

TEST(Net, InputChannelMismatchThrows) {
  const Net net = Net::build(default_spec(8, 5), 17);
  const Tensor4 x = Tensor4::fill_random(Shape4{1, 4, 9, 9}, 5, 0.0, 1.0);
  EXPECT_THROW(net.forward(x), ShapeError);
}

TEST(SoftmaxXent, TwoClassZeroLogitsGiveLn2) {
  Tensor4 logits(Shape4{1, 2, 2, 2});
  LabelMap labels(1, 2, 2, 0);
  const LossOutput out = softmax_xent(logits, labels);
  EXPECT_NEAR(out.loss, 0.693147180559945309, 1e-12);
  EXPECT_EQ(out.valid_count, 4);
}

TEST(SoftmaxXent, UniformLogitsGiveLnK) {
  for (int k : {3, 5, 7}) {
    Tensor4 logits(Shape4{1, k, 3, 3});
    for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = 1.7;  // equal per class
    LabelMap labels(1, 3, 3, 1);
    const LossOutput out = softmax_xent(logits, labels);
    EXPECT_NEAR(out.loss, std::log(static_cast<double>(k)), 1e-12);
  }
}

TEST(SoftmaxXent, IgnoredPixelsContributeNothing) {
  Tensor4 logits = Tensor4::fill_random(Shape4{1, 3, 2, 2}, 7, -2.0, 2.0);
  LabelMap labels(1, 2, 2, 0);
  labels.set(0, 0, 1, 255);
  const LossOutput out = softmax_xent(logits, labels);
  EXPECT_EQ(out.valid_count, 3);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(out.grad_logits.get(0, k, 0, 1), 0.0);

  LabelMap all_ignored(1, 2, 2, 255);
  const LossOutput none = softmax_xent(logits, all_ignored);
  EXPECT_TRUE(none.all_ignored);
  EXPECT_EQ(none.loss, 0.0);
  for (std::size_t i = 0; i < none.grad_logits.size(); ++i) EXPECT_EQ(none.grad_logits.data()[i], 0.0);
}

TEST(SoftmaxXent, SoftmaxRowsSumToOne) {
  // Recover probabilities from the gradient: prob = grad*valid + onehot.
  const Tensor4 logits = Tensor4::fill_random(Shape4{2, 4, 3, 3}, 19, -3.0, 3.0);
  LabelMap labels(2, 3, 3, 2);
  const LossOutput out = softmax_xent(logits, labels);
  const double valid = static_cast<double>(out.valid_count);
  for (int b = 0; b < 2; ++b)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        double sum = 0.0;
        for (int k = 0; k < 4; ++k)
          sum += out.grad_logits.get(b, k, y, x) * valid + (k == 2 ? 1.0 : 0.0);
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
}

TEST(SoftmaxXent, BadLabelThrows) {
  Tensor4 logits(Shape4{1, 3, 1, 1});
  LabelMap labels(1, 1, 1, 3);
  EXPECT_THROW(softmax_xent(logits, labels), ArgumentError);
}

TEST(NetBackward, StaleCacheRejected) {
  Net net = Net::build(default_spec(6, 3), 23);
  const Tensor4 x = Tensor4::fill_random(Shape4{1, 3, 9, 9}, 5, 0.0, 1.0);
  NetCache cache;
  const Tensor4 logits = net.forward(x, cache);
  Tensor4 g(logits.shape());

  NetCache missing;
  EXPECT_THROW(net.backward(missing, g), StateError);

  MomentumState st = MomentumState::zeros_like(net);
  TrainConfig cfg;
  NetGradients grads = net.backward(cache, g);  // valid before the step
  sgd_step(net, grads, st, 0.01, cfg);
  EXPECT_THROW(net.backward(cache, g), StateError);
}

TEST(NetBackward, ZeroGradGivesZeroAndScalesLinearly) {
  Net net = Net::build(default_spec(6, 3), 29);
  const Tensor4 x = Tensor4::fill_random(Shape4{1, 3, 9, 9}, 31, 0.0, 1.0);
  NetCache cache;
  const Tensor4 logits = net.forward(x, cache);

  Tensor4 zero(logits.shape());
  const NetGradients gz = net.backward(cache, zero);
  for (const auto& lg : gz.layers) {
    for (std::size_t i = 0; i < lg.d_weights.size(); ++i) EXPECT_EQ(lg.d_weights.data()[i], 0.0);
    for (double v : lg.d_bias) EXPECT_EQ(v, 0.0);
    for (double v : lg.d_dilation) EXPECT_EQ(v, 0.0);
  }

  const Tensor4 g1 = Tensor4::fill_random(logits.shape(), 33, -1.0, 1.0);
  Tensor4 g2(logits.shape());
  for (std::size_t i = 0; i < g2.size(); ++i) g2.data()[i] = 2.0 * g1.data()[i];
  const NetGradients a = net.backward(cache, g1);
  const NetGradients b = net.backward(cache, g2);
  for (std::size_t li = 0; li < a.layers.size(); ++li) {
    for (std::size_t i = 0; i < a.layers[li].d_weights.size(); ++i)
      EXPECT_NEAR(b.layers[li].d_weights.data()[i], 2.0 * a.layers[li].d_weights.data()[i], 1e-12);
    for (std::size_t i = 0; i < a.layers[li].d_dilation.size(); ++i)
      EXPECT_NEAR(b.layers[li].d_dilation[i], 2.0 * a.layers[li].d_dilation[i], 1e-12);
  }
}

TEST(NetBackward, WholeNetFiniteDifferenceCheck) {
  // Two conv layers (one learnable-dilated), 8x8 input, scalar loss =
  // softmax cross-entropy; every parameter gradient against central
  // differences at rel. tol 1e-5.
  NetSpec spec;
  spec.num_classes = 3;
  spec.layers.push_back({2, 4, 3, true, false, DilationMode::fixed(1.0)});
  spec.layers.push_back(
      {4, 3, 3, false, true, DilationMode::learnable(DilationInit::constant(2.0), 1.0, 4.0)});
  // Move dilations off the constant init so the check probes generic values
  // away from the integer lattice.
  Net net = Net::build(spec, 37);
  auto& dil = net.layer(1).state.dilation.d;
  dil = {1.35, 2.45, 1.85, 3.15};

  const Tensor4 x = Tensor4::fill_random(Shape4{1, 2, 8, 8}, 39, 0.0, 1.0);
  LabelMap labels(1, 8, 8, 0);
  SplitMix64 lg(41);
  for (auto& v : labels.v) v = static_cast<std::uint8_t>(lg.uniform_int(3));

  const auto loss_of_net = [&](const Net& n) {
    NetCache c;
    const Tensor4 logits = n.forward(x, c);
    return softmax_xent(logits, labels).loss;
  };

  NetCache cache;
  const Tensor4 logits = net.forward(x, cache);
  const LossOutput lo = softmax_xent(logits, labels);
  const NetGradients grads = net.backward(cache, lo.grad_logits);

  const double step = 1e-6, tol = 1e-5, floor = 1e-8;
  auto check = [&](double analytic, double fd, const std::string& what) {
    const double err = std::fabs(analytic - fd);
    const double scale = std::max(std::fabs(analytic), std::fabs(fd));
    EXPECT_TRUE(err <= tol * scale || err <= floor)
        << what << ": analytic " << analytic << " vs fd " << fd;
  };

  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    auto& state = net.layer(li).state;
    for (std::size_t i = 0; i < state.weights.size(); i += 7) {  // sampled coordinates
      const double orig = state.weights.data()[i];
      state.weights.data()[i] = orig + step;
      const double fp = loss_of_net(net);
      state.weights.data()[i] = orig - step;
      const double fm = loss_of_net(net);
      state.weights.data()[i] = orig;
      check(grads.layers[li].d_weights.data()[i], (fp - fm) / (2 * step),
            "w[" + std::to_string(li) + "][" + std::to_string(i) + "]");
    }
    for (std::size_t i = 0; i < state.bias.size(); ++i) {
      const double orig = state.bias[i];
      state.bias[i] = orig + step;
      const double fp = loss_of_net(net);
      state.bias[i] = orig - step;
      const double fm = loss_of_net(net);
      state.bias[i] = orig;
      check(grads.layers[li].d_bias[i], (fp - fm) / (2 * step), "b");
    }
    if (net.layer(li).learnable_dilation) {
      for (std::size_t i = 0; i < state.dilation.d.size(); ++i) {
        const double orig = state.dilation.d[i];
        state.dilation.d[i] = orig + step;
        const double fp = loss_of_net(net);
        state.dilation.d[i] = orig - step;
        const double fm = loss_of_net(net);
        state.dilation.d[i] = orig;
        check(grads.layers[li].d_dilation[i], (fp - fm) / (2 * step), "d");
      }
    }
  }
}

TEST(NetBackward, ReluGateZeroesNegativePreactivations) {
  NetSpec spec;
  spec.num_classes = 2;
  spec.layers.push_back({1, 1, 1, true, false, DilationMode::fixed(1.0)});
  spec.layers.push_back({1, 2, 1, false, false, DilationMode::fixed(1.0)});
  Net net = Net::build(spec, 1);
  net.layer(0).state.weights.set(0, 0, 0, 0, 1.0);
  net.layer(0).state.bias = {0.0};
  net.layer(1).state.weights.set(0, 0, 0, 0, 1.0);
  net.layer(1).state.weights.set(1, 0, 0, 0, -0.5);
  net.layer(1).state.bias = {0.0, 0.0};

  Tensor4 x(Shape4{1, 1, 1, 2});
  x.set(0, 0, 0, 0, -2.0);  // preact <= 0: gate closes
  x.set(0, 0, 0, 1, 3.0);
  NetCache cache;
  net.forward(x, cache);
  Tensor4 g(Shape4{1, 2, 1, 2});
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = 1.0;
  const NetGradients grads = net.backward(cache, g);
  EXPECT_EQ(grads.layers[0].d_input.get(0, 0, 0, 0), 0.0);
  EXPECT_NE(grads.layers[0].d_input.get(0, 0, 0, 1), 0.0);
}

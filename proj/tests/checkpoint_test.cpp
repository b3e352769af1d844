// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0

#include "fdconv/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace fdconv;
namespace fs = std::filesystem;

namespace {

Net small_net(std::uint64_t seed = 5) {
  const auto mode = DilationMode::learnable(DilationInit::constant(2.0), 1.0, 4.0);
  return Net::build(NetSpec::mini_largefov(3, 4, 3, {mode, mode}), seed);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  Net net = small_net();
  MomentumState st = MomentumState::zeros_like(net);
  st.vel_weights[0][0] = -0.125;  // non-trivial optimizer state
  const Checkpoint ck = make_checkpoint(net, st, 137, 0xDEADBEEFull);

  const fs::path a = fs::temp_directory_path() / "fdconv_ck_a.fdckpt";
  const fs::path b = fs::temp_directory_path() / "fdconv_ck_b.fdckpt";
  save_checkpoint(a, ck);
  const Checkpoint loaded = load_checkpoint(a);
  save_checkpoint(b, loaded);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(loaded.iteration, 137u);
  EXPECT_EQ(loaded.rng_state, 0xDEADBEEFull);
  fs::remove(a);
  fs::remove(b);
}

TEST(Checkpoint, RestoreReproducesParameters) {
  Net net = small_net(5);
  MomentumState st = MomentumState::zeros_like(net);
  st.vel_bias[1][0] = 0.5;
  net.layer(1).state.dilation.d[0] = 3.21;
  const Checkpoint ck = make_checkpoint(net, st, 9, 42);

  Net other = small_net(99);  // same structure, different values
  MomentumState st2 = MomentumState::zeros_like(other);
  restore_checkpoint(ck, other, st2);
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    const auto& a = net.layer(li).state;
    const auto& b = other.layer(li).state;
    for (std::size_t i = 0; i < a.weights.size(); ++i)
      EXPECT_EQ(a.weights.data()[i], b.weights.data()[i]);
    EXPECT_EQ(a.bias, b.bias);
    EXPECT_EQ(a.dilation.d, b.dilation.d);
  }
  EXPECT_EQ(st2.vel_bias[1][0], 0.5);
}

TEST(Checkpoint, MismatchedSpecFailsLoudly) {
  Net net = small_net();
  MomentumState st = MomentumState::zeros_like(net);
  const Checkpoint ck = make_checkpoint(net, st, 0, 0);

  const auto mode = DilationMode::learnable(DilationInit::constant(2.0), 1.0, 4.0);
  Net bigger = Net::build(NetSpec::mini_largefov(3, 8, 3, {mode, mode}), 5);
  MomentumState st2 = MomentumState::zeros_like(bigger);
  EXPECT_THROW(restore_checkpoint(ck, bigger, st2), StateError);
}

TEST(Checkpoint, BadMagicAndTruncationRejected) {
  const fs::path p = fs::temp_directory_path() / "fdconv_ck_bad.fdckpt";
  {
    std::ofstream f(p, std::ios::binary);
    f << "NOTCKPT and some trailing bytes";
  }
  EXPECT_THROW(load_checkpoint(p), IoError);

  Net net = small_net();
  MomentumState st = MomentumState::zeros_like(net);
  save_checkpoint(p, make_checkpoint(net, st, 1, 2));
  const auto full = slurp(p);
  {
    std::ofstream f(p, std::ios::binary);
    f.write(full.data(), static_cast<std::streamsize>(full.size() / 2));
  }
  EXPECT_THROW(load_checkpoint(p), IoError);
  fs::remove(p);
}

TEST(Checkpoint, SpecEchoIsCanonical) {
  const Net a = small_net(1);
  const Net b = small_net(2);  // different weights, same structure
  EXPECT_EQ(spec_echo_json(a.spec()), spec_echo_json(b.spec()));
  const auto mode = DilationMode::learnable(DilationInit::constant(2.0), 1.0, 4.0);
  const Net c = Net::build(NetSpec::mini_largefov(3, 4, 4, {mode, mode}), 1);
  EXPECT_NE(spec_echo_json(a.spec()), spec_echo_json(c.spec()));
}

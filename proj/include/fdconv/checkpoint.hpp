// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0
//
// FDCKPT1 checkpoint format: magic "FDCKPT1", one version byte, a
// length-prefixed canonical net-spec echo, iteration counter and RNG state,
// then length-prefixed named tensors as little-endian float64. Save -> load
// -> save is byte-identical; loading onto a mismatched spec fails loudly.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdconv/errors.hpp"
#include "fdconv/net.hpp"
#include "fdconv/optim.hpp"

namespace fdconv {

static_assert(std::endian::native == std::endian::little,
              "FDCKPT1 serialization assumes a little-endian host");

struct NamedTensor {
  std::string name;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint8_t version = 1;
  std::string spec_echo;
  std::uint64_t iteration = 0;
  std::uint64_t rng_state = 0;
  std::vector<NamedTensor> tensors;

  const NamedTensor& find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw StateError("Checkpoint: missing tensor '" + name + "'");
  }
};

/// Canonical JSON echo of the network structure; nlohmann orders keys, so the
/// string is deterministic for a given spec.
inline std::string spec_echo_json(const NetSpec& spec) {
  nlohmann::json j;
  j["num_classes"] = spec.num_classes;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    nlohmann::json lj;
    lj["in_channels"] = l.in_channels;
    lj["out_channels"] = l.out_channels;
    lj["kernel"] = l.kernel;
    lj["relu_after"] = l.relu_after;
    lj["dilated_role"] = l.dilated_role;
    lj["learnable"] = l.dilation.kind == DilationMode::Kind::Learnable;
    lj["range"] = {l.dilation.lo, l.dilation.hi};
    layers.push_back(lj);
  }
  j["layers"] = layers;
  return j.dump();
}

namespace detail {

inline void write_u32(std::ostream& s, std::uint32_t v) {
  s.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u64(std::ostream& s, std::uint64_t v) {
  s.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint32_t read_u32(std::istream& s, const std::string& what) {
  std::uint32_t v = 0;
  s.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!s) throw IoError("checkpoint: truncated while reading " + what);
  return v;
}
inline std::uint64_t read_u64(std::istream& s, const std::string& what) {
  std::uint64_t v = 0;
  s.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!s) throw IoError("checkpoint: truncated while reading " + what);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_checkpoint: cannot open " + path.string());
  f.write("FDCKPT1", 7);
  f.put(static_cast<char>(ck.version));
  detail::write_u32(f, static_cast<std::uint32_t>(ck.spec_echo.size()));
  f.write(ck.spec_echo.data(), static_cast<std::streamsize>(ck.spec_echo.size()));
  detail::write_u64(f, ck.iteration);
  detail::write_u64(f, ck.rng_state);
  detail::write_u32(f, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    detail::write_u32(f, static_cast<std::uint32_t>(t.name.size()));
    f.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::write_u64(f, t.values.size());
    f.write(reinterpret_cast<const char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!f) throw IoError("save_checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open " + path.string());
  char magic[7] = {};
  f.read(magic, 7);
  if (!f || std::memcmp(magic, "FDCKPT1", 7) != 0)
    throw IoError("load_checkpoint: bad magic in " + path.string());
  Checkpoint ck;
  ck.version = static_cast<std::uint8_t>(f.get());
  if (ck.version != 1) throw IoError("load_checkpoint: unsupported version in " + path.string());
  const std::uint32_t echo_len = detail::read_u32(f, "spec echo length");
  ck.spec_echo.resize(echo_len);
  f.read(ck.spec_echo.data(), echo_len);
  if (!f) throw IoError("load_checkpoint: truncated spec echo in " + path.string());
  ck.iteration = detail::read_u64(f, "iteration");
  ck.rng_state = detail::read_u64(f, "rng state");
  const std::uint32_t count = detail::read_u32(f, "tensor count");
  ck.tensors.resize(count);
  for (auto& t : ck.tensors) {
    const std::uint32_t name_len = detail::read_u32(f, "tensor name length");
    t.name.resize(name_len);
    f.read(t.name.data(), name_len);
    const std::uint64_t n = detail::read_u64(f, "tensor size");
    t.values.resize(n);
    f.read(reinterpret_cast<char*>(t.values.data()),
           static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw IoError("load_checkpoint: truncated tensor data in " + path.string());
  }
  return ck;
}

/// Snapshot of net parameters + optimizer state at a training iteration.
inline Checkpoint make_checkpoint(const Net& net, const MomentumState& st, std::uint64_t iteration,
                                  std::uint64_t rng_state) {
  Checkpoint ck;
  ck.spec_echo = spec_echo_json(net.spec());
  ck.iteration = iteration;
  ck.rng_state = rng_state;
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    const auto& s = net.layer(li).state;
    const std::string base = "layer" + std::to_string(li);
    ck.tensors.push_back({base + ".weights",
                          {s.weights.data(), s.weights.data() + s.weights.size()}});
    ck.tensors.push_back({base + ".bias", s.bias});
    ck.tensors.push_back({base + ".dilation", s.dilation.d});
    ck.tensors.push_back({base + ".vel_weights", st.vel_weights[li]});
    ck.tensors.push_back({base + ".vel_bias", st.vel_bias[li]});
    ck.tensors.push_back({base + ".vel_dilation", st.vel_dilation[li]});
  }
  return ck;
}

/// Restores parameters and optimizer state. Throws StateError when the
/// checkpoint was written for a different network structure.
inline void restore_checkpoint(const Checkpoint& ck, Net& net, MomentumState& st) {
  const std::string expect = spec_echo_json(net.spec());
  if (ck.spec_echo != expect)
    throw StateError("restore_checkpoint: checkpoint spec does not match target network:\n  have " +
                     ck.spec_echo + "\n  want " + expect);
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    auto& s = net.layer(li).state;
    const std::string base = "layer" + std::to_string(li);
    const auto& w = ck.find(base + ".weights");
    if (w.values.size() != s.weights.size()) throw StateError("restore_checkpoint: weights size mismatch");
    std::copy(w.values.begin(), w.values.end(), s.weights.data());
    const auto& b = ck.find(base + ".bias");
    if (b.values.size() != s.bias.size()) throw StateError("restore_checkpoint: bias size mismatch");
    s.bias = b.values;
    const auto& d = ck.find(base + ".dilation");
    if (d.values.size() != s.dilation.d.size())
      throw StateError("restore_checkpoint: dilation size mismatch");
    s.dilation.d = d.values;
    st.vel_weights[li] = ck.find(base + ".vel_weights").values;
    st.vel_bias[li] = ck.find(base + ".vel_bias").values;
    st.vel_dilation[li] = ck.find(base + ".vel_dilation").values;
  }
  net.bump_version();
}

}  // namespace fdconv

// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic generator of multi-scale synthetic segmentation scenes.
// Two designated "scale-twin" classes render with identical color and texture
// statistics and differ only in object extent, so telling them apart requires
// context at the right scale; the remaining classes are locally separable and
// crowd the scene. Scenes are a pure function of (spec, index).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "fdconv/errors.hpp"
#include "fdconv/rng.hpp"
#include "fdconv/tensor.hpp"

namespace fdconv {

struct SceneClass {
  double s_min = 0.0;        // object size range in pixels
  double s_max = 0.0;
  double tex_freq = 0.0;     // texture frequency, cycles/pixel
  double tex_amp = 0.0;
  std::array<double, 3> color{0.0, 0.0, 0.0};
  bool disc = false;         // disc if true, axis-aligned rectangle otherwise
};

struct SceneSpec {
  int num_classes = 5;       // class 0 = background
  int h = 64;
  int w = 64;
  std::vector<SceneClass> classes;  // size num_classes; entry 0 = background style
  int objects_min = 6;
  int objects_max = 10;
  double noise_amp = 0.05;
  std::uint64_t seed = 1;
  int twin_small = 1;        // scale-twin pair: identical texture, different extent
  int twin_large = 2;

  void validate() const {
    if (num_classes < 3) throw ArgumentError("SceneSpec: need at least 3 classes");
    if (static_cast<int>(classes.size()) != num_classes)
      throw ArgumentError("SceneSpec: classes must have one entry per class");
    if (h < 8 || w < 8) throw ArgumentError("SceneSpec: image too small");
    if (objects_min < 1 || objects_max < objects_min)
      throw ArgumentError("SceneSpec: bad objects-per-image range");
    if (twin_small < 1 || twin_small >= num_classes || twin_large < 1 || twin_large >= num_classes ||
        twin_small == twin_large)
      throw ArgumentError("SceneSpec: twin classes must be distinct foreground classes");
    const auto& a = classes[twin_small];
    const auto& b = classes[twin_large];
    if (a.tex_freq != b.tex_freq || a.tex_amp != b.tex_amp || a.color != b.color)
      throw ArgumentError("SceneSpec: twin classes must share texture and color");
    for (int c = 1; c < num_classes; ++c)
      if (!(classes[c].s_min > 0.0) || classes[c].s_max < classes[c].s_min)
        throw ArgumentError("SceneSpec: bad size range for class " + std::to_string(c));
  }

  /// Desk-scale default: 64x64, 5 classes. Classes 1/2 are the scale twins
  /// (small vs large extent of the same material); classes 3/4 are locally
  /// separable by color/texture and crowd the scene.
  static SceneSpec defaults(std::uint64_t seed = 1) {
    SceneSpec s;
    s.seed = seed;
    s.classes.resize(5);
    s.classes[0] = {0.0, 0.0, 0.0, 0.0, {0.42, 0.40, 0.38}, false};
    s.classes[1] = {7.0, 9.0, 0.42, 0.08, {0.62, 0.60, 0.58}, false};   // twin, small
    s.classes[2] = {15.0, 20.0, 0.42, 0.08, {0.62, 0.60, 0.58}, false}; // twin, large
    s.classes[3] = {5.0, 7.0, 0.18, 0.08, {0.33, 0.52, 0.62}, true};
    s.classes[4] = {11.0, 14.0, 0.27, 0.08, {0.58, 0.40, 0.54}, true};
    return s;
  }
};

/// One rendered scene: 3-channel image in [0,1] (already quantized to float32
/// precision so file round-trips are exact) and per-pixel labels.
struct LabeledScene {
  Tensor4 image;   // (1, 3, h, w)
  LabelMap labels; // (1, h, w)
};

namespace detail {

struct SceneObject {
  int cls = 0;
  double size = 0.0;
  double cy = 0.0, cx = 0.0;
  double theta = 0.0, phase = 0.0;
  int order = 0;
};

}  // namespace detail

/// Renders scene `index` of the dataset described by spec. Deterministic:
/// the RNG stream is derived from (spec.seed, index) only.
inline LabeledScene generate(const SceneSpec& spec, std::int64_t index) {
  spec.validate();
  SplitMix64 rng(SplitMix64::derive(spec.seed, static_cast<std::uint64_t>(index)));
  const int H = spec.h, W = spec.w, K = spec.num_classes;

  const int count = spec.objects_min +
                    static_cast<int>(rng.uniform_int(spec.objects_max - spec.objects_min + 1));
  std::vector<detail::SceneObject> objs(count);
  for (int i = 0; i < count; ++i) {
    auto& o = objs[i];
    o.cls = 1 + static_cast<int>(rng.uniform_int(K - 1));
    const auto& cd = spec.classes[o.cls];
    o.size = rng.uniform(cd.s_min, cd.s_max);
    const double half = o.size / 2.0;
    o.cy = rng.uniform(half, H - 1 - half);
    o.cx = rng.uniform(half, W - 1 - half);
    o.theta = rng.uniform(0.0, std::numbers::pi);
    o.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    o.order = i;
  }
  // Large objects first so small ones stay visible on top (z-order).
  std::sort(objs.begin(), objs.end(), [](const auto& a, const auto& b) {
    if (a.size != b.size) return a.size > b.size;
    return a.order < b.order;
  });

  LabeledScene scene;
  scene.image = Tensor4(Shape4{1, 3, H, W});
  scene.labels = LabelMap(1, H, W, 0);

  const auto& bg = spec.classes[0];
  for (int ch = 0; ch < 3; ++ch) {
    double* plane = scene.image.plane(0, ch);
    for (int i = 0; i < H * W; ++i) plane[i] = bg.color[ch];
  }

  for (const auto& o : objs) {
    const auto& cd = spec.classes[o.cls];
    const double half = o.size / 2.0;
    const int y0 = std::max(0, static_cast<int>(std::ceil(o.cy - half)));
    const int y1 = std::min(H - 1, static_cast<int>(std::floor(o.cy + half)));
    const int x0 = std::max(0, static_cast<int>(std::ceil(o.cx - half)));
    const int x1 = std::min(W - 1, static_cast<int>(std::floor(o.cx + half)));
    const double ct = std::cos(o.theta), st = std::sin(o.theta);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        if (cd.disc) {
          const double dy = y - o.cy, dx = x - o.cx;
          if (dy * dy + dx * dx > half * half) continue;
        }
        const double tex =
            cd.tex_amp *
            std::sin(2.0 * std::numbers::pi * cd.tex_freq * (x * ct + y * st) + o.phase);
        for (int ch = 0; ch < 3; ++ch)
          scene.image.plane(0, ch)[y * W + x] = cd.color[ch] + tex;
        scene.labels.v[static_cast<std::size_t>(y) * W + x] = static_cast<std::uint8_t>(o.cls);
      }
  }

  // Pixel noise over everything, then clamp to [0,1] and quantize to float32
  // so materialized scenes reload bit-identically.
  for (int ch = 0; ch < 3; ++ch) {
    double* plane = scene.image.plane(0, ch);
    for (int i = 0; i < H * W; ++i) {
      double v = plane[i] + rng.uniform(-spec.noise_amp, spec.noise_amp);
      v = std::clamp(v, 0.0, 1.0);
      plane[i] = static_cast<double>(static_cast<float>(v));
    }
  }
  return scene;
}

struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
};

/// Disjoint index ranges per split: train [0,T), val [T,T+V), test [T+V,...).
struct SplitIndices {
  std::vector<std::int64_t> train, val, test;
};

inline SplitIndices make_split(const SceneSpec& spec, const SplitCounts& counts) {
  spec.validate();
  if (counts.train < 1 || counts.val < 1 || counts.test < 1)
    throw ArgumentError("make_split: all split counts must be >= 1");
  SplitIndices s;
  std::int64_t next = 0;
  for (int i = 0; i < counts.train; ++i) s.train.push_back(next++);
  for (int i = 0; i < counts.val; ++i) s.val.push_back(next++);
  for (int i = 0; i < counts.test; ++i) s.test.push_back(next++);
  return s;
}

/// Deterministic crop/flip core: copies the patch at (oy, ox), mirroring
/// columns when flip is set. Labels and image move together.
inline LabeledScene augment_at(const LabeledScene& scene, int patch, int oy, int ox, bool flip) {
  const int H = scene.image.h(), W = scene.image.w();
  if (patch < 1 || patch > H || patch > W)
    throw ArgumentError("augment: patch must be in [1, min(h, w)]");
  if (oy < 0 || ox < 0 || oy + patch > H || ox + patch > W)
    throw ArgumentError("augment: crop offset out of range");
  LabeledScene out;
  out.image = Tensor4(Shape4{1, 3, patch, patch});
  out.labels = LabelMap(1, patch, patch, 0);
  for (int ch = 0; ch < 3; ++ch) {
    const double* src = scene.image.plane(0, ch);
    double* dst = out.image.plane(0, ch);
    for (int y = 0; y < patch; ++y)
      for (int x = 0; x < patch; ++x) {
        const int sx = flip ? ox + patch - 1 - x : ox + x;
        dst[y * patch + x] = src[(oy + y) * W + sx];
      }
  }
  for (int y = 0; y < patch; ++y)
    for (int x = 0; x < patch; ++x) {
      const int sx = flip ? ox + patch - 1 - x : ox + x;
      out.labels.v[static_cast<std::size_t>(y) * patch + x] =
          scene.labels.v[static_cast<std::size_t>(oy + y) * W + sx];
    }
  return out;
}

/// Random crop to `patch` plus horizontal flip, offsets drawn from rng.
inline LabeledScene augment(const LabeledScene& scene, int patch, SplitMix64& rng) {
  const int H = scene.image.h(), W = scene.image.w();
  if (patch < 1 || patch > std::min(H, W))
    throw ArgumentError("augment: patch must be in [1, min(h, w)]");
  const int oy = static_cast<int>(rng.uniform_int(H - patch + 1));
  const int ox = static_cast<int>(rng.uniform_int(W - patch + 1));
  const bool flip = rng.coin();
  return augment_at(scene, patch, oy, ox, flip);
}

// --- FDSEG1 scene file format -----------------------------------------------
// magic "FDSEG1\n", ASCII header "h w c k\n", then h*w*c little-endian float32
// image values (channel-major), then h*w label bytes (255 = ignore).

inline void write_scene(const std::filesystem::path& path, const LabeledScene& scene,
                        int num_classes) {
  const int H = scene.image.h(), W = scene.image.w(), C = scene.image.c();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_scene: cannot open " + path.string());
  f << "FDSEG1\n" << H << " " << W << " " << C << " " << num_classes << "\n";
  std::vector<float> buf(static_cast<std::size_t>(H) * W);
  for (int ch = 0; ch < C; ++ch) {
    const double* plane = scene.image.plane(0, ch);
    for (int i = 0; i < H * W; ++i) buf[i] = static_cast<float>(plane[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), sizeof(float) * buf.size());
  }
  f.write(reinterpret_cast<const char*>(scene.labels.v.data()),
          static_cast<std::streamsize>(scene.labels.v.size()));
  if (!f) throw IoError("write_scene: write failed for " + path.string());
}

struct LoadedScene {
  LabeledScene scene;
  int num_classes = 0;
};

inline LoadedScene read_scene(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_scene: cannot open " + path.string());
  std::string magic;
  std::getline(f, magic);
  if (magic != "FDSEG1") throw IoError("read_scene: bad magic in " + path.string());
  int H = 0, W = 0, C = 0, K = 0;
  std::string header;
  std::getline(f, header);
  if (std::sscanf(header.c_str(), "%d %d %d %d", &H, &W, &C, &K) != 4 || H < 1 || W < 1 ||
      C != 3 || K < 1)
    throw IoError("read_scene: bad header in " + path.string());
  LoadedScene out;
  out.num_classes = K;
  out.scene.image = Tensor4(Shape4{1, C, H, W});
  out.scene.labels = LabelMap(1, H, W, 0);
  std::vector<float> buf(static_cast<std::size_t>(H) * W);
  for (int ch = 0; ch < C; ++ch) {
    f.read(reinterpret_cast<char*>(buf.data()), sizeof(float) * buf.size());
    if (!f) throw IoError("read_scene: truncated image data in " + path.string());
    double* plane = out.scene.image.plane(0, ch);
    for (int i = 0; i < H * W; ++i) plane[i] = static_cast<double>(buf[i]);
  }
  f.read(reinterpret_cast<char*>(out.scene.labels.v.data()),
         static_cast<std::streamsize>(out.scene.labels.v.size()));
  if (!f) throw IoError("read_scene: truncated label data in " + path.string());
  return out;
}

}  // namespace fdconv

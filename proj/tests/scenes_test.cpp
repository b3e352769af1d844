// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0

#include "fdconv/scenes.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace fdconv;
namespace fs = std::filesystem;

TEST(Scenes, GenerateIsDeterministic) {
  const SceneSpec spec = SceneSpec::defaults(11);
  const LabeledScene a = generate(spec, 3);
  const LabeledScene b = generate(spec, 3);
  ASSERT_EQ(a.image.size(), b.image.size());
  for (std::size_t i = 0; i < a.image.size(); ++i) EXPECT_EQ(a.image.data()[i], b.image.data()[i]);
  EXPECT_EQ(a.labels.v, b.labels.v);

  const LabeledScene c = generate(spec, 4);
  bool differs = false;
  for (std::size_t i = 0; i < a.image.size(); ++i)
    differs = differs || a.image.data()[i] != c.image.data()[i];
  EXPECT_TRUE(differs);
}

TEST(Scenes, LabelAndValueRanges) {
  const SceneSpec spec = SceneSpec::defaults(5);
  for (int idx = 0; idx < 10; ++idx) {
    const LabeledScene s = generate(spec, idx);
    for (const std::uint8_t l : s.labels.v) EXPECT_LT(l, spec.num_classes);
    for (std::size_t i = 0; i < s.image.size(); ++i) {
      EXPECT_GE(s.image.data()[i], 0.0);
      EXPECT_LE(s.image.data()[i], 1.0);
    }
  }
}

TEST(Scenes, ScaleTwinsShareStatisticsButDifferInArea) {
  // Measurement oracle over a generated batch: per-pixel mean/stddev over
  // twin object interiors agree within 2% of the value range while mean
  // object areas differ by at least 4x.
  const SceneSpec spec = SceneSpec::defaults(7);
  double sum1 = 0, sum2 = 0, sq1 = 0, sq2 = 0;
  std::int64_t n1 = 0, n2 = 0;
  double area1 = 0, area2 = 0;
  int scenes_with1 = 0, scenes_with2 = 0;
  for (int idx = 0; idx < 80 && (n1 < 3000 || n2 < 3000); ++idx) {
    const LabeledScene s = generate(spec, idx);
    std::int64_t a1 = 0, a2 = 0;
    for (std::size_t i = 0; i < s.labels.v.size(); ++i) {
      const int l = s.labels.v[i];
      const double v = s.image.data()[i];  // channel 0
      if (l == spec.twin_small) {
        sum1 += v;
        sq1 += v * v;
        ++n1;
        ++a1;
      } else if (l == spec.twin_large) {
        sum2 += v;
        sq2 += v * v;
        ++n2;
        ++a2;
      }
    }
    if (a1 > 0) {
      area1 += a1;
      ++scenes_with1;
    }
    if (a2 > 0) {
      area2 += a2;
      ++scenes_with2;
    }
  }
  ASSERT_GE(n1, 1000);
  ASSERT_GE(n2, 1000);
  const double m1 = sum1 / n1, m2 = sum2 / n2;
  const double v1 = sq1 / n1 - m1 * m1, v2 = sq2 / n2 - m2 * m2;
  EXPECT_NEAR(m1, m2, 0.02);
  EXPECT_NEAR(std::sqrt(v1), std::sqrt(v2), 0.02);
  // Visible area per scene containing the class; z-order keeps small objects
  // on top, so occlusion shrinks the large class and the ratio is conservative.
  EXPECT_GE((area2 / scenes_with2) / (area1 / scenes_with1), 4.0);
}

TEST(Scenes, ClassBalanceOverManyScenes) {
  const SceneSpec spec = SceneSpec::defaults(1);
  std::vector<std::int64_t> counts(spec.num_classes, 0);
  std::int64_t total = 0;
  for (int idx = 0; idx < 500; ++idx) {
    const LabeledScene s = generate(spec, idx);
    for (const std::uint8_t l : s.labels.v) {
      ++counts[l];
      ++total;
    }
  }
  for (int c = 0; c < spec.num_classes; ++c)
    EXPECT_GE(static_cast<double>(counts[c]) / total, 0.01)
        << "class " << c << " occupies less than 1% of pixels";
}

TEST(Scenes, MakeSplitDisjointAndReproducible) {
  const SceneSpec spec = SceneSpec::defaults(1);
  const SplitIndices s = make_split(spec, {200, 50, 50});
  EXPECT_EQ(s.train.size(), 200u);
  EXPECT_EQ(s.val.size(), 50u);
  EXPECT_EQ(s.test.size(), 50u);
  std::set<std::int64_t> all;
  for (const auto* v : {&s.train, &s.val, &s.test})
    for (auto i : *v) all.insert(i);
  EXPECT_EQ(all.size(), 300u);

  const SplitIndices s2 = make_split(spec, {200, 50, 50});
  EXPECT_EQ(s.train, s2.train);
  EXPECT_EQ(s.val, s2.val);
  EXPECT_EQ(s.test, s2.test);

  // Disjoint ranges feed different RNG streams, so the images differ.
  const LabeledScene train0 = generate(spec, s.train[0]);
  const LabeledScene test0 = generate(spec, s.test[0]);
  bool differs = false;
  for (std::size_t i = 0; i < train0.image.size(); ++i)
    differs = differs || train0.image.data()[i] != test0.image.data()[i];
  EXPECT_TRUE(differs);

  EXPECT_THROW(make_split(spec, {0, 1, 1}), ArgumentError);
}

TEST(Scenes, AugmentIdentityAndInvolution) {
  const SceneSpec spec = SceneSpec::defaults(3);
  const LabeledScene s = generate(spec, 0);
  const LabeledScene same = augment_at(s, spec.h, 0, 0, false);
  for (std::size_t i = 0; i < s.image.size(); ++i) EXPECT_EQ(same.image.data()[i], s.image.data()[i]);
  EXPECT_EQ(same.labels.v, s.labels.v);

  const LabeledScene flipped = augment_at(s, spec.h, 0, 0, true);
  const LabeledScene twice = augment_at(flipped, spec.h, 0, 0, true);
  for (std::size_t i = 0; i < s.image.size(); ++i) EXPECT_EQ(twice.image.data()[i], s.image.data()[i]);
  EXPECT_EQ(twice.labels.v, s.labels.v);
}

TEST(Scenes, CropMovesImageAndLabelsTogether) {
  // Marker round-trip: a unique pixel value and its label land at the same
  // patch coordinates.
  const SceneSpec spec = SceneSpec::defaults(3);
  LabeledScene s = generate(spec, 1);
  s.image.set(0, 0, 20, 30, 1.0);
  s.image.set(0, 1, 20, 30, 0.0);
  s.labels.set(0, 20, 30, 4);
  SplitMix64 rng(99);
  for (int t = 0; t < 20; ++t) {
    const LabeledScene a = augment(s, 32, rng);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (a.image.get(0, 0, y, x) == 1.0 && a.image.get(0, 1, y, x) == 0.0)
          EXPECT_EQ(a.labels.get(0, y, x), 4);
  }
  EXPECT_THROW(augment(s, spec.h + 1, rng), ArgumentError);
}

TEST(Scenes, FileRoundTripIsExact) {
  const SceneSpec spec = SceneSpec::defaults(5);
  const LabeledScene s = generate(spec, 2);
  const fs::path p = fs::temp_directory_path() / "fdconv_scene_test.fdseg";
  write_scene(p, s, spec.num_classes);
  const LoadedScene r = read_scene(p);
  EXPECT_EQ(r.num_classes, spec.num_classes);
  ASSERT_EQ(r.scene.image.shape(), s.image.shape());
  for (std::size_t i = 0; i < s.image.size(); ++i)
    EXPECT_EQ(r.scene.image.data()[i], s.image.data()[i]);
  EXPECT_EQ(r.scene.labels.v, s.labels.v);
  fs::remove(p);
}

TEST(Scenes, CorruptHeaderNamesFile) {
  const fs::path p = fs::temp_directory_path() / "fdconv_corrupt.fdseg";
  {
    std::ofstream f(p, std::ios::binary);
    f << "NOTSEG\njunk\n";
  }
  try {
    read_scene(p);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("fdconv_corrupt.fdseg"), std::string::npos);
  }
  fs::remove(p);
}

TEST(Scenes, TwinSpecViolationRejected) {
  SceneSpec spec = SceneSpec::defaults(1);
  spec.classes[2].color = {0.9, 0.1, 0.1};  // twins no longer identical
  EXPECT_THROW(spec.validate(), ArgumentError);
}

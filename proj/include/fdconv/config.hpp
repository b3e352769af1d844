// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a single JSON document, strictly parsed. Unknown keys are
// rejected everywhere so typos cannot silently fall back to defaults.

#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdconv/errors.hpp"
#include "fdconv/net.hpp"
#include "fdconv/optim.hpp"
#include "fdconv/scenes.hpp"

namespace fdconv {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::string& ctx,
                                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) known = known || it.key() == k;
    if (!known) throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace detail

struct NetConfig {
  std::string preset = "mini-largefov";
  int in_channels = 3;
  int channels = 16;
  int num_classes = 5;
};

struct DilationConfig {
  enum class Mode { Fixed, Learnable };
  Mode mode = Mode::Learnable;
  std::vector<double> fixed_values;                  // one per dilated layer
  DilationInit::Mode init = DilationInit::Mode::Constant;
  double init_value = 2.0;
  std::vector<std::array<double, 2>> ranges;         // one per dilated layer
};

struct DataConfig {
  std::filesystem::path dir = "data/default";
  SplitCounts splits{160, 24, 24};
  SceneSpec scene = SceneSpec::defaults();
};

struct RunConfig {
  std::string run_id = "run";
  std::filesystem::path out_dir = "out";
  bool deterministic = false;
  int threads = 0;  // 0 = hardware concurrency
  NetConfig net;
  DilationConfig dilation;
  DataConfig data;
  TrainConfig train;
  int eval_interval = 0;        // 0 = final evaluation only
  int checkpoint_interval = 0;  // 0 = final checkpoint only

  /// Network spec for this run; the dilated layers take their mode from the
  /// dilation config.
  NetSpec make_net_spec() const {
    if (net.preset != "mini-largefov")
      throw ConfigError("net.preset: unknown preset '" + net.preset + "'");
    const int dilated_layers = 2;
    std::vector<DilationMode> modes;
    for (int i = 0; i < dilated_layers; ++i) {
      if (dilation.mode == DilationConfig::Mode::Fixed) {
        double v = 2.0;
        if (dilation.fixed_values.size() == 1)
          v = dilation.fixed_values[0];
        else if (static_cast<int>(dilation.fixed_values.size()) == dilated_layers)
          v = dilation.fixed_values[i];
        else if (!dilation.fixed_values.empty())
          throw ConfigError("dilation.fixed: expected 1 value or one per dilated layer");
        modes.push_back(DilationMode::fixed(v));
      } else {
        std::array<double, 2> r{1.0, 4.0};
        if (dilation.ranges.size() == 1)
          r = dilation.ranges[0];
        else if (static_cast<int>(dilation.ranges.size()) == dilated_layers)
          r = dilation.ranges[i];
        else if (!dilation.ranges.empty())
          throw ConfigError("dilation.range: expected 1 range or one per dilated layer");
        const DilationInit init = dilation.init == DilationInit::Mode::Constant
                                      ? DilationInit::constant(dilation.init_value)
                                      : DilationInit::uniform(0);  // seed assigned at build
        modes.push_back(DilationMode::learnable(init, r[0], r[1]));
      }
    }
    return NetSpec::mini_largefov(net.in_channels, net.channels, net.num_classes, modes);
  }
};

inline SceneSpec parse_scene_spec(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, "data.scene",
                              {"h", "w", "num_classes", "objects_min", "objects_max", "noise_amp",
                               "seed", "twin_small", "twin_large", "classes"});
  SceneSpec s = SceneSpec::defaults();
  s.h = detail::get_or(j, "h", s.h);
  s.w = detail::get_or(j, "w", s.w);
  s.num_classes = detail::get_or(j, "num_classes", s.num_classes);
  s.objects_min = detail::get_or(j, "objects_min", s.objects_min);
  s.objects_max = detail::get_or(j, "objects_max", s.objects_max);
  s.noise_amp = detail::get_or(j, "noise_amp", s.noise_amp);
  s.seed = detail::get_or(j, "seed", s.seed);
  s.twin_small = detail::get_or(j, "twin_small", s.twin_small);
  s.twin_large = detail::get_or(j, "twin_large", s.twin_large);
  if (j.contains("classes")) {
    const auto& arr = j.at("classes");
    if (!arr.is_array()) throw ConfigError("data.scene.classes: expected an array");
    s.classes.clear();
    for (const auto& cj : arr) {
      detail::reject_unknown_keys(cj, "data.scene.classes[]",
                                  {"s_min", "s_max", "tex_freq", "tex_amp", "color", "disc"});
      SceneClass c;
      c.s_min = detail::get_or(cj, "s_min", 0.0);
      c.s_max = detail::get_or(cj, "s_max", 0.0);
      c.tex_freq = detail::get_or(cj, "tex_freq", 0.0);
      c.tex_amp = detail::get_or(cj, "tex_amp", 0.0);
      if (cj.contains("color")) {
        const auto col = cj.at("color").get<std::vector<double>>();
        if (col.size() != 3) throw ConfigError("data.scene.classes[].color: expected 3 values");
        c.color = {col[0], col[1], col[2]};
      }
      c.disc = detail::get_or(cj, "disc", false);
      s.classes.push_back(c);
    }
  } else if (s.num_classes != static_cast<int>(s.classes.size())) {
    throw ConfigError("data.scene: num_classes != 5 requires an explicit classes array");
  }
  try {
    s.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("data.scene: ") + e.what());
  }
  return s;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, "config",
                              {"run_id", "out_dir", "deterministic", "threads", "net", "dilation",
                               "data", "train"});
  RunConfig c;
  c.run_id = detail::get_or<std::string>(j, "run_id", c.run_id);
  c.out_dir = detail::get_or<std::string>(j, "out_dir", c.out_dir.string());
  c.deterministic = detail::get_or(j, "deterministic", c.deterministic);
  c.threads = detail::get_or(j, "threads", c.threads);

  if (j.contains("net")) {
    const auto& n = j.at("net");
    detail::reject_unknown_keys(n, "net", {"preset", "in_channels", "channels", "num_classes"});
    c.net.preset = detail::get_or<std::string>(n, "preset", c.net.preset);
    c.net.in_channels = detail::get_or(n, "in_channels", c.net.in_channels);
    c.net.channels = detail::get_or(n, "channels", c.net.channels);
    c.net.num_classes = detail::get_or(n, "num_classes", c.net.num_classes);
  }

  if (j.contains("dilation")) {
    const auto& d = j.at("dilation");
    detail::reject_unknown_keys(d, "dilation",
                                {"mode", "fixed", "init", "init_value", "range", "ranges"});
    const std::string mode = detail::get_or<std::string>(d, "mode", "learnable");
    if (mode == "fixed")
      c.dilation.mode = DilationConfig::Mode::Fixed;
    else if (mode == "learnable")
      c.dilation.mode = DilationConfig::Mode::Learnable;
    else
      throw ConfigError("dilation.mode: expected 'fixed' or 'learnable', got '" + mode + "'");
    if (d.contains("fixed")) {
      const auto& f = d.at("fixed");
      if (f.is_number())
        c.dilation.fixed_values = {f.get<double>()};
      else
        c.dilation.fixed_values = f.get<std::vector<double>>();
    }
    const std::string init = detail::get_or<std::string>(d, "init", "constant");
    if (init == "constant")
      c.dilation.init = DilationInit::Mode::Constant;
    else if (init == "uniform")
      c.dilation.init = DilationInit::Mode::Uniform;
    else
      throw ConfigError("dilation.init: expected 'constant' or 'uniform', got '" + init + "'");
    c.dilation.init_value = detail::get_or(d, "init_value", c.dilation.init_value);
    if (d.contains("range")) {
      const auto r = d.at("range").get<std::vector<double>>();
      if (r.size() != 2) throw ConfigError("dilation.range: expected [lo, hi]");
      c.dilation.ranges = {{r[0], r[1]}};
    }
    if (d.contains("ranges")) {
      for (const auto& rj : d.at("ranges")) {
        const auto r = rj.get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("dilation.ranges: expected [lo, hi] entries");
        c.dilation.ranges.push_back({r[0], r[1]});
      }
    }
  }

  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::reject_unknown_keys(d, "data", {"dir", "splits", "scene"});
    c.data.dir = detail::get_or<std::string>(d, "dir", c.data.dir.string());
    if (d.contains("splits")) {
      const auto& s = d.at("splits");
      detail::reject_unknown_keys(s, "data.splits", {"train", "val", "test"});
      c.data.splits.train = detail::get_or(s, "train", c.data.splits.train);
      c.data.splits.val = detail::get_or(s, "val", c.data.splits.val);
      c.data.splits.test = detail::get_or(s, "test", c.data.splits.test);
    }
    if (d.contains("scene")) c.data.scene = parse_scene_spec(d.at("scene"));
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown_keys(t, "train",
                                {"batch_size", "patch_size", "base_lr", "power", "max_iter",
                                 "momentum", "weight_decay", "dilation_lr_mult", "seed",
                                 "eval_interval", "checkpoint_interval"});
    c.train.batch_size = detail::get_or(t, "batch_size", c.train.batch_size);
    c.train.patch_size = detail::get_or(t, "patch_size", c.train.patch_size);
    c.train.base_lr = detail::get_or(t, "base_lr", c.train.base_lr);
    c.train.power = detail::get_or(t, "power", c.train.power);
    c.train.max_iter = detail::get_or(t, "max_iter", c.train.max_iter);
    c.train.momentum = detail::get_or(t, "momentum", c.train.momentum);
    c.train.weight_decay = detail::get_or(t, "weight_decay", c.train.weight_decay);
    c.train.dilation_lr_mult = detail::get_or(t, "dilation_lr_mult", c.train.dilation_lr_mult);
    c.train.seed = detail::get_or(t, "seed", c.train.seed);
    c.eval_interval = detail::get_or(t, "eval_interval", c.eval_interval);
    c.checkpoint_interval = detail::get_or(t, "checkpoint_interval", c.checkpoint_interval);
  }

  try {
    c.train.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (c.eval_interval < 0 || c.checkpoint_interval < 0)
    throw ConfigError("train: intervals must be >= 0");
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace fdconv

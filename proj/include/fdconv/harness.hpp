// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the CLI: dataset generation, training,
// evaluation, gradient checks, dilation export and the fixed-vs-learned
// ablation. All throw on failure; the CLI maps exception classes to exit
// codes.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "fdconv/checkpoint.hpp"
#include "fdconv/config.hpp"
#include "fdconv/gradcheck.hpp"
#include "fdconv/net.hpp"
#include "fdconv/scenes.hpp"
#include "fdconv/trainer.hpp"

namespace fdconv {

namespace detail {

inline std::string scene_filename(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%06lld.fdseg", static_cast<long long>(index));
  return buf;
}

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<std::int64_t>& indices) {
  std::ofstream f(path, std::ios::binary);  // binary: newline-exact across runs
  if (!f) throw IoError("write_manifest: cannot open " + path.string());
  for (const auto idx : indices) f << scene_filename(idx) << "\n";
}

}  // namespace detail

/// Materializes the configured dataset: one FDSEG1 file per scene plus
/// train/val/test manifests. Idempotent: regeneration writes identical bytes.
inline void cmd_gen_data(const RunConfig& cfg) {
  const SceneSpec& spec = cfg.data.scene;
  const SplitIndices splits = make_split(spec, cfg.data.splits);
  std::filesystem::create_directories(cfg.data.dir);
  for (const auto* split : {&splits.train, &splits.val, &splits.test})
    for (const std::int64_t idx : *split)
      write_scene(cfg.data.dir / detail::scene_filename(idx), generate(spec, idx),
                  spec.num_classes);
  detail::write_manifest(cfg.data.dir / "train.txt", splits.train);
  detail::write_manifest(cfg.data.dir / "val.txt", splits.val);
  detail::write_manifest(cfg.data.dir / "test.txt", splits.test);
  std::printf("wrote %d scenes to %s\n",
              cfg.data.splits.train + cfg.data.splits.val + cfg.data.splits.test,
              cfg.data.dir.string().c_str());
}

/// Trains per config (resuming from a checkpoint when given); writes
/// metrics.csv, dilation_trace.csv and checkpoints into out_dir.
inline TrainResult cmd_train(const RunConfig& cfg,
                             const std::optional<std::filesystem::path>& resume = {}) {
  if (cfg.threads > 0) set_num_threads(static_cast<unsigned>(cfg.threads));
  const Dataset train_ds = load_dataset(cfg.data.dir / "train.txt");
  const Dataset val_ds = load_dataset(cfg.data.dir / "val.txt");

  Net net = Net::build(cfg.make_net_spec(), cfg.train.seed);
  MomentumState mstate = MomentumState::zeros_like(net);

  Checkpoint ck;
  const Checkpoint* resume_ptr = nullptr;
  if (resume) {
    ck = load_checkpoint(*resume);
    restore_checkpoint(ck, net, mstate);
    resume_ptr = &ck;
  }

  TrainOptions opt;
  opt.cfg = cfg.train;
  opt.run_id = cfg.run_id;
  opt.out_dir = cfg.out_dir;
  opt.eval_interval = cfg.eval_interval;
  opt.checkpoint_interval = cfg.checkpoint_interval;
  opt.verbose = true;
  return train_net(net, mstate, train_ds, val_ds, opt, resume_ptr);
}

/// Evaluates a checkpoint on one split; prints the CSV row and writes it to
/// out_dir/eval_<split>.csv. Deterministic: same checkpoint, same row.
inline MetricsResult cmd_eval(const RunConfig& cfg, const std::filesystem::path& ckpt_path,
                              const std::string& split) {
  if (cfg.threads > 0) set_num_threads(static_cast<unsigned>(cfg.threads));
  if (split != "train" && split != "val" && split != "test")
    throw ConfigError("eval: split must be train, val or test");
  const Dataset ds = load_dataset(cfg.data.dir / (split + ".txt"));

  Net net = Net::build(cfg.make_net_spec(), cfg.train.seed);
  MomentumState mstate = MomentumState::zeros_like(net);
  const Checkpoint ck = load_checkpoint(ckpt_path);
  restore_checkpoint(ck, net, mstate);

  const MetricsResult m = evaluate(net, ds);
  const std::string row = cfg.run_id + "," + std::to_string(ck.iteration) + "," +
                          detail::fmt(m.pixel_acc) + "," + detail::fmt(m.cls_acc) + "," +
                          detail::fmt(m.mean_iou) + "," + detail::fmt(m.fw_iou);
  std::printf("run_id,iter,pixel_acc,cls_acc,mean_iou,fw_iou\n%s\n", row.c_str());
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream f(cfg.out_dir / ("eval_" + split + ".csv"), std::ios::trunc);
  f << "run_id,iter,pixel_acc,cls_acc,mean_iou,fw_iou\n" << row << "\n";
  return m;
}

/// Exports (layer, channel, dilation) rows for every dilated-role layer of a
/// checkpoint, suitable for external histogramming.
inline void cmd_export_dilations(const std::filesystem::path& ckpt_path,
                                 const std::filesystem::path& out_csv) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(ck.spec_echo);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("export-dilations: unreadable spec echo: ") + e.what());
  }
  std::filesystem::create_directories(out_csv.parent_path().empty() ? "."
                                                                    : out_csv.parent_path());
  std::ofstream f(out_csv, std::ios::trunc);
  if (!f) throw IoError("export-dilations: cannot open " + out_csv.string());
  f << "layer,channel,dilation\n";
  const auto& layers = spec.at("layers");
  for (std::size_t li = 0; li < layers.size(); ++li) {
    if (!layers[li].at("dilated_role").get<bool>()) continue;
    const auto& d = ck.find("layer" + std::to_string(li) + ".dilation");
    for (std::size_t c = 0; c < d.values.size(); ++c)
      f << li << "," << c << "," << detail::fmt(d.values[c]) << "\n";
  }
}

/// Per-layer channel means of a checkpoint's dilated-role dilation vectors.
inline std::vector<double> learned_dilation_means(const std::filesystem::path& ckpt_path) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const nlohmann::json spec = nlohmann::json::parse(ck.spec_echo);
  std::vector<double> means;
  const auto& layers = spec.at("layers");
  for (std::size_t li = 0; li < layers.size(); ++li) {
    if (!layers[li].at("dilated_role").get<bool>()) continue;
    const auto& d = ck.find("layer" + std::to_string(li) + ".dilation");
    double sum = 0.0;
    for (const double v : d.values) sum += v;
    means.push_back(sum / static_cast<double>(d.values.size()));
  }
  return means;
}

/// Runs the finite-difference suite (the reference layer plus a few size
/// variants), prints a table and writes one CSV row per parameter tensor.
inline bool cmd_gradcheck(const RunConfig& cfg) {
  std::vector<GradCheckConfig> suite;
  suite.push_back(GradCheckConfig{});  // C_in=2, C_out=2, K=3, 6x6, d={1.3,2.4}
  {
    GradCheckConfig one;
    one.in_channels = 1;
    one.out_channels = 3;
    one.kernel = 1;
    one.height = 5;
    one.width = 7;
    one.dilations = {1.5};
    one.seed = 11;
    suite.push_back(one);
  }
  {
    GradCheckConfig five;
    five.in_channels = 3;
    five.out_channels = 2;
    five.kernel = 5;
    five.height = 9;
    five.width = 8;
    five.dilations = {1.15, 1.85, 2.35};
    five.seed = 13;
    suite.push_back(five);
  }

  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream csv(cfg.out_dir / "gradcheck.csv", std::ios::trunc);
  csv << "config,tensor,max_rel_err,max_abs_err,worst_index,pass\n";
  std::printf("%-10s %-12s %-12s %-12s %s\n", "config", "tensor", "max_rel", "max_abs", "pass");
  bool all_pass = true;
  for (std::size_t ci = 0; ci < suite.size(); ++ci) {
    const GradReport rep = check_layer(suite[ci]);
    for (const auto& e : rep.entries) {
      std::printf("%-10zu %-12s %-12.3e %-12.3e %s\n", ci, e.name.c_str(), e.max_rel, e.max_abs,
                  e.pass ? "pass" : "FAIL");
      csv << ci << "," << e.name << "," << detail::fmt(e.max_rel) << "," << detail::fmt(e.max_abs)
          << "," << e.worst_index << "," << (e.pass ? "pass" : "fail") << "\n";
      all_pass = all_pass && e.pass;
    }
  }
  std::printf("gradcheck: %s\n", all_pass ? "all tensors pass" : "FAILURES present");
  return all_pass;
}

struct AblationRow {
  std::string config;
  MetricsResult metrics;
};

/// Tab-style ablation: fixed dilations 1..4, learned (constant init), learned
/// (uniform init), then fixed-at-learned-channel-mean refit. Shared seed and
/// iteration count across rows; summary CSV under out_dir.
inline std::vector<AblationRow> cmd_ablation(const RunConfig& base) {
  if (base.threads > 0) set_num_threads(static_cast<unsigned>(base.threads));
  const Dataset train_ds = load_dataset(base.data.dir / "train.txt");
  const Dataset val_ds = load_dataset(base.data.dir / "val.txt");

  struct RowSpec {
    std::string name;
    DilationConfig dil;
  };
  std::vector<RowSpec> rows;
  for (int d = 1; d <= 4; ++d) {
    DilationConfig dc;
    dc.mode = DilationConfig::Mode::Fixed;
    dc.fixed_values = {static_cast<double>(d)};
    rows.push_back({"fixed_" + std::to_string(d), dc});
  }
  {
    DilationConfig dc;
    dc.mode = DilationConfig::Mode::Learnable;
    dc.init = DilationInit::Mode::Constant;
    dc.init_value = 2.0;
    rows.push_back({"learned_const2", dc});
  }
  {
    DilationConfig dc;
    dc.mode = DilationConfig::Mode::Learnable;
    dc.init = DilationInit::Mode::Uniform;
    rows.push_back({"learned_uniform", dc});
  }

  std::filesystem::create_directories(base.out_dir);
  std::ofstream summary(base.out_dir / "ablation_summary.csv", std::ios::trunc);
  summary << "config,pixel_acc,cls_acc,mean_iou,fw_iou\n";

  std::vector<AblationRow> results;
  std::filesystem::path learned_ckpt;
  auto run_row = [&](const std::string& name, const DilationConfig& dil) {
    RunConfig cfg = base;
    cfg.run_id = base.run_id + "/" + name;
    cfg.out_dir = base.out_dir / name;
    cfg.dilation = dil;
    Net net = Net::build(cfg.make_net_spec(), cfg.train.seed);
    MomentumState mstate = MomentumState::zeros_like(net);
    TrainOptions opt;
    opt.cfg = cfg.train;
    opt.run_id = cfg.run_id;
    opt.out_dir = cfg.out_dir;
    opt.eval_interval = cfg.eval_interval;
    opt.checkpoint_interval = cfg.checkpoint_interval;
    opt.verbose = true;
    const TrainResult r = train_net(net, mstate, train_ds, val_ds, opt);
    summary << name << "," << detail::fmt(r.final_val.pixel_acc) << ","
            << detail::fmt(r.final_val.cls_acc) << "," << detail::fmt(r.final_val.mean_iou) << ","
            << detail::fmt(r.final_val.fw_iou) << "\n";
    summary.flush();
    results.push_back({name, r.final_val});
    if (name == "learned_const2") learned_ckpt = r.final_checkpoint;
    return r;
  };

  for (const auto& row : rows) run_row(row.name, row.dil);

  // Refit with each dilated layer fixed at the learned run's channel mean,
  // the paper-style "average of the learned distribution" control.
  cmd_export_dilations(learned_ckpt, base.out_dir / "learned_const2_dilations.csv");
  const std::vector<double> means = learned_dilation_means(learned_ckpt);
  DilationConfig mean_dc;
  mean_dc.mode = DilationConfig::Mode::Fixed;
  mean_dc.fixed_values = means;
  run_row("fixed_learned_mean", mean_dc);

  return results;
}

}  // namespace fdconv

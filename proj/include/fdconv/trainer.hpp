// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training and evaluation loops. Every run is a pure function of (config,
// dataset, seed): batch sampling and augmentation draw from one SplitMix64
// stream whose state is checkpointed, and gradient reductions are ordered, so
// resumed runs reproduce uninterrupted ones byte for byte.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fdconv/checkpoint.hpp"
#include "fdconv/errors.hpp"
#include "fdconv/metrics.hpp"
#include "fdconv/net.hpp"
#include "fdconv/optim.hpp"
#include "fdconv/scenes.hpp"

namespace fdconv {

struct Dataset {
  std::vector<LabeledScene> scenes;
  int num_classes = 0;

  void require_nonempty() const {
    if (scenes.empty()) throw ArgumentError("Dataset: empty");
  }
};

/// Generates the scenes for a list of indices in memory. Identical to
/// materializing and re-reading them (images are float32-quantized at
/// generation time).
inline Dataset generate_dataset(const SceneSpec& spec, const std::vector<std::int64_t>& indices) {
  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.scenes.reserve(indices.size());
  for (const std::int64_t idx : indices) ds.scenes.push_back(generate(spec, idx));
  return ds;
}

/// Loads the scenes listed in a manifest (one path per line, relative paths
/// resolved against the manifest's directory).
inline Dataset load_dataset(const std::filesystem::path& manifest) {
  std::ifstream f(manifest);
  if (!f) throw IoError("load_dataset: cannot open manifest " + manifest.string());
  Dataset ds;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::filesystem::path p(line);
    if (p.is_relative()) p = manifest.parent_path() / p;
    LoadedScene ls = read_scene(p);
    if (ds.num_classes == 0)
      ds.num_classes = ls.num_classes;
    else if (ds.num_classes != ls.num_classes)
      throw IoError("load_dataset: inconsistent class counts in " + p.string());
    ds.scenes.push_back(std::move(ls.scene));
  }
  ds.require_nonempty();
  return ds;
}

/// Deterministic full-image evaluation: fixed order, per-batch confusion
/// matrices merged in order (integer counts, so merging is exact).
inline MetricsResult evaluate(const Net& net, const Dataset& ds) {
  ds.require_nonempty();
  ConfusionMatrix cm(ds.num_classes);
  const int H = ds.scenes.front().image.h(), W = ds.scenes.front().image.w();
  const int batch = 8;
  for (std::size_t start = 0; start < ds.scenes.size(); start += batch) {
    const int n = static_cast<int>(std::min<std::size_t>(batch, ds.scenes.size() - start));
    Tensor4 x(Shape4{n, 3, H, W});
    LabelMap labels(n, H, W, 0);
    for (int b = 0; b < n; ++b) {
      const auto& s = ds.scenes[start + b];
      if (s.image.h() != H || s.image.w() != W)
        throw ShapeError("evaluate: scenes must share one image size");
      std::copy(s.image.data(), s.image.data() + s.image.size(), x.plane(b, 0));
      std::copy(s.labels.v.begin(), s.labels.v.end(), labels.v.begin() + labels.flat(b, 0, 0));
    }
    const Tensor4 logits = net.forward(x);
    cm.accumulate(argmax_predictions(logits), labels);
  }
  return cm.compute();
}

struct TrainOptions {
  TrainConfig cfg;
  std::string run_id = "run";
  std::filesystem::path out_dir;  // empty = no files written
  int eval_interval = 0;          // 0 = final evaluation only
  int checkpoint_interval = 0;    // 0 = final checkpoint only
  int stop_iter = 0;              // 0 = run to max_iter; else pause there
                                  // (schedule still spans max_iter)
  bool write_trace = true;
  bool verbose = false;
};

struct TrainResult {
  MetricsResult final_val;
  double final_loss = 0.0;
  int iterations = 0;
  std::filesystem::path final_checkpoint;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline void append_metrics_row(std::ofstream& f, const std::string& run_id, int iter,
                               const MetricsResult& m) {
  f << run_id << "," << iter << "," << fmt(m.pixel_acc) << "," << fmt(m.cls_acc) << ","
    << fmt(m.mean_iou) << "," << fmt(m.fw_iou) << "\n";
  f.flush();
}

}  // namespace detail

/// Runs cfg.max_iter SGD iterations (continuing from `resume` if given).
/// Writes metrics.csv (run_id,iter,pixel_acc,cls_acc,mean_iou,fw_iou),
/// dilation_trace.csv (iter,layer,channel,dilation for dilated-role layers)
/// and FDCKPT1 checkpoints under opt.out_dir.
inline TrainResult train_net(Net& net, MomentumState& mstate, const Dataset& train_ds,
                             const Dataset& val_ds, const TrainOptions& opt,
                             const Checkpoint* resume = nullptr) {
  opt.cfg.validate();
  train_ds.require_nonempty();
  const TrainConfig& cfg = opt.cfg;
  const int P = cfg.patch_size;
  const int B = cfg.batch_size;
  for (const auto& s : train_ds.scenes)
    if (P > s.image.h() || P > s.image.w())
      throw ArgumentError("train: patch_size exceeds scene size");

  SplitMix64 rng(SplitMix64::derive(cfg.seed, 0x7261696e));  // data/augmentation stream
  int start_iter = 0;
  if (resume) {
    rng.set_state(resume->rng_state);
    start_iter = static_cast<int>(resume->iteration);
    if (start_iter > cfg.max_iter) throw StateError("train: checkpoint is past max_iter");
  }

  const bool writing = !opt.out_dir.empty();
  std::ofstream metrics_file, trace_file;
  if (writing) {
    std::filesystem::create_directories(opt.out_dir);
    const bool fresh = start_iter == 0;
    metrics_file.open(opt.out_dir / "metrics.csv", fresh ? std::ios::trunc : std::ios::app);
    if (fresh) metrics_file << "run_id,iter,pixel_acc,cls_acc,mean_iou,fw_iou\n";
    if (opt.write_trace) {
      trace_file.open(opt.out_dir / "dilation_trace.csv", fresh ? std::ios::trunc : std::ios::app);
      if (fresh) trace_file << "iter,layer,channel,dilation\n";
    }
  }

  const int stop_iter =
      opt.stop_iter > 0 ? std::min(opt.stop_iter, cfg.max_iter) : cfg.max_iter;
  const bool reaches_end = stop_iter == cfg.max_iter;

  TrainResult result;
  Tensor4 batch_x(Shape4{B, 3, P, P});
  LabelMap batch_labels(B, P, P, 0);
  std::vector<std::int64_t> batch_ids(B);

  for (int iter = start_iter; iter < stop_iter; ++iter) {
    const double lr = poly_lr(iter, cfg);
    for (int b = 0; b < B; ++b) {
      const std::size_t idx = rng.uniform_int(train_ds.scenes.size());
      batch_ids[b] = static_cast<std::int64_t>(idx);
      const LabeledScene patch = augment(train_ds.scenes[idx], P, rng);
      std::copy(patch.image.data(), patch.image.data() + patch.image.size(), batch_x.plane(b, 0));
      std::copy(patch.labels.v.begin(), patch.labels.v.end(),
                batch_labels.v.begin() + batch_labels.flat(b, 0, 0));
    }

    NetCache cache;
    const Tensor4 logits = net.forward(batch_x, cache);
    const LossOutput loss = softmax_xent(logits, batch_labels);
    if (!std::isfinite(loss.loss)) {
      std::string ids;
      for (const auto id : batch_ids) ids += std::to_string(id) + " ";
      if (writing) {
        std::ofstream dump(opt.out_dir / "abort_dump.txt");
        dump << "non-finite loss at iter " << iter << "\nbatch scene ids: " << ids << "\n";
      }
      throw NumericError("train: non-finite loss at iter " + std::to_string(iter) +
                         ", batch scene ids: " + ids);
    }
    const NetGradients grads = net.backward(cache, loss.grad_logits);
    sgd_step(net, grads, mstate, lr, cfg);
    result.final_loss = loss.loss;

    if (writing && opt.write_trace) {
      for (std::size_t li = 0; li < net.layer_count(); ++li) {
        if (!net.layer(li).dilated_role) continue;
        const auto& d = net.layer(li).state.dilation.d;
        for (std::size_t c = 0; c < d.size(); ++c)
          trace_file << (iter + 1) << "," << li << "," << c << "," << detail::fmt(d[c]) << "\n";
      }
    }

    const int done = iter + 1;
    const bool last = done == cfg.max_iter;
    if (opt.eval_interval > 0 && done % opt.eval_interval == 0 && !last && !val_ds.scenes.empty()) {
      const MetricsResult m = evaluate(net, val_ds);
      if (writing) detail::append_metrics_row(metrics_file, opt.run_id, done, m);
      if (opt.verbose)
        std::printf("[%s] iter %d loss %.4f val mIoU %.4f\n", opt.run_id.c_str(), done, loss.loss,
                    m.mean_iou);
    }
    if (writing && opt.checkpoint_interval > 0 && done % opt.checkpoint_interval == 0 && !last) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06d.fdckpt", done);
      save_checkpoint(opt.out_dir / name,
                      make_checkpoint(net, mstate, static_cast<std::uint64_t>(done), rng.state()));
    }
  }

  if (reaches_end) {
    if (!val_ds.scenes.empty()) {
      result.final_val = evaluate(net, val_ds);
      if (writing) detail::append_metrics_row(metrics_file, opt.run_id, cfg.max_iter, result.final_val);
      if (opt.verbose)
        std::printf("[%s] final val mIoU %.4f pixel %.4f\n", opt.run_id.c_str(),
                    result.final_val.mean_iou, result.final_val.pixel_acc);
    }
    if (writing) {
      result.final_checkpoint = opt.out_dir / "checkpoint_final.fdckpt";
      save_checkpoint(result.final_checkpoint, make_checkpoint(net, mstate,
                                                               static_cast<std::uint64_t>(cfg.max_iter),
                                                               rng.state()));
    }
  } else if (writing) {
    // Paused mid-run: leave a checkpoint to resume from.
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_%06d.fdckpt", stop_iter);
    result.final_checkpoint = opt.out_dir / name;
    save_checkpoint(result.final_checkpoint,
                    make_checkpoint(net, mstate, static_cast<std::uint64_t>(stop_iter), rng.state()));
  }
  result.iterations = stop_iter - start_iter;
  return result;
}

}  // namespace fdconv

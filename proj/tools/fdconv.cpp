// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0
//
// fdconv CLI: dataset generation, training, evaluation, gradient checks,
// dilation export and the fixed-vs-learned ablation.
// Exit codes: 0 success, 1 config error, 2 runtime/numerical failure.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fdconv/config.hpp"
#include "fdconv/harness.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_override;
  std::int64_t seed_override = -1;
  bool deterministic = false;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required = true) {
  auto* opt = cmd->add_option("--config", flags.config_path, "JSON run configuration");
  if (config_required) opt->required();
  cmd->add_option("--out", flags.out_override, "override output directory");
  cmd->add_option("--seed", flags.seed_override, "override training seed");
  cmd->add_flag("--deterministic", flags.deterministic,
                "bit-reproducible mode (all fdconv runs are; accepted for interface parity)");
  cmd->add_option("--threads", flags.threads, "worker threads (0 = hardware)");
}

fdconv::RunConfig resolve(const CommonFlags& flags) {
  fdconv::RunConfig cfg = flags.config_path.empty() ? fdconv::RunConfig{}
                                                    : fdconv::load_run_config(flags.config_path);
  if (!flags.out_override.empty()) cfg.out_dir = flags.out_override;
  if (flags.seed_override >= 0) cfg.train.seed = static_cast<std::uint64_t>(flags.seed_override);
  if (flags.deterministic) cfg.deterministic = true;
  if (flags.threads > 0) cfg.threads = flags.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fdconv: learnable channel-wise fractional dilated convolutions"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, grad_flags, abl_flags;
  std::string train_resume;
  std::string eval_ckpt, eval_split = "val";
  std::string export_ckpt, export_out = "dilations.csv";

  auto* gen = app.add_subcommand("gen-data", "materialize the synthetic dataset");
  add_common(gen, gen_flags);

  auto* train = app.add_subcommand("train", "train one model per config");
  add_common(train, train_flags);
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_common(eval, eval_flags);
  eval->add_option("--checkpoint", eval_ckpt, "FDCKPT1 checkpoint")->required();
  eval->add_option("--split", eval_split, "train|val|test");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(grad, grad_flags, /*config_required=*/false);

  auto* exp = app.add_subcommand("export-dilations", "dump (layer, channel, dilation) CSV");
  exp->add_option("--checkpoint", export_ckpt, "FDCKPT1 checkpoint")->required();
  exp->add_option("--out-csv", export_out, "destination CSV path");

  auto* abl = app.add_subcommand("ablation", "fixed-vs-learned dilation ablation");
  add_common(abl, abl_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      fdconv::cmd_gen_data(resolve(gen_flags));
    } else if (train->parsed()) {
      std::optional<std::filesystem::path> resume;
      if (!train_resume.empty()) resume = train_resume;
      fdconv::cmd_train(resolve(train_flags), resume);
    } else if (eval->parsed()) {
      fdconv::cmd_eval(resolve(eval_flags), eval_ckpt, eval_split);
    } else if (grad->parsed()) {
      if (!fdconv::cmd_gradcheck(resolve(grad_flags))) return 2;
    } else if (exp->parsed()) {
      fdconv::cmd_export_dilations(export_ckpt, export_out);
    } else if (abl->parsed()) {
      fdconv::cmd_ablation(resolve(abl_flags));
    }
  } catch (const fdconv::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

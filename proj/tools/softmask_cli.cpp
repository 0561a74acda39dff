// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// softmask_cli: gen-synthetic, pretrain, eval, visualize, ablate.
// Exit codes: 0 success, 2 usage/config, 3 numeric failure, 1 otherwise.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "softmask/softmask.h"

namespace fs = std::filesystem;

namespace {

int exit_code(sm_status status) {
  switch (status) {
    case SM_OK:
      return 0;
    case SM_ERR_USAGE:
    case SM_ERR_MANIFEST:
    case SM_ERR_CHECKPOINT:
      return 2;
    case SM_ERR_NUMERIC:
      return 3;
    default:
      return 1;
  }
}

int report(sm_status status) {
  if (status != SM_OK) std::cerr << "error: " << sm_last_error() << "\n";
  return exit_code(status);
}

struct SessionCloser {
  void operator()(sm_session* s) const { sm_session_close(s); }
};
using Session = std::unique_ptr<sm_session, SessionCloser>;

struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { sm_free_string(s); }
};

// SOFTMASK_SEED overrides the config seed.
sm_status open_session(const std::string& config, Session& out) {
  sm_open_options options{};
  if (const char* env = std::getenv("SOFTMASK_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long seed = std::strtoull(env, &end, 10);
    if (*end != '\0') {
      std::cerr << "error: SOFTMASK_SEED must be an unsigned integer\n";
      return SM_ERR_USAGE;
    }
    options.override_seed = 1;
    options.seed = seed;
  }
  sm_session* raw = nullptr;
  const sm_status status = sm_session_open(config.c_str(), &options, &raw);
  out.reset(raw);
  return status;
}

std::string metrics_line(const sm_step_report& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"step\": %ld, \"l_itc\": %.17g, \"l_itm\": %.17g, \"l_mlm\": %.17g, \"l_itm_star\": %.17g, "
                "\"total\": %.17g, \"lr\": %.17g}",
                r.step, r.l_itc, r.l_itm, r.l_mlm, r.l_itm_star, r.total, r.lr);
  return buf;
}

int cmd_gen_synthetic(int n, std::uint64_t seed, int image_size, const std::string& out) {
  if (n < 1) {
    std::cerr << "error: --n must be at least 1\n";
    return 2;
  }
  return report(sm_gen_synthetic(n, seed, image_size, out.c_str()));
}

int cmd_pretrain(const std::string& config, bool resume, const std::string& resume_from, long until) {
  Session session;
  if (sm_status s = open_session(config, session); s != SM_OK) return report(s);
  const fs::path out_dir = sm_session_output_dir(session.get());
  const fs::path ckpt_dir = out_dir / "checkpoints";
  const fs::path latest = ckpt_dir / "latest.ckpt";
  fs::create_directories(ckpt_dir);

  const bool resuming = resume || !resume_from.empty();
  if (resuming) {
    const std::string path = resume_from.empty() ? latest.string() : resume_from;
    if (sm_status s = sm_load_checkpoint(session.get(), path.c_str()); s != SM_OK) return report(s);
  }
  sm_session_info info{};
  if (sm_status s = sm_session_info_get(session.get(), &info); s != SM_OK) return report(s);
  const long stop = until > 0 ? std::min(until, info.total_steps) : info.total_steps;

  std::ofstream metrics(out_dir / "metrics.jsonl", resuming ? std::ios::app : std::ios::trunc);
  if (!metrics) {
    std::cerr << "error: cannot write " << (out_dir / "metrics.jsonl") << "\n";
    return 1;
  }
  for (long step = info.step; step < stop; ++step) {
    sm_step_report r{};
    if (sm_status s = sm_train_step(session.get(), &r); s != SM_OK) return report(s);
    metrics << metrics_line(r) << "\n" << std::flush;
    const long done = r.step + 1;
    if (info.checkpoint_every > 0 && done % info.checkpoint_every == 0) {
      const std::string path = (ckpt_dir / ("step_" + std::to_string(done) + ".ckpt")).string();
      if (sm_status s = sm_save_checkpoint(session.get(), path.c_str()); s != SM_OK) return report(s);
      if (sm_status s = sm_save_checkpoint(session.get(), latest.string().c_str()); s != SM_OK) return report(s);
    }
  }
  if (sm_status s = sm_save_checkpoint(session.get(), latest.string().c_str()); s != SM_OK) return report(s);
  std::cout << "trained to step " << stop << "; checkpoint " << latest.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& config, const std::string& checkpoint, int k, bool exhaustive) {
  Session session;
  if (sm_status s = open_session(config, session); s != SM_OK) return report(s);
  if (sm_status s = sm_load_checkpoint(session.get(), checkpoint.c_str()); s != SM_OK) return report(s);
  OwnedString json;
  if (sm_status s = sm_evaluate(session.get(), exhaustive ? -1 : k, &json.s); s != SM_OK) return report(s);
  const fs::path out_dir = sm_session_output_dir(session.get());
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "eval_report.json") << json.s << "\n";
  std::cout << json.s << "\n";
  return 0;
}

int cmd_visualize(const std::string& config, const std::string& checkpoint, const std::string& pair_id,
                  const std::string& word, const std::string& out) {
  Session session;
  if (sm_status s = open_session(config, session); s != SM_OK) return report(s);
  if (sm_status s = sm_load_checkpoint(session.get(), checkpoint.c_str()); s != SM_OK) return report(s);
  const std::string dir = out.empty() ? (fs::path(sm_session_output_dir(session.get())) / "heatmaps").string() : out;
  OwnedString path;
  if (sm_status s = sm_visualize(session.get(), pair_id.c_str(), word.c_str(), dir.c_str(), &path.s); s != SM_OK) {
    return report(s);
  }
  std::cout << path.s << "\n";
  return 0;
}

int cmd_ablate(const std::string& config, int steps) {
  Session session;
  if (sm_status s = open_session(config, session); s != SM_OK) return report(s);
  OwnedString json;
  OwnedString table;
  if (sm_status s = sm_run_ablation(session.get(), steps, &json.s, &table.s); s != SM_OK) return report(s);
  const fs::path out_dir = sm_session_output_dir(session.get());
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "ablation.json") << json.s << "\n";
  std::ofstream(out_dir / "ablation.txt") << table.s;
  std::cout << table.s;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SoftMask vision-language pretraining toolkit"};
  app.require_subcommand(1);

  int n = 0;
  std::uint64_t seed = 0;
  int image_size = 16;
  std::string out;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic image-caption corpus");
  gen->add_option("--n", n, "Number of pairs")->required();
  gen->add_option("--seed", seed, "Random seed");
  gen->add_option("--image-size", image_size, "Square image side in pixels");
  gen->add_option("--out", out, "Output directory")->required();

  std::string config;
  bool resume = false;
  std::string resume_from;
  long until = 0;
  auto* pretrain = app.add_subcommand("pretrain", "Train from a run config");
  pretrain->add_option("--config", config, "Run config JSON")->required();
  pretrain->add_flag("--resume", resume, "Continue from <output_dir>/checkpoints/latest.ckpt");
  pretrain->add_option("--resume-from", resume_from, "Continue from this checkpoint");
  pretrain->add_option("--until", until, "Stop after this many total steps");

  std::string checkpoint;
  int k = 0;
  bool exhaustive = false;
  auto* eval = app.add_subcommand("eval", "Image-text retrieval evaluation");
  eval->add_option("--config", config, "Run config JSON")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("--k", k, "Shortlist size (default min(gallery, 8))");
  eval->add_flag("--exhaustive", exhaustive, "Rank every pair by ITM score");

  std::string pair_id;
  std::string word;
  auto* vis = app.add_subcommand("visualize", "Word-conditional Grad-CAM heat map");
  vis->add_option("--config", config, "Run config JSON")->required();
  vis->add_option("--checkpoint", checkpoint, "Checkpoint to load")->required();
  vis->add_option("--pair-id", pair_id, "Pair id from the training manifest")->required();
  vis->add_option("--word", word, "Caption word, or cls")->required();
  vis->add_option("--out", out, "Output directory (default <output_dir>/heatmaps)");

  int steps = 0;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the ablation grid");
  ablate->add_option("--config", config, "Run config JSON")->required();
  ablate->add_option("--steps", steps, "Training steps per cell")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (gen->parsed()) return cmd_gen_synthetic(n, seed, image_size, out);
  if (pretrain->parsed()) return cmd_pretrain(config, resume, resume_from, until);
  if (eval->parsed()) return cmd_eval(config, checkpoint, k, exhaustive);
  if (vis->parsed()) return cmd_visualize(config, checkpoint, pair_id, word, out);
  if (ablate->parsed()) return cmd_ablate(config, steps);
  return 2;
}

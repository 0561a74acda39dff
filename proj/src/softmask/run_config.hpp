// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration files:
//   {"model": {...}, "train": {...}, "augment": {...},
//    "corpus": {"train_manifest": "...", "eval_manifest": "..."},
//    "output_dir": "..."}
// Relative paths resolve against the config file's directory.

#pragma once

#include <json.hpp>

#include <filesystem>
#include <optional>

#include "softmask/augmentation.hpp"
#include "softmask/corpus.hpp"
#include "softmask/eval.hpp"
#include "softmask/model.hpp"
#include "softmask/trainer.hpp"

namespace softmask {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  AugmentConfig augment;
  bool vocab_size_given = false;
  std::filesystem::path train_manifest;
  std::optional<std::filesystem::path> eval_manifest;
  std::filesystem::path output_dir;
};

// Strict: unknown keys raise ConfigError naming the key.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

struct RunData {
  std::vector<ImageTextPair> train_pairs;
  Vocabulary vocab;
  RetrievalCorpus eval;
};

// Loads the manifests and builds the vocabulary from the training captions.
// Sets config.model.vocab_size from the vocabulary, or checks it if given.
RunData load_run_data(RunConfig& config);

}  // namespace softmask

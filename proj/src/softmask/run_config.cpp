// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/run_config.hpp"

#include <fstream>
#include <set>

#include "softmask/config_io.hpp"
#include "softmask/errors.hpp"

namespace softmask {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const nlohmann::json& value, const std::string& key) {
  if (!value.is_string()) throw ConfigError(key + ": expected a path string");
  std::filesystem::path p = value.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const std::set<std::string> known = {"model", "train", "augment", "corpus", "output_dir"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig config;
  if (j.contains("model")) {
    config.model = model_config_from_json(j.at("model"));
    config.vocab_size_given = j.at("model").contains("vocab_size");
  }
  if (j.contains("train")) config.train = train_config_from_json(j.at("train"));
  if (j.contains("augment")) config.augment = augment_config_from_json(j.at("augment"));

  if (!j.contains("corpus")) throw ConfigError("config: missing 'corpus'");
  const nlohmann::json& corpus = j.at("corpus");
  if (!corpus.is_object()) throw ConfigError("corpus: expected an object");
  for (const auto& [key, _] : corpus.items()) {
    if (key != "train_manifest" && key != "eval_manifest") {
      throw ConfigError("unknown config key 'corpus." + key + "'");
    }
  }
  if (!corpus.contains("train_manifest")) throw ConfigError("config: missing 'corpus.train_manifest'");
  config.train_manifest = resolve(base_dir, corpus.at("train_manifest"), "corpus.train_manifest");
  if (corpus.contains("eval_manifest")) {
    config.eval_manifest = resolve(base_dir, corpus.at("eval_manifest"), "corpus.eval_manifest");
  }
  config.output_dir = j.contains("output_dir") ? resolve(base_dir, j.at("output_dir"), "output_dir")
                                               : base_dir / "run";

  config.train.validate();
  config.augment.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

RunData load_run_data(RunConfig& config) {
  RunData data;
  const CorpusManifest train = load_manifest(config.train_manifest, Split::kTrain);
  std::vector<std::string> captions;
  for (const ManifestEntry& e : train.entries) captions.push_back(e.caption);
  data.vocab = Vocabulary::from_captions(captions);
  if (config.vocab_size_given && config.model.vocab_size != data.vocab.size()) {
    throw ConfigError("model.vocab_size " + std::to_string(config.model.vocab_size) +
                      " does not match the training vocabulary (" + std::to_string(data.vocab.size()) + ")");
  }
  config.model.vocab_size = data.vocab.size();
  config.model.validate();
  data.train_pairs = load_pairs(train);
  data.eval = RetrievalCorpus::from_manifest(
      config.eval_manifest ? load_manifest(*config.eval_manifest, Split::kTest) : train);
  return data;
}

}  // namespace softmask

// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>

#include "softmask/config_io.hpp"
#include "softmask/errors.hpp"
#include "softmask/run_config.hpp"
#include "test_support.hpp"

using namespace softmask;
using softmask::testing::scratch_dir;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("configs round-trip through JSON") {
  ModelConfig m;
  m.embed_dim = 32;
  m.num_heads = 2;
  CHECK(model_config_from_json(to_json(m)) == m);

  TrainConfig t;
  t.focal_itc = false;
  t.randmask_p = 0.3;
  t.mask_source = MaskSource::kCrossAttention;
  t.negatives = NegativeSampling::kUniform;
  t.seed = 123456789012345ULL;
  CHECK(train_config_from_json(to_json(t)) == t);

  AugmentConfig a;
  a.randaugment_ops = {{"rotate", 0.1}, {"equalize", 1.0}};
  a.grayscale_prob = 0.0;
  CHECK(augment_config_from_json(to_json(a)) == a);

  for (MaskSource s : {MaskSource::kGradCam, MaskSource::kCrossAttention, MaskSource::kRandom}) {
    CHECK(mask_source_from_string(to_string(s)) == s);
  }
}

TEST_CASE("missing keys keep defaults") {
  const TrainConfig t = train_config_from_json(nlohmann::json{{"total_steps", 50}});
  CHECK(t.total_steps == 50);
  CHECK(t.lr_peak == TrainConfig{}.lr_peak);
  CHECK(model_config_from_json(nlohmann::json::object()) == ModelConfig{});
}

TEST_CASE("unknown keys and wrong types are rejected by name") {
  CHECK(error_of([] { train_config_from_json(nlohmann::json{{"learning_rate", 1}}); }).find("train.learning_rate") !=
        std::string::npos);
  CHECK(error_of([] { model_config_from_json(nlohmann::json{{"embed_dim", "big"}}); }).find("model.embed_dim") !=
        std::string::npos);
  CHECK(error_of([] { train_config_from_json(nlohmann::json{{"mask_source", "saliency"}}); }).find("saliency") !=
        std::string::npos);
  CHECK_THROWS_AS(augment_config_from_json(nlohmann::json{{"randaugment_ops", 3}}), ConfigError);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  for (auto mutate : std::vector<std::function<void(TrainConfig&)>>{
           [](TrainConfig& c) { c.batch_size = 1; },
           [](TrainConfig& c) { c.queue_size = 12; },
           [](TrainConfig& c) { c.total_steps = 10; },
           [](TrainConfig& c) { c.mlm_rate = 0.0; },
           [](TrainConfig& c) { c.gamma = -1.0; },
           [](TrainConfig& c) { c.momentum = 1.5; },
           [](TrainConfig& c) { c.randmask_p = 1.0; },
       }) {
    TrainConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("run config resolves paths against the config file") {
  const auto dir = scratch_dir("run_config");
  std::ofstream(dir / "cfg.json") << R"({"train": {"total_steps": 40}, "corpus": {"train_manifest": "data/m.jsonl"}})";
  const RunConfig c = load_run_config(dir / "cfg.json");
  CHECK(c.train_manifest == dir / "data/m.jsonl");
  CHECK(c.output_dir == dir / "run");
  CHECK_FALSE(c.eval_manifest.has_value());
  CHECK(c.train.total_steps == 40);

  CHECK(error_of([] { parse_run_config(nlohmann::json{{"corpus", {{"train_manifest", "x"}}}, {"extra", 1}}, "."); })
            .find("extra") != std::string::npos);
  CHECK(error_of([] { parse_run_config(nlohmann::json{{"corpus", {{"train", "x"}}}}, "."); }).find("corpus.train") !=
        std::string::npos);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json::object(), "."), ConfigError);
  std::ofstream(dir / "bad.json") << "{";
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
}

TEST_CASE("run data builds the vocabulary and checks vocab_size") {
  const auto dir = scratch_dir("run_data");
  const SyntheticCorpus corpus = make_synthetic_corpus(4, 2);
  write_synthetic_corpus(corpus, dir);
  RunConfig c = parse_run_config(nlohmann::json{{"corpus", {{"train_manifest", "manifest.jsonl"}}}}, dir);
  const RunData data = load_run_data(c);
  CHECK(data.train_pairs.size() == 4);
  CHECK(c.model.vocab_size == data.vocab.size());
  CHECK(data.eval.num_images() == 4);

  RunConfig wrong = parse_run_config(
      nlohmann::json{{"model", {{"vocab_size", 3}}}, {"corpus", {{"train_manifest", "manifest.jsonl"}}}}, dir);
  CHECK_THROWS_AS(load_run_data(wrong), ConfigError);
}

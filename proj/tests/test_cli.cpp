// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// Runs the command-line binary end to end.

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SOFTMASK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<nlohmann::json> read_jsonl(const fs::path& p) {
  std::vector<nlohmann::json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("softmask_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, int total_steps, int checkpoint_every) {
  const nlohmann::json config = {
      {"model",
       {{"embed_dim", 16}, {"num_heads", 2}, {"vision_layers", 1}, {"text_layers", 1}, {"fusion_layers", 1}}},
      {"train",
       {{"batch_size", 8},
        {"queue_size", 16},
        {"warmup_steps", 5},
        {"total_steps", total_steps},
        {"checkpoint_every", checkpoint_every}}},
      {"corpus", {{"train_manifest", "corpus/manifest.jsonl"}}},
      {"output_dir", "out"}};
  std::ofstream(dir / "config.json") << config.dump(2);
  return dir / "config.json";
}

}  // namespace

TEST_CASE("gen-synthetic writes a reproducible corpus") {
  const fs::path dir = fresh_dir("gen");
  REQUIRE(run("gen-synthetic --n 8 --seed 0 --out " + (dir / "a").string()) == 0);
  REQUIRE(run("gen-synthetic --n 8 --seed 0 --out " + (dir / "b").string()) == 0);
  const auto lines = read_jsonl(dir / "a/manifest.jsonl");
  CHECK(lines.size() == 8);
  for (const auto& line : lines) {
    CHECK(line.contains("id"));
    CHECK(fs::exists(dir / "a" / line["image"].get<std::string>()));
  }
  CHECK(slurp(dir / "a/manifest.jsonl") == slurp(dir / "b/manifest.jsonl"));
  CHECK(slurp(dir / "a/images/syn0003.npy") == slurp(dir / "b/images/syn0003.npy"));
  CHECK(run("gen-synthetic --n 0 --out " + (dir / "c").string()) == 2);
  CHECK(run("gen-synthetic --out " + (dir / "c").string()) == 2);
  CHECK(run("no-such-command") == 2);
}

TEST_CASE("pretrain, resume, eval and visualize") {
  const fs::path dir = fresh_dir("pipeline");
  REQUIRE(run("gen-synthetic --n 8 --seed 0 --out " + (dir / "corpus").string()) == 0);
  const fs::path config = write_config(dir, 50, 25);
  const std::string cfg = " --config " + config.string();

  REQUIRE(run("pretrain" + cfg + " --until 25") == 0);
  CHECK(read_jsonl(dir / "out/metrics.jsonl").size() == 25);
  CHECK(fs::exists(dir / "out/checkpoints/step_25.ckpt"));
  REQUIRE(run("pretrain" + cfg + " --resume") == 0);
  const auto metrics = read_jsonl(dir / "out/metrics.jsonl");
  REQUIRE(metrics.size() == 50);
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    CHECK(metrics[i]["step"] == i);
    for (const char* key : {"l_itc", "l_itm", "l_mlm", "l_itm_star", "total", "lr"}) CHECK(metrics[i].contains(key));
  }
  CHECK(fs::exists(dir / "out/checkpoints/latest.ckpt"));

  // A straight 50-step run logs the same trajectory.
  const fs::path straight = fresh_dir("pipeline_straight");
  fs::copy(dir / "corpus", straight / "corpus", fs::copy_options::recursive);
  write_config(straight, 50, 0);
  REQUIRE(run("pretrain --config " + (straight / "config.json").string()) == 0);
  const auto reference = read_jsonl(straight / "out/metrics.jsonl");
  REQUIRE(reference.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(std::abs(reference[i]["total"].get<double>() - metrics[i]["total"].get<double>()) <= 1e-6);
  }

  const std::string ckpt = " --checkpoint " + (dir / "out/checkpoints/latest.ckpt").string();
  REQUIRE(run("eval" + cfg + ckpt + " --k 8") == 0);
  const nlohmann::json report = nlohmann::json::parse(slurp(dir / "out/eval_report.json"));
  for (const char* key : {"tr_at_1", "tr_at_5", "tr_at_10", "ir_at_1", "ir_at_5", "ir_at_10"}) {
    CHECK(report.contains(key));
  }
  CHECK(run("eval" + cfg + " --checkpoint " + (dir / "nope.ckpt").string()) == 2);

  const std::string caption = read_jsonl(dir / "corpus/manifest.jsonl")[0]["caption"];
  const std::string word = caption.substr(caption.find(' ') + 1, caption.find(' ', 2) - caption.find(' ') - 1);
  REQUIRE(run("visualize" + cfg + ckpt + " --pair-id syn0000 --word " + word) == 0);
  CHECK(fs::exists(dir / "out/heatmaps" / ("syn0000_" + word + "_50.png")));
  CHECK(run("visualize" + cfg + ckpt + " --pair-id syn0000 --word zebra") == 2);
}

TEST_CASE("config errors exit with the usage code") {
  const fs::path dir = fresh_dir("config_errors");
  std::ofstream(dir / "bad.json") << R"({"corpus": {"train_manifest": "m.jsonl"}, "train": {"bogus": 1}})";
  CHECK(run("pretrain --config " + (dir / "bad.json").string()) == 2);
  CHECK(run("pretrain --config " + (dir / "absent.json").string()) == 2);
}

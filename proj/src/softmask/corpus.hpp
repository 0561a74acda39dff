// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// Image-caption corpora: manifests, the whitespace tokenizer, patch grids, and
// the deterministic colored-shape corpus used throughout the test suite.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "softmask/image.hpp"

namespace softmask {

struct ImageTextPair {
  std::string id;
  Image image;
  std::string caption;
};

enum class Split { kTrain, kVal, kTest };

struct ManifestEntry {
  std::string id;
  std::filesystem::path image;  // resolved against the manifest directory
  std::string caption;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  Split split = Split::kTrain;
};

// Reads a JSON-lines manifest. Relative image paths resolve against the
// manifest's directory. Throws ManifestError on a missing file, a malformed
// line, a duplicate id, an empty caption, or an image path that does not exist.
CorpusManifest load_manifest(const std::filesystem::path& path, Split split = Split::kTrain);
void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
std::vector<ImageTextPair> load_pairs(const CorpusManifest& manifest);

class Vocabulary {
 public:
  static constexpr int kCls = 0;
  static constexpr int kPad = 1;
  static constexpr int kMask = 2;
  static constexpr int kUnk = 3;

  Vocabulary();
  // Special tokens first, then `words` in the given order (duplicates skipped).
  explicit Vocabulary(const std::vector<std::string>& words);

  // Specials plus the sorted set of lowercase words in `captions`.
  static Vocabulary from_captions(const std::vector<std::string>& captions);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(id); }
  bool contains(std::string_view token) const { return index_.contains(std::string(token)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct TokenSequence {
  std::vector<int> ids;      // length max_len, ids[0] == [CLS]
  std::vector<bool> valid;   // false exactly on [PAD]

  int length() const { return static_cast<int>(ids.size()); }
  int content_length() const;  // non-pad tokens including [CLS]

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

std::vector<std::string> split_words(std::string_view caption);
TokenSequence tokenize(std::string_view caption, const Vocabulary& vocab, int max_len);
// Non-special tokens joined by single spaces.
std::string detokenize(const TokenSequence& tokens, const Vocabulary& vocab);

struct PatchGrid {
  Eigen::MatrixXd patches;  // N x (P*P*3), row-major patch order
  int grid_rows = 0;
  int grid_cols = 0;
  int patch_size = 0;

  int count() const { return static_cast<int>(patches.rows()); }
};

PatchGrid patchify(const Image& image, int patch_size);
Image unpatchify(const PatchGrid& grid);

struct SyntheticCorpus {
  CorpusManifest manifest;  // image paths are relative ("images/<id>.npy")
  std::vector<ImageTextPair> pairs;
};

// Colored shapes on a dark background, captioned
// "a <color> <shape> on a dark background". Distinct (color, shape)
// combinations are used until all are exhausted.
SyntheticCorpus make_synthetic_corpus(int n, std::uint64_t seed, int image_size = 16);
// Writes manifest.jsonl and images/<id>.npy under `dir`.
void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);
const std::vector<std::string>& synthetic_colors();
const std::vector<std::string>& synthetic_shapes();

}  // namespace softmask

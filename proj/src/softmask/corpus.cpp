// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "softmask/errors.hpp"

namespace softmask {

namespace fs = std::filesystem;
using json = nlohmann::json;

CorpusManifest load_manifest(const fs::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw ManifestError("manifest not found: " + path.string());
  CorpusManifest manifest;
  manifest.split = split;
  std::unordered_set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ManifestError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("image") || !obj.contains("caption") ||
        !obj["id"].is_string() || !obj["image"].is_string() || !obj["caption"].is_string()) {
      throw ManifestError(path.string() + ":" + std::to_string(line_no) +
                          ": expected {\"id\": str, \"image\": str, \"caption\": str}");
    }
    ManifestEntry entry;
    entry.id = obj["id"].get<std::string>();
    entry.caption = obj["caption"].get<std::string>();
    fs::path image = obj["image"].get<std::string>();
    entry.image = image.is_absolute() ? image : path.parent_path() / image;
    if (!seen.insert(entry.id).second) throw ManifestError("duplicate id in manifest: " + entry.id);
    if (split_words(entry.caption).empty()) throw ManifestError("empty caption for id " + entry.id);
    if (!fs::exists(entry.image)) throw ManifestError("image file does not exist: " + entry.image.string());
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void write_manifest(const fs::path& path, const CorpusManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const ManifestEntry& e : manifest.entries) {
    json obj = {{"id", e.id}, {"image", e.image.generic_string()}, {"caption", e.caption}};
    out << obj.dump() << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<ImageTextPair> load_pairs(const CorpusManifest& manifest) {
  std::vector<ImageTextPair> pairs;
  pairs.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries) {
    pairs.push_back(ImageTextPair{e.id, read_image(e.image), e.caption});
  }
  return pairs;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  tokens_ = {"[CLS]", "[PAD]", "[MASK]", "[UNK]"};
  for (const std::string& w : words) {
    if (std::find(tokens_.begin(), tokens_.end(), w) == tokens_.end()) tokens_.push_back(w);
  }
  for (int i = 0; i < size(); ++i) index_.emplace(tokens_[i], i);
}

Vocabulary Vocabulary::from_captions(const std::vector<std::string>& captions) {
  std::set<std::string> words;
  for (const std::string& c : captions) {
    for (std::string& w : split_words(c)) words.insert(std::move(w));
  }
  return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

int TokenSequence::content_length() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), true));
}

std::vector<std::string> split_words(std::string_view caption) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : caption) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

TokenSequence tokenize(std::string_view caption, const Vocabulary& vocab, int max_len) {
  if (max_len < 2) throw DomainError("tokenize: max_len must be at least 2");
  TokenSequence seq;
  seq.ids.assign(max_len, Vocabulary::kPad);
  seq.valid.assign(max_len, false);
  seq.ids[0] = Vocabulary::kCls;
  seq.valid[0] = true;
  const std::vector<std::string> words = split_words(caption);
  const int kept = std::min<int>(static_cast<int>(words.size()), max_len - 1);
  for (int i = 0; i < kept; ++i) {
    seq.ids[i + 1] = vocab.id(words[i]);
    seq.valid[i + 1] = true;
  }
  return seq;
}

std::string detokenize(const TokenSequence& tokens, const Vocabulary& vocab) {
  std::string out;
  for (int id : tokens.ids) {
    if (id == Vocabulary::kCls || id == Vocabulary::kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

// ---------------------------------------------------------------------------

PatchGrid patchify(const Image& image, int p) {
  if (p < 1 || image.height() % p != 0 || image.width() % p != 0) {
    throw ShapeError("patchify: " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                     " image is not divisible by patch size " + std::to_string(p));
  }
  PatchGrid grid;
  grid.grid_rows = image.height() / p;
  grid.grid_cols = image.width() / p;
  grid.patch_size = p;
  grid.patches.resize(grid.grid_rows * grid.grid_cols, p * p * Image::kChannels);
  for (int gy = 0; gy < grid.grid_rows; ++gy) {
    for (int gx = 0; gx < grid.grid_cols; ++gx) {
      const int n = gy * grid.grid_cols + gx;
      for (int dy = 0; dy < p; ++dy) {
        for (int dx = 0; dx < p; ++dx) {
          for (int c = 0; c < Image::kChannels; ++c) {
            grid.patches(n, (dy * p + dx) * Image::kChannels + c) = image.at(gy * p + dy, gx * p + dx, c);
          }
        }
      }
    }
  }
  return grid;
}

Image unpatchify(const PatchGrid& grid) {
  const int p = grid.patch_size;
  Image image(grid.grid_rows * p, grid.grid_cols * p);
  for (int gy = 0; gy < grid.grid_rows; ++gy) {
    for (int gx = 0; gx < grid.grid_cols; ++gx) {
      const int n = gy * grid.grid_cols + gx;
      for (int dy = 0; dy < p; ++dy) {
        for (int dx = 0; dx < p; ++dx) {
          for (int c = 0; c < Image::kChannels; ++c) {
            image.at(gy * p + dy, gx * p + dx, c) = grid.patches(n, (dy * p + dx) * Image::kChannels + c);
          }
        }
      }
    }
  }
  return image;
}

// ---------------------------------------------------------------------------

namespace {

struct Rgb {
  double r, g, b;
};

const std::vector<Rgb>& palette() {
  static const std::vector<Rgb> colors = {
      {0.90, 0.10, 0.10}, {0.10, 0.80, 0.20}, {0.15, 0.25, 0.95}, {0.95, 0.90, 0.10},
      {0.85, 0.15, 0.85}, {0.10, 0.85, 0.90}, {0.95, 0.95, 0.95}, {0.95, 0.55, 0.05},
  };
  return colors;
}

bool inside(const std::string& shape, double dy, double dx, double r) {
  if (shape == "square") return std::abs(dy) <= r && std::abs(dx) <= r;
  if (shape == "circle") return dy * dy + dx * dx <= r * r;
  if (shape == "triangle") {
    // apex up, base at dy = r
    if (dy < -r || dy > r) return false;
    const double half_width = (dy + r) * 0.5;
    return std::abs(dx) <= half_width;
  }
  // cross
  const double arm = std::max(1.0, r / 2.5);
  return (std::abs(dy) <= arm && std::abs(dx) <= r) || (std::abs(dx) <= arm && std::abs(dy) <= r);
}

}  // namespace

const std::vector<std::string>& synthetic_colors() {
  static const std::vector<std::string> names = {"red",     "green", "blue",  "yellow",
                                                 "magenta", "cyan",  "white", "orange"};
  return names;
}

const std::vector<std::string>& synthetic_shapes() {
  static const std::vector<std::string> names = {"square", "circle", "triangle", "cross"};
  return names;
}

SyntheticCorpus make_synthetic_corpus(int n, std::uint64_t seed, int image_size) {
  if (n < 1) throw DomainError("make_synthetic_corpus: n must be at least 1");
  if (image_size < 8) throw DomainError("make_synthetic_corpus: image_size must be at least 8");
  std::mt19937_64 rng(seed);
  const auto& colors = synthetic_colors();
  const auto& shapes = synthetic_shapes();
  std::vector<std::pair<int, int>> combos;
  for (int c = 0; c < static_cast<int>(colors.size()); ++c) {
    for (int s = 0; s < static_cast<int>(shapes.size()); ++s) combos.emplace_back(c, s);
  }
  std::shuffle(combos.begin(), combos.end(), rng);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticCorpus corpus;
  corpus.manifest.split = Split::kTrain;
  const double base_radius = image_size * 0.28;
  for (int i = 0; i < n; ++i) {
    const auto [ci, si] = combos[i % combos.size()];
    const Rgb color = palette()[ci];
    const std::string& shape = shapes[si];
    const double bg = 0.05 + 0.1 * unit(rng);
    const double cy = image_size / 2.0 - 0.5 + (unit(rng) - 0.5) * image_size * 0.2;
    const double cx = image_size / 2.0 - 0.5 + (unit(rng) - 0.5) * image_size * 0.2;
    const double radius = base_radius * (0.9 + 0.2 * unit(rng));

    Image img(image_size, image_size);
    for (int y = 0; y < image_size; ++y) {
      for (int x = 0; x < image_size; ++x) {
        const double noise = 0.03 * unit(rng);
        const bool on = inside(shape, y - cy, x - cx, radius);
        img.at(y, x, 0) = on ? color.r : bg + noise;
        img.at(y, x, 1) = on ? color.g : bg + noise;
        img.at(y, x, 2) = on ? color.b : bg + noise;
      }
    }
    char id[32];
    std::snprintf(id, sizeof(id), "syn%04d", i);
    std::string caption = "a " + colors[ci] + " " + shape + " on a dark background";
    corpus.manifest.entries.push_back(ManifestEntry{id, fs::path("images") / (std::string(id) + ".npy"), caption});
    corpus.pairs.push_back(ImageTextPair{id, std::move(img), std::move(caption)});
  }
  return corpus;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    write_npy(dir / corpus.manifest.entries[i].image, corpus.pairs[i].image);
  }
  write_manifest(dir / "manifest.jsonl", corpus.manifest);
}

}  // namespace softmask

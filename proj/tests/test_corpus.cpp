// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "softmask/corpus.hpp"
#include "softmask/errors.hpp"
#include "softmask/image.hpp"
#include "test_support.hpp"

using namespace softmask;
using softmask::testing::scratch_dir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Image gradient_image(int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = (y * w * 3 + x * 3 + c) / double(h * w * 3);
    }
  }
  return img;
}

}  // namespace

TEST_CASE("load_manifest preserves order and resolves relative paths") {
  const auto dir = scratch_dir("manifest_order");
  std::filesystem::create_directories(dir / "img");
  write_npy(dir / "img/a.npy", Image(4, 4, 0.5));
  write_npy(dir / "img/b.npy", Image(4, 4, 0.25));
  std::ofstream(dir / "m.jsonl") << R"({"id": "b", "image": "img/b.npy", "caption": "second one"})" << "\n"
                                 << R"({"id": "a", "image": "img/a.npy", "caption": "first"})" << "\n";
  const CorpusManifest m = load_manifest(dir / "m.jsonl");
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[0].id == "b");
  CHECK(m.entries[1].id == "a");
  CHECK(m.entries[0].image == dir / "img/b.npy");
  const auto pairs = load_pairs(m);
  CHECK(pairs[1].image.at(0, 0, 0) == 0.5);
}

TEST_CASE("load_manifest edge cases and errors") {
  const auto dir = scratch_dir("manifest_errors");
  std::ofstream(dir / "empty.jsonl").close();
  CHECK(load_manifest(dir / "empty.jsonl").entries.empty());

  CHECK_THROWS_AS(load_manifest(dir / "absent.jsonl"), ManifestError);

  std::ofstream(dir / "missing_image.jsonl") << R"({"id": "x", "image": "nowhere.npy", "caption": "c"})" << "\n";
  try {
    load_manifest(dir / "missing_image.jsonl");
    FAIL("expected ManifestError");
  } catch (const ManifestError& e) {
    CHECK(std::string(e.what()).find("nowhere.npy") != std::string::npos);
  }

  write_npy(dir / "i.npy", Image(4, 4));
  std::ofstream(dir / "dup.jsonl") << R"({"id": "x", "image": "i.npy", "caption": "c"})" << "\n"
                                   << R"({"id": "x", "image": "i.npy", "caption": "d"})" << "\n";
  CHECK_THROWS_AS(load_manifest(dir / "dup.jsonl"), ManifestError);

  std::ofstream(dir / "bad.jsonl") << "{not json\n";
  CHECK_THROWS_AS(load_manifest(dir / "bad.jsonl"), ManifestError);
}

TEST_CASE("tokenize maps words, prepends CLS, pads and truncates") {
  const Vocabulary vocab(std::vector<std::string>{"a", "dog"});
  const TokenSequence t = tokenize("A dog", vocab, 4);
  CHECK(t.ids == std::vector<int>{Vocabulary::kCls, vocab.id("a"), vocab.id("dog"), Vocabulary::kPad});
  CHECK(t.valid == std::vector<bool>{true, true, true, false});

  const TokenSequence single = tokenize("dog", vocab, 5);
  CHECK(single.ids == std::vector<int>{0, vocab.id("dog"), 1, 1, 1});

  const TokenSequence long_one = tokenize("a a a a a a a a a dog", vocab, 4);
  CHECK(long_one.content_length() == 4);
  CHECK(std::count(long_one.valid.begin(), long_one.valid.end(), true) == 4);

  CHECK(tokenize("cat", vocab, 3).ids[1] == Vocabulary::kUnk);
  CHECK_THROWS_AS(tokenize("dog", vocab, 1), DomainError);
}

TEST_CASE("tokenize is idempotent on detokenized in-vocabulary captions") {
  const Vocabulary vocab(std::vector<std::string>{"red", "square", "blue", "circle"});
  for (const char* caption : {"red square", "blue circle square", "circle"}) {
    const TokenSequence t = tokenize(caption, vocab, 6);
    CHECK(tokenize(detokenize(t, vocab), vocab, 6) == t);
  }
}

TEST_CASE("vocabulary specials are distinct and captions map to valid ids") {
  const Vocabulary vocab = Vocabulary::from_captions({"red square", "Blue circle"});
  CHECK(vocab.size() == 8);
  const std::set<int> specials{Vocabulary::kCls, Vocabulary::kPad, Vocabulary::kMask, Vocabulary::kUnk};
  CHECK(specials.size() == 4);
  for (const char* w : {"red", "square", "blue", "circle"}) {
    CHECK(vocab.contains(w));
    CHECK(vocab.id(w) >= 4);
  }
}

TEST_CASE("patchify lays out row-major channel-last patches") {
  const Image img = gradient_image(4, 4);
  const PatchGrid g = patchify(img, 2);
  CHECK(g.count() == 4);
  CHECK(g.grid_rows == 2);
  CHECK(g.grid_cols == 2);
  // Patch 0 is pixels [0:2, 0:2]; patch 1 starts at x=2.
  CHECK(g.patches(0, 0) == img.at(0, 0, 0));
  CHECK(g.patches(0, 5) == img.at(0, 1, 2));
  CHECK(g.patches(0, 6) == img.at(1, 0, 0));
  CHECK(g.patches(1, 0) == img.at(0, 2, 0));
  CHECK(g.patches(2, 0) == img.at(2, 0, 0));

  const PatchGrid big = patchify(gradient_image(8, 8), 2);
  CHECK(big.count() == 16);
  CHECK(big.grid_rows == 4);
  CHECK(big.grid_cols == 4);

  const PatchGrid flat = patchify(Image(4, 4, 0.3), 2);
  for (int i = 1; i < 4; ++i) CHECK(flat.patches.row(i) == flat.patches.row(0));

  CHECK_THROWS_AS(patchify(Image(5, 4), 2), ShapeError);
}

TEST_CASE("unpatchify inverts patchify bit-exactly") {
  const Image img = gradient_image(8, 12);
  CHECK(unpatchify(patchify(img, 4)) == img);
}

TEST_CASE("npy and png round trips") {
  const auto dir = scratch_dir("image_io");
  const Image img = gradient_image(6, 5);
  write_npy(dir / "x.npy", img);
  CHECK(read_npy(dir / "x.npy") == img);
  write_png(dir / "x.png", img);
  const Image back = read_image(dir / "x.png");
  CHECK(back.height() == 6);
  CHECK(back.width() == 5);
  for (std::size_t i = 0; i < img.data().size(); ++i) CHECK(std::abs(back.data()[i] - img.data()[i]) <= 0.5 / 255 + 1e-12);
}

TEST_CASE("synthetic corpus is a pure function of (n, seed)") {
  const auto a_dir = scratch_dir("syn_a");
  const auto b_dir = scratch_dir("syn_b");
  write_synthetic_corpus(make_synthetic_corpus(4, 7), a_dir);
  write_synthetic_corpus(make_synthetic_corpus(4, 7), b_dir);
  CHECK(slurp(a_dir / "manifest.jsonl") == slurp(b_dir / "manifest.jsonl"));
  for (const auto& entry : load_manifest(a_dir / "manifest.jsonl").entries) {
    CHECK(slurp(entry.image) == slurp(b_dir / "images" / entry.image.filename()));
  }
  CHECK(make_synthetic_corpus(4, 7).pairs[2].image == make_synthetic_corpus(4, 7).pairs[2].image);
}

TEST_CASE("synthetic captions name a color and a shape and are distinct") {
  const SyntheticCorpus one = make_synthetic_corpus(1, 3);
  REQUIRE(one.pairs.size() == 1);
  const Vocabulary vocab = testing::synthetic_vocabulary(one);
  for (const auto& w : split_words(one.pairs[0].caption)) CHECK(vocab.contains(w));

  const SyntheticCorpus eight = make_synthetic_corpus(8, 0);
  std::set<std::string> captions;
  for (const auto& p : eight.pairs) {
    captions.insert(p.caption);
    const auto words = split_words(p.caption);
    REQUIRE(words.size() == 7);
    CHECK(std::count(synthetic_colors().begin(), synthetic_colors().end(), words[1]) == 1);
    CHECK(std::count(synthetic_shapes().begin(), synthetic_shapes().end(), words[2]) == 1);
    for (double v : p.image.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
  CHECK(captions.size() == 8);
  CHECK_THROWS_AS(make_synthetic_corpus(0, 1), DomainError);
}

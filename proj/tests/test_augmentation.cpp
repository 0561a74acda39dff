// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "softmask/augmentation.hpp"
#include "softmask/errors.hpp"
#include "test_support.hpp"

using namespace softmask;

namespace {

Image ramp_image(int size) {
  Image img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      img.at(y, x, 0) = y / double(size);
      img.at(y, x, 1) = x / double(size);
      img.at(y, x, 2) = 0.5;
    }
  }
  return img;
}

bool in_unit_range(const Image& img) {
  for (double v : img.data()) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("disabled augmentation passes images through") {
  AugmentConfig c;
  c.enabled = false;
  const Image img = ramp_image(16);
  CHECK(augment_image(img, c, 3) == img);
}

TEST_CASE("augmentation is seeded and stays in range") {
  AugmentConfig c;
  const Image img = ramp_image(16);
  CHECK(augment_image(img, c, 7) == augment_image(img, c, 7));
  CHECK_FALSE(augment_image(img, c, 7) == augment_image(img, c, 8));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Image out = augment_image(img, c, seed);
    CHECK(out.height() == 16);
    CHECK(out.width() == 16);
    CHECK(in_unit_range(out));
  }
}

TEST_CASE("grayscale with probability one equalizes channels") {
  AugmentConfig c;
  c.grayscale_prob = 1.0;
  c.blur_prob = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Image out = augment_image(ramp_image(16), c, seed);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        CHECK(out.at(y, x, 0) == out.at(y, x, 1));
        CHECK(out.at(y, x, 1) == out.at(y, x, 2));
      }
    }
  }
}

TEST_CASE("config and crop validation") {
  AugmentConfig c;
  c.crop_size = 32;
  CHECK_THROWS_AS(augment_image(ramp_image(16), c, 1), ConfigError);
  c = AugmentConfig{};
  c.grayscale_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AugmentConfig{};
  c.randaugment_ops = {{"shear", 0.5}};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(crop(ramp_image(8), 4, 4, 5, 5), ShapeError);
}

TEST_CASE("individual distortions") {
  const Image img = ramp_image(8);
  CHECK(resize_bilinear(img, 8, 8) == img);
  CHECK(crop(img, 2, 3, 4, 4).at(0, 0, 0) == img.at(2, 3, 0));
  const Image gray = to_grayscale(img);
  CHECK(gray.at(3, 5, 0) == doctest::Approx(0.299 * img.at(3, 5, 0) + 0.587 * img.at(3, 5, 1) + 0.114 * 0.5));
  const Image flat(8, 8, 0.4);
  const Image blurred = gaussian_blur(flat, 1.0);
  for (double v : blurred.data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(gaussian_blur(img, 0.0) == img);
  for (const auto& name : randaugment_op_names()) {
    CHECK(in_unit_range(apply_randaugment_op(img, {name, 0.7}, false)));
    CHECK(in_unit_range(apply_randaugment_op(img, {name, 0.7}, true)));
  }
  CHECK(apply_randaugment_op(img, {"rotate", 0.0}, false) == img);
}

TEST_CASE("make_mmda_pair pairs one distorted image with one masked caption") {
  const SyntheticCorpus corpus = make_synthetic_corpus(2, 4);
  const Vocabulary vocab = testing::synthetic_vocabulary(corpus);
  AugmentConfig c;
  const ImageTextPair& pair = corpus.pairs[0];
  const MmdaSample a = make_mmda_pair(pair, c, true, 0.15, 1, 2, vocab, 8, 4);
  const MmdaSample b = make_mmda_pair(pair, c, true, 0.15, 1, 2, vocab, 8, 4);
  CHECK(a.patches.patches == b.patches.patches);
  CHECK(a.masked.tokens == b.masked.tokens);
  CHECK(a.clean == tokenize(pair.caption, vocab, 8));
  CHECK_FALSE(a.patches.patches == patchify(pair.image, 4).patches);
  CHECK(a.masked.target.positions.size() >= 1);

  const MmdaSample off = make_mmda_pair(pair, c, false, 0.15, 1, 2, vocab, 8, 4);
  CHECK(off.patches.patches == patchify(pair.image, 4).patches);
  CHECK(off.masked.tokens == a.masked.tokens);
}

// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// Multi-modal data augmentation: strong image distortions plus the masked
// caption that feeds ITC, ITM, MLM and the soft-masked ITM alike.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softmask/corpus.hpp"
#include "softmask/image.hpp"
#include "softmask/objectives.hpp"

namespace softmask {

struct RandAugmentOp {
  std::string name;  // rotate, translate, brightness, contrast, posterize, equalize
  double magnitude;  // in [0, 1]

  friend bool operator==(const RandAugmentOp&, const RandAugmentOp&) = default;
};

const std::vector<std::string>& randaugment_op_names();

struct AugmentConfig {
  bool enabled = true;
  int crop_size = 12;
  int randaugment_num_ops = 2;
  std::vector<RandAugmentOp> randaugment_ops = {{"rotate", 0.3},   {"translate", 0.3}, {"brightness", 0.3},
                                                {"contrast", 0.3}, {"posterize", 0.5}, {"equalize", 1.0}};
  double jitter_strength = 0.4;
  double grayscale_prob = 0.2;
  double blur_prob = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 1.0;

  // ConfigError on a violated constraint; crop_size is checked per image.
  void validate() const;

  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

// random crop + resize -> RandAugment -> color jitter -> grayscale -> blur.
// Output stays in [0, 1]. Disabled configs return the input unchanged.
Image augment_image(const Image& image, const AugmentConfig& config, std::uint64_t seed);

// Individual distortions, exposed for testing.
Image resize_bilinear(const Image& image, int height, int width);
Image crop(const Image& image, int top, int left, int height, int width);
Image to_grayscale(const Image& image);
Image gaussian_blur(const Image& image, double sigma);
Image apply_randaugment_op(const Image& image, const RandAugmentOp& op, bool negate);

struct MmdaSample {
  PatchGrid patches;      // augmented (or clean) image
  TokenSequence clean;    // T
  MaskedText masked;      // T-hat and its MLM target
};

// One augmented image and one masked caption per pair per step. With `mmda`
// off the image is left undistorted; caption masking always happens.
MmdaSample make_mmda_pair(const ImageTextPair& pair, const AugmentConfig& config, bool mmda, double mask_rate,
                          std::uint64_t image_seed, std::uint64_t text_seed, const Vocabulary& vocab,
                          int max_text_len, int patch_size);

}  // namespace softmask

// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// Word-conditional Grad-CAM over the fusion encoder's cross-attention and the
// soft feature masks derived from it.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "softmask/autodiff.hpp"
#include "softmask/image.hpp"
#include "softmask/model.hpp"

namespace softmask {

struct GradCamMap {
  Matrix values;  // (L+1) x (N+1), entries >= 0
};

struct SoftMask {
  Eigen::VectorXd weights;  // N+1 nonnegative weights, [CLS] first
  int word_index = 0;
  double target_sum = 0.0;
};

// (1/K) sum_k ReLU(grad_k * A_k).
GradCamMap gradcam_from_gradients(std::span<const Matrix> gradients, std::span<const Matrix> maps);

// Grad-CAM of the scalar `q_plus` (the match logit of a positive pair) w.r.t.
// the probed maps of `trace`. The gradient query runs on its own gradient
// buffer, so nothing flows into parameter gradients. GraphError if the trace
// was recorded without probes.
GradCamMap compute_gradcam(const CrossAttentionTrace& trace, ad::Var q_plus);

// Uniform over non-[PAD] positions, [CLS] included.
int sample_word_index(const std::vector<bool>& valid, std::uint64_t seed);

// Intermediate stages of the mask pipeline for one Grad-CAM row.
struct MaskStages {
  Eigen::VectorXd normalized;  // min-max normalized row in [0, 1]
  Eigen::VectorXd raw_mask;    // 1 - normalized
  Eigen::VectorXd weights;     // rescaled to the target sum
};

MaskStages soft_mask_stages(const Eigen::VectorXd& row, double target_sum);
double default_mask_target(int num_patches);  // (N + 1) / 2

SoftMask build_soft_mask(const GradCamMap& gcam, int word_index, int num_patches);
SoftMask build_soft_mask(const GradCamMap& gcam, int word_index, int num_patches, double target_sum);
// Same pipeline sourced from the layer-averaged cross-attention map.
SoftMask cross_attention_mask_baseline(const CrossAttentionTrace& trace, int word_index, int num_patches);
SoftMask cross_attention_mask_baseline(const CrossAttentionTrace& trace, int word_index, int num_patches,
                                       double target_sum);

VisualEmbedding apply_mask(const VisualEmbedding& image, const SoftMask& mask);

struct SoftMaskedItm {
  ad::Var loss;
  Matrix logits;  // S' x 2
  std::vector<JointEmbedding> joints;
};

// Fuses every masked positive and averages the match cross-entropy.
SoftMaskedItm soft_masked_itm_loss(ModelGraph& graph, std::span<const VisualEmbedding> images,
                                   std::span<const TextEmbedding> texts, std::span<const SoftMask> masks);

// Heat map over the image: the [CLS] entry is dropped, the N patch scores are
// laid out on the grid, bilinearly upsampled, and alpha-blended.
Image render_gradcam_heatmap(const Eigen::VectorXd& row, int grid_rows, int grid_cols, const Image& image,
                             double alpha = 0.6);
std::string heatmap_filename(const std::string& pair_id, const std::string& word, long step);
std::filesystem::path export_gradcam_heatmap(const Eigen::VectorXd& row, int grid_rows, int grid_cols,
                                             const Image& image, const std::string& pair_id,
                                             const std::string& word, long step,
                                             const std::filesystem::path& out_dir);

}  // namespace softmask

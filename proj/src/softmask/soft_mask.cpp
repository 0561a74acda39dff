// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/soft_mask.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "softmask/errors.hpp"
#include "softmask/objectives.hpp"

namespace softmask {

GradCamMap gradcam_from_gradients(std::span<const Matrix> gradients, std::span<const Matrix> maps) {
  if (gradients.size() != maps.size() || maps.empty()) {
    throw ShapeError("gradcam: one gradient per attention map required");
  }
  GradCamMap out{Matrix::Zero(maps[0].rows(), maps[0].cols())};
  for (std::size_t k = 0; k < maps.size(); ++k) {
    if (gradients[k].rows() != maps[k].rows() || gradients[k].cols() != maps[k].cols()) {
      throw ShapeError("gradcam: gradient and map shapes differ");
    }
    out.values += gradients[k].cwiseProduct(maps[k]).cwiseMax(0.0);
  }
  out.values /= static_cast<double>(maps.size());
  return out;
}

GradCamMap compute_gradcam(const CrossAttentionTrace& trace, ad::Var q_plus) {
  if (trace.probes.size() != trace.maps.size() || trace.probes.empty()) {
    throw GraphError("compute_gradcam: trace was recorded without gradient probes");
  }
  if (!q_plus.valid() || q_plus.tape() != trace.probes.front().tape()) {
    throw GraphError("compute_gradcam: score is not on the trace's tape");
  }
  std::vector<Matrix> grads = q_plus.tape()->gradients(q_plus, trace.probes);
  return gradcam_from_gradients(grads, trace.maps);
}

int sample_word_index(const std::vector<bool>& valid, std::uint64_t seed) {
  std::vector<int> eligible;
  for (int i = 0; i < static_cast<int>(valid.size()); ++i) {
    if (valid[i]) eligible.push_back(i);
  }
  if (eligible.empty()) throw DomainError("sample_word_index: no eligible token");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  return eligible[pick(rng)];
}

double default_mask_target(int num_patches) { return (num_patches + 1) / 2.0; }

MaskStages soft_mask_stages(const Eigen::VectorXd& row, double target_sum) {
  if (row.size() == 0) throw ShapeError("soft mask: empty row");
  if (!(target_sum > 0.0)) throw DomainError("soft mask: target sum must be positive");
  MaskStages s;
  const double lo = row.minCoeff();
  const double hi = row.maxCoeff();
  if (hi > lo) {
    s.normalized = ((row.array() - lo) / (hi - lo)).cwiseMax(0.0).cwiseMin(1.0).matrix();
  } else {
    s.normalized = Eigen::VectorXd::Zero(row.size());
  }
  s.raw_mask = (1.0 - s.normalized.array()).matrix();
  // After min-max the minimum entry maps to a raw weight of 1, so the sum is positive.
  s.weights = s.raw_mask * (target_sum / s.raw_mask.sum());
  return s;
}

SoftMask build_soft_mask(const GradCamMap& gcam, int word_index, int num_patches) {
  return build_soft_mask(gcam, word_index, num_patches, default_mask_target(num_patches));
}

SoftMask build_soft_mask(const GradCamMap& gcam, int word_index, int num_patches, double target_sum) {
  if (word_index < 0 || word_index >= gcam.values.rows()) throw ShapeError("build_soft_mask: word index out of range");
  if (gcam.values.cols() != num_patches + 1) throw ShapeError("build_soft_mask: map width must be N+1");
  const Eigen::VectorXd row = gcam.values.row(word_index).transpose();
  return SoftMask{soft_mask_stages(row, target_sum).weights, word_index, target_sum};
}

SoftMask cross_attention_mask_baseline(const CrossAttentionTrace& trace, int word_index, int num_patches) {
  return cross_attention_mask_baseline(trace, word_index, num_patches, default_mask_target(num_patches));
}

SoftMask cross_attention_mask_baseline(const CrossAttentionTrace& trace, int word_index, int num_patches,
                                       double target_sum) {
  return build_soft_mask(GradCamMap{trace.mean_map()}, word_index, num_patches, target_sum);
}

VisualEmbedding apply_mask(const VisualEmbedding& image, const SoftMask& mask) {
  if (mask.weights.size() != image.tokens.rows()) {
    throw ShapeError("apply_mask: mask has " + std::to_string(mask.weights.size()) + " weights for " +
                     std::to_string(image.tokens.rows()) + " image tokens");
  }
  return VisualEmbedding{ad::scale_rows(image.tokens, mask.weights)};
}

SoftMaskedItm soft_masked_itm_loss(ModelGraph& graph, std::span<const VisualEmbedding> images,
                                   std::span<const TextEmbedding> texts, std::span<const SoftMask> masks) {
  if (images.size() != texts.size() || images.size() != masks.size() || images.empty()) {
    throw ShapeError("soft_masked_itm_loss: one image, text and mask per positive pair");
  }
  SoftMaskedItm out;
  std::vector<ad::Var> logits;
  for (std::size_t i = 0; i < images.size(); ++i) {
    FusionOutput fused = graph.fuse(apply_mask(images[i], masks[i]), texts[i]);
    logits.push_back(graph.itm_logits(ad::row(fused.joint.tokens, 0)));
    out.joints.push_back(fused.joint);
  }
  ad::Var stacked = ad::vconcat(logits);
  std::vector<int> labels(images.size(), kItmMatch);
  out.loss = itm_loss_graph(stacked, labels);
  out.logits = stacked.value();
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double bilinear(const Matrix& grid, double gy, double gx) {
  const double y = std::clamp(gy, 0.0, static_cast<double>(grid.rows() - 1));
  const double x = std::clamp(gx, 0.0, static_cast<double>(grid.cols() - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min<int>(y0 + 1, static_cast<int>(grid.rows()) - 1);
  const int x1 = std::min<int>(x0 + 1, static_cast<int>(grid.cols()) - 1);
  const double fy = y - y0;
  const double fx = x - x0;
  return (1 - fy) * ((1 - fx) * grid(y0, x0) + fx * grid(y0, x1)) + fy * ((1 - fx) * grid(y1, x0) + fx * grid(y1, x1));
}

double ramp(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Image render_gradcam_heatmap(const Eigen::VectorXd& row, int grid_rows, int grid_cols, const Image& image,
                             double alpha) {
  if (row.size() != static_cast<Eigen::Index>(grid_rows) * grid_cols + 1) {
    throw ShapeError("heatmap: row length must be N+1 for the given grid");
  }
  if (image.height() % grid_rows != 0 || image.width() % grid_cols != 0) {
    throw ShapeError("heatmap: grid does not tile the image");
  }
  Matrix grid(grid_rows, grid_cols);
  for (int r = 0; r < grid_rows; ++r) {
    for (int c = 0; c < grid_cols; ++c) grid(r, c) = std::max(0.0, row(1 + r * grid_cols + c));
  }
  const double peak = grid.maxCoeff();
  if (peak > 0.0) grid /= peak;

  const double cell_h = static_cast<double>(image.height()) / grid_rows;
  const double cell_w = static_cast<double>(image.width()) / grid_cols;
  Image out = image;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const double h = bilinear(grid, (y + 0.5) / cell_h - 0.5, (x + 0.5) / cell_w - 0.5);
      const double w = alpha * h;
      const double heat[3] = {ramp(1.5 - std::abs(4 * h - 3)), ramp(1.5 - std::abs(4 * h - 2)),
                              ramp(1.5 - std::abs(4 * h - 1))};
      for (int ch = 0; ch < Image::kChannels; ++ch) {
        out.at(y, x, ch) = (1.0 - w) * image.at(y, x, ch) + w * heat[ch];
      }
    }
  }
  return out;
}

std::string heatmap_filename(const std::string& pair_id, const std::string& word, long step) {
  return pair_id + "_" + word + "_" + std::to_string(step) + ".png";
}

std::filesystem::path export_gradcam_heatmap(const Eigen::VectorXd& row, int grid_rows, int grid_cols,
                                             const Image& image, const std::string& pair_id,
                                             const std::string& word, long step,
                                             const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const std::filesystem::path path = out_dir / heatmap_filename(pair_id, word, step);
  write_png(path, render_gradcam_heatmap(row, grid_rows, grid_cols, image));
  return path;
}

}  // namespace softmask

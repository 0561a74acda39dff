// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// Contrastive (ITC and focal ITC), matching (ITM) and masked-language (MLM)
// objectives, the momentum feature queue, and hard-negative sampling.
//
// Each objective exists twice: a plain-value function used for scoring and
// testing, and a graph builder used by the trainer. The two are written
// independently and cross-checked in the test suite.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "softmask/autodiff.hpp"
#include "softmask/corpus.hpp"
#include "softmask/model.hpp"

namespace softmask {

// FIFO bank of L2-normalized projected [CLS] features for both modalities.
class QueueState {
 public:
  QueueState() = default;
  QueueState(int capacity, int dim);

  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  int size() const { return size_; }
  bool full() const { return size_ == capacity_; }

  // Rows ordered oldest to newest.
  Matrix image_feats() const { return ordered(image_); }
  Matrix text_feats() const { return ordered(text_); }

  // Appends rows, evicting the oldest entries beyond capacity. Rows are
  // normalized on insertion. DomainError if more rows than capacity.
  void enqueue(const Matrix& image_rows, const Matrix& text_rows);

  // Raw ring storage, for checkpoints.
  const Matrix& image_ring() const { return image_; }
  const Matrix& text_ring() const { return text_; }
  int cursor() const { return cursor_; }
  static QueueState restore(Matrix image_ring, Matrix text_ring, int cursor, int size);

  friend bool operator==(const QueueState&, const QueueState&) = default;

 private:
  Matrix ordered(const Matrix& ring) const;

  int capacity_ = 0;
  int dim_ = 0;
  int size_ = 0;
  int cursor_ = 0;  // next slot to write
  Matrix image_;
  Matrix text_;
};

QueueState enqueue(QueueState queue, const Matrix& image_rows, const Matrix& text_rows);

// Similarity score between two projected [CLS] features.
double similarity(std::span<const double> image_proj, std::span<const double> text_proj);

struct BatchScores {
  Matrix sim_i2t;  // B x (B + Q): batch candidates first, then the queue
  Matrix sim_t2i;
  double temperature = 1.0;
  Matrix prob_i2t;  // row softmax of sim / temperature
  Matrix prob_t2i;
  Eigen::VectorXd p_v2t;  // probability of the positive, prob_i2t(i, i)
  Eigen::VectorXd p_t2v;

  int batch() const { return static_cast<int>(sim_i2t.rows()); }
};

// Queries are the online projections; candidates are the momentum projections
// of the batch followed by the queue. Inputs must be L2-normalized rows.
BatchScores itc_probabilities(const Matrix& image_query, const Matrix& text_query, const Matrix& image_keys,
                              const Matrix& text_keys, const QueueState& queue, double temperature);
// Queries double as their own candidates.
BatchScores itc_probabilities(const Matrix& image_feats, const Matrix& text_feats, const QueueState& queue,
                              double temperature);

double itc_loss(const BatchScores& scores);
double focal_itc_loss(const BatchScores& scores, double gamma);
// -(1 - p)^gamma * log p, one direction of one example.
double focal_term(double p, double gamma);

enum class NegativeSampling { kHard, kUniform };

struct ItmComposition {
  std::vector<int> neg_text_for_image;  // index into the batch, per image
  std::vector<int> neg_image_for_text;  // index into the batch, per text
  int positives = 0;
  int negative_texts = 0;
  int negative_images = 0;
  int total() const { return positives + negative_texts + negative_images; }
};

// Per-row sampling weights over in-batch candidates with the positive removed.
Matrix negative_weights(const Matrix& in_batch_sim, double temperature);
ItmComposition sample_hard_negatives(const BatchScores& scores, std::uint64_t seed,
                                     NegativeSampling mode = NegativeSampling::kHard);

// ITM label convention: class 1 is "match".
constexpr int kItmMatch = 1;
constexpr int kItmMismatch = 0;

struct ItmBatch {
  Matrix logits;            // S x 2
  std::vector<int> labels;  // kItmMatch or kItmMismatch
  ItmComposition composition;
  int size() const { return static_cast<int>(labels.size()); }
};

Eigen::Vector2d itm_logits(const Eigen::VectorXd& m0, const Matrix& weight, const Matrix& bias);
double cross_entropy(std::span<const double> logits, int target);
double itm_loss(const ItmBatch& batch);

struct MlmTarget {
  std::vector<int> positions;
  std::vector<int> original_ids;
  bool empty() const { return positions.empty(); }
};

struct MaskedText {
  TokenSequence tokens;
  MlmTarget target;
  int sampled = 0;      // positions chosen before the forced-one rule
  bool forced = false;  // true when the forced-one rule fired
};

// Independently replaces each non-[CLS], non-[PAD] token by [MASK] with
// probability `rate`; if nothing was chosen, one eligible position is forced.
MaskedText mask_text(const TokenSequence& tokens, double rate, std::uint64_t seed);

// Mean cross-entropy of h_mlm over the masked positions of `joint`.
double mlm_loss(const Matrix& joint, const MlmTarget& target, const Matrix& weight, const Matrix& bias);

// ---------------------------------------------------------------------------
// Graph builders.

// Focal ITC over online queries vs fixed candidate rows; gamma == 0 is plain
// ITC. Fills `scores` with the values seen by the graph when non-null.
ad::Var itc_loss_graph(ad::Var image_query, ad::Var text_query, const Matrix& image_candidates,
                       const Matrix& text_candidates, ad::Var temperature, double gamma,
                       BatchScores* scores = nullptr);

// Mean cross-entropy of S x 2 logits against labels.
ad::Var itm_loss_graph(ad::Var logits, std::span<const int> labels);

ad::Var mlm_loss_graph(ModelGraph& graph, const JointEmbedding& joint, const MlmTarget& target);

}  // namespace softmask

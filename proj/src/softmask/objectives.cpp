// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "softmask/errors.hpp"

namespace softmask {

QueueState::QueueState(int capacity, int dim)
    : capacity_(capacity), dim_(dim), image_(Matrix::Zero(capacity, dim)), text_(Matrix::Zero(capacity, dim)) {
  if (capacity < 0 || dim < 1) throw DomainError("queue needs capacity >= 0 and dim >= 1");
}

Matrix QueueState::ordered(const Matrix& ring) const {
  Matrix out(size_, dim_);
  // Oldest entry sits at cursor when full, at 0 otherwise.
  const int start = full() ? cursor_ : 0;
  for (int i = 0; i < size_; ++i) out.row(i) = ring.row((start + i) % std::max(capacity_, 1));
  return out;
}

void QueueState::enqueue(const Matrix& image_rows, const Matrix& text_rows) {
  if (image_rows.rows() != text_rows.rows()) throw ShapeError("enqueue: modality batch sizes differ");
  if (image_rows.rows() > capacity_) {
    throw DomainError("enqueue: batch of " + std::to_string(image_rows.rows()) + " exceeds queue capacity " +
                      std::to_string(capacity_));
  }
  if (image_rows.rows() > 0 && (image_rows.cols() != dim_ || text_rows.cols() != dim_)) {
    throw ShapeError("enqueue: feature dimension mismatch");
  }
  for (Eigen::Index r = 0; r < image_rows.rows(); ++r) {
    image_.row(cursor_) = image_rows.row(r).normalized();
    text_.row(cursor_) = text_rows.row(r).normalized();
    cursor_ = (cursor_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }
}

QueueState QueueState::restore(Matrix image_ring, Matrix text_ring, int cursor, int size) {
  QueueState q;
  q.capacity_ = static_cast<int>(image_ring.rows());
  q.dim_ = static_cast<int>(image_ring.cols());
  if (text_ring.rows() != image_ring.rows() || text_ring.cols() != image_ring.cols() || size < 0 ||
      size > q.capacity_ || cursor < 0 || (q.capacity_ > 0 && cursor >= q.capacity_)) {
    throw ShapeError("inconsistent queue state");
  }
  q.image_ = std::move(image_ring);
  q.text_ = std::move(text_ring);
  q.cursor_ = cursor;
  q.size_ = size;
  return q;
}

QueueState enqueue(QueueState queue, const Matrix& image_rows, const Matrix& text_rows) {
  queue.enqueue(image_rows, text_rows);
  return queue;
}

double similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("similarity: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------------------

namespace {

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      out(r, c) = std::exp(logits(r, c) - mx);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

Matrix candidates(const Matrix& batch_keys, const Matrix& queue_rows) {
  Matrix all(batch_keys.rows() + queue_rows.rows(), batch_keys.cols());
  all.topRows(batch_keys.rows()) = batch_keys;
  if (queue_rows.rows() > 0) all.bottomRows(queue_rows.rows()) = queue_rows;
  return all;
}

}  // namespace

BatchScores itc_probabilities(const Matrix& image_query, const Matrix& text_query, const Matrix& image_keys,
                              const Matrix& text_keys, const QueueState& queue, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("itc: temperature must be positive");
  const Eigen::Index b = image_query.rows();
  if (b < 1) throw DomainError("itc: empty batch");
  if (text_query.rows() != b || image_keys.rows() != b || text_keys.rows() != b) {
    throw ShapeError("itc: batch sizes differ between modalities");
  }
  if (queue.size() != queue.capacity()) throw DomainError("itc: queue must be full");
  if (queue.capacity() > 0 && queue.dim() != image_query.cols()) throw ShapeError("itc: queue dimension mismatch");
  BatchScores s;
  s.temperature = temperature;
  s.sim_i2t = image_query * candidates(text_keys, queue.text_feats()).transpose();
  s.sim_t2i = text_query * candidates(image_keys, queue.image_feats()).transpose();
  s.prob_i2t = softmax_rows(s.sim_i2t / temperature);
  s.prob_t2i = softmax_rows(s.sim_t2i / temperature);
  s.p_v2t = s.prob_i2t.diagonal().head(b);
  s.p_t2v = s.prob_t2i.diagonal().head(b);
  return s;
}

BatchScores itc_probabilities(const Matrix& image_feats, const Matrix& text_feats, const QueueState& queue,
                              double temperature) {
  return itc_probabilities(image_feats, text_feats, image_feats, text_feats, queue, temperature);
}

double focal_term(double p, double gamma) {
  if (gamma < 0.0) throw DomainError("focal: gamma must be >= 0");
  const double modulator = gamma == 0.0 ? 1.0 : std::pow(1.0 - p, gamma);
  return -modulator * std::log(p);
}

double itc_loss(const BatchScores& scores) {
  const int b = scores.batch();
  double total = 0.0;
  for (int i = 0; i < b; ++i) total += std::log(scores.p_v2t[i]) + std::log(scores.p_t2v[i]);
  return -total / (2.0 * b);
}

double focal_itc_loss(const BatchScores& scores, double gamma) {
  if (gamma < 0.0) throw DomainError("focal_itc_loss: gamma must be >= 0");
  const int b = scores.batch();
  double total = 0.0;
  for (int i = 0; i < b; ++i) total += focal_term(scores.p_v2t[i], gamma) + focal_term(scores.p_t2v[i], gamma);
  return total / (2.0 * b);
}

// ---------------------------------------------------------------------------

Matrix negative_weights(const Matrix& in_batch_sim, double temperature) {
  const Eigen::Index b = in_batch_sim.rows();
  Matrix w = softmax_rows(in_batch_sim.leftCols(b) / temperature);
  for (Eigen::Index i = 0; i < b; ++i) {
    w(i, i) = 0.0;
    const double total = w.row(i).sum();
    if (total > 0.0) {
      w.row(i) /= total;
    } else {
      // every off-diagonal weight underflowed; fall back to uniform
      w.row(i).setConstant(1.0 / static_cast<double>(b - 1));
      w(i, i) = 0.0;
    }
  }
  return w;
}

ItmComposition sample_hard_negatives(const BatchScores& scores, std::uint64_t seed, NegativeSampling mode) {
  const int b = scores.batch();
  if (b < 2) throw DomainError("hard negatives need a batch of at least 2");
  Matrix w_i2t = negative_weights(scores.sim_i2t, scores.temperature);
  Matrix w_t2i = negative_weights(scores.sim_t2i, scores.temperature);
  if (mode == NegativeSampling::kUniform) {
    w_i2t.setConstant(1.0);
    w_t2i.setConstant(1.0);
    w_i2t.diagonal().setZero();
    w_t2i.diagonal().setZero();
  }
  std::mt19937_64 rng(seed);
  auto draw = [&rng, b](const Matrix& w, int row) {
    std::vector<double> weights(b);
    for (int j = 0; j < b; ++j) weights[j] = w(row, j);
    std::discrete_distribution<int> dist(weights.begin(), weights.end());
    return dist(rng);
  };
  ItmComposition comp;
  comp.positives = b;
  for (int i = 0; i < b; ++i) comp.neg_text_for_image.push_back(draw(w_i2t, i));
  for (int i = 0; i < b; ++i) comp.neg_image_for_text.push_back(draw(w_t2i, i));
  comp.negative_texts = b;
  comp.negative_images = b;
  return comp;
}

Eigen::Vector2d itm_logits(const Eigen::VectorXd& m0, const Matrix& weight, const Matrix& bias) {
  if (weight.rows() != m0.size() || weight.cols() != 2 || bias.size() != 2) {
    throw ShapeError("itm_logits: expected a D x 2 weight and 2 biases for D = " + std::to_string(m0.size()));
  }
  Eigen::Vector2d out = weight.transpose() * m0;
  out[0] += bias(0);
  out[1] += bias(1);
  return out;
}

double cross_entropy(std::span<const double> logits, int target) {
  if (target < 0 || target >= static_cast<int>(logits.size())) throw ShapeError("cross_entropy: bad target");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - mx);
  return -(logits[target] - mx - std::log(total));
}

double itm_loss(const ItmBatch& batch) {
  if (batch.size() < 1) throw DomainError("itm_loss: empty batch");
  if (batch.logits.rows() != batch.size() || batch.logits.cols() != 2) throw ShapeError("itm_loss: logits must be S x 2");
  double total = 0.0;
  for (int i = 0; i < batch.size(); ++i) {
    const double row[2] = {batch.logits(i, 0), batch.logits(i, 1)};
    total += cross_entropy(row, batch.labels[i]);
  }
  return total / batch.size();
}

MaskedText mask_text(const TokenSequence& tokens, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) throw DomainError("mask_text: rate must lie in (0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution pick(rate);
  MaskedText out;
  out.tokens = tokens;
  std::vector<int> eligible;
  for (int i = 1; i < tokens.length(); ++i) {
    if (!tokens.valid[i]) continue;
    eligible.push_back(i);
    if (pick(rng)) out.target.positions.push_back(i);
  }
  if (eligible.empty()) throw DomainError("mask_text: no maskable token");
  out.sampled = static_cast<int>(out.target.positions.size());
  if (out.target.positions.empty()) {
    std::uniform_int_distribution<std::size_t> which(0, eligible.size() - 1);
    out.target.positions.push_back(eligible[which(rng)]);
    out.forced = true;
  }
  for (int pos : out.target.positions) {
    out.target.original_ids.push_back(tokens.ids[pos]);
    out.tokens.ids[pos] = Vocabulary::kMask;
  }
  return out;
}

double mlm_loss(const Matrix& joint, const MlmTarget& target, const Matrix& weight, const Matrix& bias) {
  if (target.empty()) throw DomainError("mlm_loss: empty target");
  if (weight.rows() != joint.cols() || bias.size() != weight.cols()) throw ShapeError("mlm_loss: head shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < target.positions.size(); ++i) {
    const int pos = target.positions[i];
    if (pos < 0 || pos >= joint.rows()) throw ShapeError("mlm_loss: position out of range");
    Eigen::RowVectorXd logits = joint.row(pos) * weight + bias.row(0);
    std::vector<double> row(logits.data(), logits.data() + logits.size());
    total += cross_entropy(row, target.original_ids[i]);
  }
  return total / static_cast<double>(target.positions.size());
}

// ---------------------------------------------------------------------------

ad::Var itc_loss_graph(ad::Var image_query, ad::Var text_query, const Matrix& image_candidates,
                       const Matrix& text_candidates, ad::Var temperature, double gamma, BatchScores* scores) {
  if (gamma < 0.0) throw DomainError("focal_itc_loss: gamma must be >= 0");
  if (!(temperature.scalar() > 0.0)) throw DomainError("itc: temperature must be positive");
  ad::Tape& tape = *image_query.tape();
  const int b = static_cast<int>(image_query.rows());
  ad::Var inv_t = ad::pow(temperature, -1.0);
  ad::Var logits_i2t = ad::scale_by(ad::matmul_nt(image_query, tape.constant(text_candidates)), inv_t);
  ad::Var logits_t2i = ad::scale_by(ad::matmul_nt(text_query, tape.constant(image_candidates)), inv_t);
  ad::Var lp_i2t = ad::log_softmax_rows(logits_i2t);
  ad::Var lp_t2i = ad::log_softmax_rows(logits_t2i);
  std::vector<std::pair<int, int>> diag;
  for (int i = 0; i < b; ++i) diag.emplace_back(i, i);
  ad::Var log_p = ad::vconcat(std::vector<ad::Var>{ad::gather_entries(lp_i2t, diag), ad::gather_entries(lp_t2i, diag)});
  ad::Var terms = log_p;
  if (gamma != 0.0) {
    ad::Var modulator = ad::pow(ad::affine(ad::exp(log_p), -1.0, 1.0), gamma);
    terms = ad::mul(modulator, log_p);
  }
  if (scores) {
    const double t = temperature.scalar();
    scores->temperature = t;
    scores->sim_i2t = logits_i2t.value() * t;
    scores->sim_t2i = logits_t2i.value() * t;
    scores->prob_i2t = lp_i2t.value().array().exp().matrix();
    scores->prob_t2i = lp_t2i.value().array().exp().matrix();
    scores->p_v2t = scores->prob_i2t.diagonal().head(b);
    scores->p_t2v = scores->prob_t2i.diagonal().head(b);
  }
  return ad::neg(ad::mean(terms));
}

ad::Var itm_loss_graph(ad::Var logits, std::span<const int> labels) {
  if (labels.empty()) throw DomainError("itm_loss: empty batch");
  return ad::mean(ad::cross_entropy_rows(logits, labels));
}

ad::Var mlm_loss_graph(ModelGraph& graph, const JointEmbedding& joint, const MlmTarget& target) {
  if (target.empty()) throw DomainError("mlm_loss: empty target");
  ad::Var rows = ad::gather_rows(joint.tokens, target.positions);
  return ad::mean(ad::cross_entropy_rows(graph.mlm_logits(rows), target.original_ids));
}

}  // namespace softmask

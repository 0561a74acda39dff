// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// Dual unimodal encoders, the cross-attention fusion encoder, and the
// projection / classification heads, all expressed as differentiable graphs
// on an ad::Tape.

#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "softmask/autodiff.hpp"
#include "softmask/corpus.hpp"

namespace softmask {

using ad::Matrix;

struct ModelConfig {
  int embed_dim = 64;       // D
  int patch_size = 4;       // P
  int image_size = 16;      // square images
  int max_text_len = 8;     // L + 1, [CLS] included
  int fusion_layers = 2;    // K
  int num_heads = 4;
  int vision_layers = 2;
  int text_layers = 2;
  int vocab_size = 16;
  int proj_dim = 32;
  int mlp_ratio = 2;
  double init_temperature = 0.07;

  int num_patches() const { return (image_size / patch_size) * (image_size / patch_size); }  // N
  int image_tokens() const { return num_patches() + 1; }
  int text_tokens() const { return max_text_len; }
  int head_dim() const { return embed_dim / num_heads; }

  // Throws ConfigError naming the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Ordered, named parameter arrays. Indices are stable for the life of a store.
class ParamStore {
 public:
  int add(std::string name, Matrix value);
  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int i) const { return names_.at(i); }
  int index(std::string_view name) const;
  Matrix& value(int i) { return values_.at(i); }
  const Matrix& value(int i) const { return values_.at(i); }
  std::vector<Matrix>& values() { return values_; }
  const std::vector<Matrix>& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t scalar_count() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, int> index_;
};

struct LinearIdx {
  int weight = -1;  // in x out, applied as x * W + b
  int bias = -1;
};

struct NormIdx {
  int gamma = -1;
  int beta = -1;
};

struct AttentionIdx {
  LinearIdx query, key, value, output;
};

struct BlockIdx {
  NormIdx self_norm;
  AttentionIdx self_attn;
  bool has_cross = false;
  NormIdx cross_norm;
  AttentionIdx cross_attn;
  NormIdx mlp_norm;
  LinearIdx fc1, fc2;
};

struct ModelLayout {
  LinearIdx patch_embed;
  int image_cls = -1;
  int image_pos = -1;
  std::vector<BlockIdx> vision_blocks;
  NormIdx vision_norm;

  int token_embed = -1;
  int text_pos = -1;
  std::vector<BlockIdx> text_blocks;
  NormIdx text_norm;

  std::vector<BlockIdx> fusion_blocks;
  NormIdx fusion_norm;

  LinearIdx proj_image;  // h_v
  LinearIdx proj_text;   // h_t
  LinearIdx itm_head;    // h_itm, D -> 2
  LinearIdx mlm_head;    // h_mlm, D -> vocab
  int log_temperature = -1;
};

struct Model {
  ModelConfig config;
  ModelLayout layout;
  ParamStore params;
};

// Shadow copy of every online parameter, updated by exponential averaging.
struct MomentumState {
  ParamStore shadow;
  double momentum = 0.995;
};

// Small random init; ConfigError on an invalid config. Same seed, same bits.
Model init_model(const ModelConfig& config, std::uint64_t seed);
MomentumState make_momentum_state(const Model& model, double momentum);
// shadow <- m * shadow + (1 - m) * online, elementwise.
void momentum_update(const ParamStore& online, MomentumState& state);

struct ForwardCounters {
  std::atomic<long> image{0};
  std::atomic<long> text{0};
  std::atomic<long> fusion{0};
};

struct VisualEmbedding {
  ad::Var tokens;  // (N+1) x D, row 0 is the [CLS] token
};

struct TextEmbedding {
  ad::Var tokens;            // (L+1) x D, row 0 is the [CLS] token
  std::vector<bool> valid;   // false on [PAD]
};

struct JointEmbedding {
  ad::Var tokens;  // (L+1) x D, row 0 is m0
};

// Post-softmax cross-attention probabilities of every fusion layer, averaged
// over heads, shape (L+1) x (N+1). When probed, `probes[k]` is a zero-valued
// leaf added to every head's probabilities of layer k, so the gradient of a
// downstream scalar w.r.t. the probe is its gradient w.r.t. the map.
struct CrossAttentionTrace {
  std::vector<Matrix> maps;
  std::vector<std::vector<Matrix>> head_maps;  // filled only with keep_heads
  std::vector<ad::Var> probes;
  std::vector<bool> query_valid;  // rows of [PAD] queries are ignorable

  Matrix mean_map() const;
};

struct FuseOptions {
  bool probe = false;
  bool keep_heads = false;
  // Initial probe values per fusion layer, zero when empty. Nonzero values
  // shift the attention maps, which finite-difference checks rely on.
  std::vector<Matrix> probe_values;
};

struct FusionOutput {
  JointEmbedding joint;
  CrossAttentionTrace trace;
};

// Binds a parameter store onto a tape and runs the model's forward passes.
// With trainable == false every parameter enters the tape as a constant.
class ModelGraph {
 public:
  ModelGraph(ad::Tape& tape, const Model& model, bool trainable, ForwardCounters* counters = nullptr);
  ModelGraph(ad::Tape& tape, const Model& model, const ParamStore& params, bool trainable,
             ForwardCounters* counters = nullptr);

  ad::Tape& tape() { return tape_; }
  const ModelConfig& config() const { return config_; }

  VisualEmbedding encode_image(const PatchGrid& patches);
  TextEmbedding encode_text(const TokenSequence& tokens);
  FusionOutput fuse(const VisualEmbedding& image, const TextEmbedding& text, FuseOptions options = {});

  // L2-normalized projections of a [CLS] row, 1 x proj_dim.
  ad::Var project_image(ad::Var v0);
  ad::Var project_text(ad::Var t0);
  ad::Var itm_logits(ad::Var m0);        // 1 x 2, index 1 = match
  ad::Var mlm_logits(ad::Var rows);      // R x vocab
  ad::Var temperature();                 // 1 x 1, exp of the free parameter

  ad::Var param(int index);
  // (store index, tape variable) for every parameter touched so far.
  std::vector<std::pair<int, ad::Var>> bound() const;

 private:
  ad::Var linear(const LinearIdx& idx, ad::Var x);
  ad::Var norm(const NormIdx& idx, ad::Var x);
  ad::Var attention(const AttentionIdx& idx, ad::Var query_in, ad::Var kv_in, const std::vector<bool>* key_valid,
                    ad::Var probe, Matrix* mean_probs, std::vector<Matrix>* head_probs);
  ad::Var block(const BlockIdx& idx, ad::Var x, const std::vector<bool>* self_valid, ad::Var kv,
                ad::Var probe, Matrix* mean_probs, std::vector<Matrix>* head_probs);

  ad::Tape& tape_;
  const ModelConfig& config_;
  const ModelLayout& layout_;
  const ParamStore& params_;
  bool trainable_;
  ForwardCounters* counters_;
  std::vector<ad::Var> bound_;
};

}  // namespace softmask

// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/model.hpp"

#include <cmath>
#include <random>

#include "softmask/errors.hpp"

namespace softmask {

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid model config: " + what);
  };
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(num_heads >= 1, "num_heads must be >= 1");
  require(embed_dim % num_heads == 0, "embed_dim (" + std::to_string(embed_dim) +
                                          ") must be divisible by num_heads (" + std::to_string(num_heads) + ")");
  require(patch_size >= 1, "patch_size must be >= 1");
  require(image_size >= 1 && image_size % patch_size == 0, "image_size must be a positive multiple of patch_size");
  require(max_text_len >= 2, "max_text_len must be >= 2");
  require(fusion_layers >= 1, "fusion_layers must be >= 1");
  require(vision_layers >= 1, "vision_layers must be >= 1");
  require(text_layers >= 1, "text_layers must be >= 1");
  require(vocab_size >= 4, "vocab_size must be >= 4");
  require(proj_dim >= 1, "proj_dim must be >= 1");
  require(mlp_ratio >= 1, "mlp_ratio must be >= 1");
  require(init_temperature > 0.0, "init_temperature must be positive");
}

int ParamStore::add(std::string name, Matrix value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter " + name);
  const int i = size();
  index_.emplace(name, i);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return i;
}

int ParamStore::index(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter " + std::string(name));
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const Matrix& m : values_) n += static_cast<std::size_t>(m.size());
  return n;
}

// ---------------------------------------------------------------------------

namespace {

class Initializer {
 public:
  Initializer(ParamStore& store, std::uint64_t seed) : store_(store), rng_(seed) {}

  int normal(const std::string& name, int rows, int cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
    return store_.add(name, std::move(m));
  }

  int constant(const std::string& name, int rows, int cols, double v) {
    return store_.add(name, Matrix::Constant(rows, cols, v));
  }

  LinearIdx linear(const std::string& name, int in, int out) {
    LinearIdx idx;
    idx.weight = normal(name + ".weight", in, out, 1.0 / std::sqrt(static_cast<double>(in)));
    idx.bias = constant(name + ".bias", 1, out, 0.0);
    return idx;
  }

  NormIdx norm(const std::string& name, int dim) {
    return NormIdx{constant(name + ".gamma", 1, dim, 1.0), constant(name + ".beta", 1, dim, 0.0)};
  }

  AttentionIdx attention(const std::string& name, int dim) {
    return AttentionIdx{linear(name + ".query", dim, dim), linear(name + ".key", dim, dim),
                        linear(name + ".value", dim, dim), linear(name + ".output", dim, dim)};
  }

  BlockIdx block(const std::string& name, int dim, int hidden, bool cross) {
    BlockIdx b;
    b.self_norm = norm(name + ".self_norm", dim);
    b.self_attn = attention(name + ".self_attn", dim);
    b.has_cross = cross;
    if (cross) {
      b.cross_norm = norm(name + ".cross_norm", dim);
      b.cross_attn = attention(name + ".cross_attn", dim);
    }
    b.mlp_norm = norm(name + ".mlp_norm", dim);
    b.fc1 = linear(name + ".fc1", dim, hidden);
    b.fc2 = linear(name + ".fc2", hidden, dim);
    return b;
  }

 private:
  ParamStore& store_;
  std::mt19937_64 rng_;
};

constexpr double kEmbedStd = 0.02;

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model;
  model.config = config;
  Initializer init(model.params, seed);
  ModelLayout& l = model.layout;
  const int d = config.embed_dim;
  const int hidden = d * config.mlp_ratio;
  const int patch_dim = config.patch_size * config.patch_size * Image::kChannels;

  l.patch_embed = init.linear("vision.patch_embed", patch_dim, d);
  l.image_cls = init.normal("vision.cls", 1, d, kEmbedStd);
  l.image_pos = init.normal("vision.pos", config.image_tokens(), d, kEmbedStd);
  for (int i = 0; i < config.vision_layers; ++i) {
    l.vision_blocks.push_back(init.block("vision.block" + std::to_string(i), d, hidden, false));
  }
  l.vision_norm = init.norm("vision.norm", d);

  l.token_embed = init.normal("text.token_embed", config.vocab_size, d, kEmbedStd);
  l.text_pos = init.normal("text.pos", config.text_tokens(), d, kEmbedStd);
  for (int i = 0; i < config.text_layers; ++i) {
    l.text_blocks.push_back(init.block("text.block" + std::to_string(i), d, hidden, false));
  }
  l.text_norm = init.norm("text.norm", d);

  for (int i = 0; i < config.fusion_layers; ++i) {
    l.fusion_blocks.push_back(init.block("fusion.block" + std::to_string(i), d, hidden, true));
  }
  l.fusion_norm = init.norm("fusion.norm", d);

  l.proj_image = init.linear("head.proj_image", d, config.proj_dim);
  l.proj_text = init.linear("head.proj_text", d, config.proj_dim);
  l.itm_head = init.linear("head.itm", d, 2);
  l.mlm_head = init.linear("head.mlm", d, config.vocab_size);
  l.log_temperature = init.constant("head.log_temperature", 1, 1, std::log(config.init_temperature));
  return model;
}

MomentumState make_momentum_state(const Model& model, double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw DomainError("momentum must lie in [0, 1]");
  return MomentumState{model.params, momentum};
}

void momentum_update(const ParamStore& online, MomentumState& state) {
  const double m = state.momentum;
  if (!(m >= 0.0 && m <= 1.0)) throw DomainError("momentum must lie in [0, 1]");
  if (online.size() != state.shadow.size()) throw ShapeError("momentum state does not mirror the model");
  for (int i = 0; i < online.size(); ++i) {
    Matrix& shadow = state.shadow.value(i);
    const Matrix& source = online.value(i);
    if (shadow.rows() != source.rows() || shadow.cols() != source.cols()) {
      throw ShapeError("momentum shape mismatch for " + online.name(i));
    }
    if (m == 1.0) continue;
    if (m == 0.0) {
      shadow = source;
      continue;
    }
    shadow = m * shadow + (1.0 - m) * source;
  }
}

Matrix CrossAttentionTrace::mean_map() const {
  if (maps.empty()) throw GraphError("empty cross-attention trace");
  Matrix total = Matrix::Zero(maps[0].rows(), maps[0].cols());
  for (const Matrix& m : maps) total += m;
  return total / static_cast<double>(maps.size());
}

// ---------------------------------------------------------------------------

ModelGraph::ModelGraph(ad::Tape& tape, const Model& model, bool trainable, ForwardCounters* counters)
    : ModelGraph(tape, model, model.params, trainable, counters) {}

ModelGraph::ModelGraph(ad::Tape& tape, const Model& model, const ParamStore& params, bool trainable,
                       ForwardCounters* counters)
    : tape_(tape),
      config_(model.config),
      layout_(model.layout),
      params_(params),
      trainable_(trainable),
      counters_(counters),
      bound_(params.size()) {
  if (params.size() != model.params.size()) throw ShapeError("parameter store does not match the model layout");
}

ad::Var ModelGraph::param(int index) {
  ad::Var& v = bound_.at(index);
  if (!v.valid()) {
    v = trainable_ ? tape_.variable(params_.value(index)) : tape_.constant(params_.value(index));
  }
  return v;
}

std::vector<std::pair<int, ad::Var>> ModelGraph::bound() const {
  std::vector<std::pair<int, ad::Var>> out;
  for (int i = 0; i < static_cast<int>(bound_.size()); ++i) {
    if (bound_[i].valid()) out.emplace_back(i, bound_[i]);
  }
  return out;
}

ad::Var ModelGraph::linear(const LinearIdx& idx, ad::Var x) {
  return ad::add_row(ad::matmul(x, param(idx.weight)), param(idx.bias));
}

ad::Var ModelGraph::norm(const NormIdx& idx, ad::Var x) {
  return ad::layer_norm_rows(x, param(idx.gamma), param(idx.beta));
}

ad::Var ModelGraph::attention(const AttentionIdx& idx, ad::Var query_in, ad::Var kv_in,
                              const std::vector<bool>* key_valid, ad::Var probe, Matrix* mean_probs,
                              std::vector<Matrix>* head_probs) {
  const int heads = config_.num_heads;
  const int dh = config_.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  ad::Var q = linear(idx.query, query_in);
  ad::Var k = linear(idx.key, kv_in);
  ad::Var v = linear(idx.value, kv_in);
  if (mean_probs) *mean_probs = Matrix::Zero(q.rows(), k.rows());
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice(q, 0, q.rows(), h * dh, dh);
    ad::Var kh = ad::slice(k, 0, k.rows(), h * dh, dh);
    ad::Var vh = ad::slice(v, 0, v.rows(), h * dh, dh);
    ad::Var probs = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt), key_valid);
    if (mean_probs) *mean_probs += probs.value();
    if (head_probs) head_probs->push_back(probs.value());
    if (probe.valid()) probs = ad::add(probs, probe);
    outs.push_back(ad::matmul(probs, vh));
  }
  if (mean_probs) *mean_probs /= static_cast<double>(heads);
  ad::Var merged = heads == 1 ? outs[0] : ad::hconcat(outs);
  return linear(idx.output, merged);
}

ad::Var ModelGraph::block(const BlockIdx& idx, ad::Var x, const std::vector<bool>* self_valid, ad::Var kv,
                          ad::Var probe, Matrix* mean_probs, std::vector<Matrix>* head_probs) {
  ad::Var h = norm(idx.self_norm, x);
  x = ad::add(x, attention(idx.self_attn, h, h, self_valid, {}, nullptr, nullptr));
  if (idx.has_cross) {
    ad::Var hc = norm(idx.cross_norm, x);
    x = ad::add(x, attention(idx.cross_attn, hc, kv, nullptr, probe, mean_probs, head_probs));
  }
  ad::Var hm = norm(idx.mlp_norm, x);
  return ad::add(x, linear(idx.fc2, ad::gelu(linear(idx.fc1, hm))));
}

VisualEmbedding ModelGraph::encode_image(const PatchGrid& grid) {
  const int patch_dim = config_.patch_size * config_.patch_size * Image::kChannels;
  if (grid.count() != config_.num_patches() || grid.patches.cols() != patch_dim) {
    throw ShapeError("encode_image: expected " + std::to_string(config_.num_patches()) + " patches of size " +
                     std::to_string(patch_dim) + ", got " + std::to_string(grid.count()) + "x" +
                     std::to_string(grid.patches.cols()));
  }
  if (counters_) ++counters_->image;
  ad::Var patches = tape_.constant(grid.patches);
  ad::Var embedded = linear(layout_.patch_embed, patches);
  std::vector<ad::Var> rows = {param(layout_.image_cls), embedded};
  ad::Var x = ad::add(ad::vconcat(rows), param(layout_.image_pos));
  for (const BlockIdx& b : layout_.vision_blocks) x = block(b, x, nullptr, {}, {}, nullptr, nullptr);
  return VisualEmbedding{norm(layout_.vision_norm, x)};
}

TextEmbedding ModelGraph::encode_text(const TokenSequence& tokens) {
  if (tokens.length() != config_.text_tokens() || tokens.valid.size() != tokens.ids.size()) {
    throw ShapeError("encode_text: expected " + std::to_string(config_.text_tokens()) + " tokens, got " +
                     std::to_string(tokens.length()));
  }
  for (int id : tokens.ids) {
    if (id < 0 || id >= config_.vocab_size) throw ShapeError("encode_text: token id out of vocabulary range");
  }
  if (counters_) ++counters_->text;
  ad::Var x = ad::add(ad::gather_rows(param(layout_.token_embed), tokens.ids), param(layout_.text_pos));
  for (const BlockIdx& b : layout_.text_blocks) x = block(b, x, &tokens.valid, {}, {}, nullptr, nullptr);
  return TextEmbedding{norm(layout_.text_norm, x), tokens.valid};
}

FusionOutput ModelGraph::fuse(const VisualEmbedding& image, const TextEmbedding& text, FuseOptions options) {
  const int d = config_.embed_dim;
  if (image.tokens.rows() != config_.image_tokens() || image.tokens.cols() != d ||
      text.tokens.rows() != config_.text_tokens() || text.tokens.cols() != d) {
    throw ShapeError("fuse: embedding shapes do not match the model config");
  }
  if (counters_) ++counters_->fusion;
  FusionOutput out;
  out.trace.query_valid = text.valid;
  ad::Var x = text.tokens;
  if (!options.probe_values.empty() && options.probe_values.size() != layout_.fusion_blocks.size()) {
    throw ShapeError("fuse: one probe value per fusion layer");
  }
  for (std::size_t k = 0; k < layout_.fusion_blocks.size(); ++k) {
    const BlockIdx& b = layout_.fusion_blocks[k];
    ad::Var probe;
    if (options.probe) {
      probe = tape_.variable(options.probe_values.empty()
                                 ? Matrix::Zero(config_.text_tokens(), config_.image_tokens())
                                 : options.probe_values[k]);
      out.trace.probes.push_back(probe);
    }
    Matrix mean_probs;
    std::vector<Matrix> heads;
    x = block(b, x, &text.valid, image.tokens, probe, &mean_probs, options.keep_heads ? &heads : nullptr);
    out.trace.maps.push_back(std::move(mean_probs));
    if (options.keep_heads) out.trace.head_maps.push_back(std::move(heads));
  }
  out.joint = JointEmbedding{norm(layout_.fusion_norm, x)};
  return out;
}

ad::Var ModelGraph::project_image(ad::Var v0) { return ad::l2_normalize_rows(linear(layout_.proj_image, v0)); }

ad::Var ModelGraph::project_text(ad::Var t0) { return ad::l2_normalize_rows(linear(layout_.proj_text, t0)); }

ad::Var ModelGraph::itm_logits(ad::Var m0) {
  if (m0.cols() != config_.embed_dim) throw ShapeError("itm_logits: m0 must have embed_dim columns");
  return linear(layout_.itm_head, m0);
}

ad::Var ModelGraph::mlm_logits(ad::Var rows) { return linear(layout_.mlm_head, rows); }

ad::Var ModelGraph::temperature() { return ad::exp(param(layout_.log_temperature)); }

}  // namespace softmask

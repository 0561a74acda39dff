// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

#include "softmask/config_io.hpp"
#include "softmask/errors.hpp"
#include "softmask/seeding.hpp"

namespace softmask {

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
  if (queue_size < 0 || queue_size % batch_size != 0) {
    throw ConfigError("train.queue_size must be a nonnegative multiple of train.batch_size");
  }
  if (!(lr_init > 0) || !(lr_peak > 0) || !(lr_final > 0)) throw ConfigError("train learning rates must be > 0");
  if (warmup_steps < 0) throw ConfigError("train.warmup_steps must be >= 0");
  if (total_steps < 1 || total_steps < warmup_steps) {
    throw ConfigError("train.total_steps must be >= max(1, train.warmup_steps)");
  }
  if (!(gamma >= 0)) throw ConfigError("train.gamma must be >= 0");
  if (!(mlm_rate > 0 && mlm_rate <= 1)) throw ConfigError("train.mlm_rate must be in (0, 1]");
  if (!(momentum >= 0 && momentum <= 1)) throw ConfigError("train.momentum must be in [0, 1]");
  if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1) || !(adam_eps > 0)) {
    throw ConfigError("train adam parameters out of range");
  }
  if (!(randmask_p >= 0 && randmask_p < 1)) throw ConfigError("train.randmask_p must be in [0, 1)");
  if (!(mask_target_sum >= 0)) throw ConfigError("train.mask_target_sum must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

double lr_at(long step, const TrainConfig& c) {
  if (step < 0) throw DomainError("lr_at: step must be >= 0");
  if (step < c.warmup_steps) {
    const double f = static_cast<double>(step) / c.warmup_steps;
    return c.lr_init * (1.0 - f) + c.lr_peak * f;
  }
  if (step >= c.total_steps) return c.lr_final;
  const double span = static_cast<double>(c.total_steps - c.warmup_steps);
  const double progress = static_cast<double>(step - c.warmup_steps) / span;
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return c.lr_peak * w + c.lr_final * (1.0 - w);
}

SoftMask random_hard_mask(int num_patches, double p, std::uint64_t seed) {
  if (!(p > 0 && p < 1)) throw DomainError("random_hard_mask: p must be in (0, 1)");
  if (num_patches < 1) throw DomainError("random_hard_mask: need at least one patch");
  const int n = num_patches + 1;
  const int zeros = static_cast<int>(std::floor(p * n + 1e-9));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < zeros; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  SoftMask mask;
  mask.weights = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < zeros; ++i) mask.weights(order[i]) = 0.0;
  mask.target_sum = n - zeros;
  return mask;
}

// ---------------------------------------------------------------------------

namespace {

AdamState zero_adam(const ParamStore& params) {
  AdamState adam;
  for (const Matrix& v : params.values()) {
    adam.first.push_back(Matrix::Zero(v.rows(), v.cols()));
    adam.second.push_back(Matrix::Zero(v.rows(), v.cols()));
  }
  return adam;
}

Matrix stack_rows(const std::vector<Matrix>& rows, int cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i].row(0);
  return out;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

}  // namespace

Trainer::Trainer(const ModelConfig& model, const TrainConfig& train, const AugmentConfig& augment,
                 std::vector<ImageTextPair> corpus, Vocabulary vocab)
    : train_(train), augment_(augment), corpus_(std::move(corpus)), vocab_(std::move(vocab)) {
  model.validate();
  train_.validate();
  augment_.validate();
  if (model.vocab_size != vocab_.size()) {
    throw ConfigError("model.vocab_size " + std::to_string(model.vocab_size) + " does not match the vocabulary size " +
                      std::to_string(vocab_.size()));
  }
  if (static_cast<int>(corpus_.size()) < train_.batch_size) {
    throw ConfigError("corpus has fewer pairs than train.batch_size");
  }
  state_.model = init_model(model, train_.seed);
  state_.momentum = make_momentum_state(state_.model, train_.momentum);
  state_.queue = QueueState(train_.queue_size, model.proj_dim);
  state_.adam = zero_adam(state_.model.params);
  warm_queue();
}

std::vector<int> Trainer::batch_indices(long step) const {
  const int n = static_cast<int>(corpus_.size());
  const int per_epoch = n / train_.batch_size;
  const long epoch = step / per_epoch;
  const long offset = (step % per_epoch) * train_.batch_size;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(stream_seed(train_.seed, Stream::kBatch, static_cast<std::uint64_t>(epoch)));
  std::shuffle(perm.begin(), perm.end(), rng);
  return {perm.begin() + offset, perm.begin() + offset + train_.batch_size};
}

void Trainer::warm_queue() {
  const int batches = train_.queue_size / train_.batch_size;
  const ModelConfig& mc = state_.model.config;
  for (int s = 0; s < batches; ++s) {
    ad::Tape tape;
    ModelGraph shadow(tape, state_.model, state_.momentum.shadow, false);
    std::vector<Matrix> images;
    std::vector<Matrix> texts;
    for (int idx : batch_indices(s)) {
      const ImageTextPair& pair = corpus_[idx];
      VisualEmbedding v = shadow.encode_image(patchify(pair.image, mc.patch_size));
      TextEmbedding t = shadow.encode_text(tokenize(pair.caption, vocab_, mc.max_text_len));
      images.push_back(shadow.project_image(ad::row(v.tokens, 0)).value());
      texts.push_back(shadow.project_text(ad::row(t.tokens, 0)).value());
    }
    state_.queue.enqueue(stack_rows(images, mc.proj_dim), stack_rows(texts, mc.proj_dim));
  }
}

StepPlan Trainer::plan_step(long step) const {
  StepPlan plan;
  plan.step = step;
  plan.batch = batch_indices(step);
  const ModelConfig& mc = state_.model.config;
  const auto s = static_cast<std::uint64_t>(step);
  for (std::size_t i = 0; i < plan.batch.size(); ++i) {
    plan.samples.push_back(make_mmda_pair(corpus_[plan.batch[i]], augment_, train_.mmda, train_.mlm_rate,
                                          stream_seed(train_.seed, Stream::kAugment, s, i),
                                          stream_seed(train_.seed, Stream::kTextMask, s, i), vocab_,
                                          mc.max_text_len, mc.patch_size));
    plan.word_indices.push_back(
        sample_word_index(plan.samples.back().clean.valid, stream_seed(train_.seed, Stream::kWordIndex, s, i)));
  }
  return plan;
}

ObjectiveGraph Trainer::build_objectives(ad::Tape& tape, StepPlan& plan, const ParamStore* params) {
  const ParamStore& online_params = params ? *params : state_.model.params;
  const ModelConfig& mc = state_.model.config;
  const int b = static_cast<int>(plan.samples.size());
  const bool need_clean = !train_.mmda || train_.itc_clean_text;
  const MaskSource source = train_.effective_mask_source();
  const bool need_masks = train_.softmask && !plan.masks;
  const bool probe = need_masks && source == MaskSource::kGradCam;

  ModelGraph online(tape, state_.model, online_params, true, &online_counters_);
  ModelGraph shadow(tape, state_.model, state_.momentum.shadow, false, &momentum_counters_);

  // (2) unimodal encodes. The masked caption is encoded once and shared.
  std::vector<VisualEmbedding> images;
  std::vector<TextEmbedding> masked_texts;
  std::vector<TextEmbedding> clean_texts;
  for (const MmdaSample& sample : plan.samples) {
    images.push_back(online.encode_image(sample.patches));
    masked_texts.push_back(online.encode_text(sample.masked.tokens));
    if (need_clean) clean_texts.push_back(online.encode_text(sample.clean));
  }
  const std::vector<TextEmbedding>& itm_texts = train_.mmda ? masked_texts : clean_texts;
  const bool itc_on_clean = need_clean;
  const std::vector<TextEmbedding>& itc_texts = itc_on_clean ? clean_texts : masked_texts;

  // (3) contrastive scores against momentum keys and the queue.
  std::vector<ad::Var> image_queries;
  std::vector<ad::Var> text_queries;
  std::vector<Matrix> image_keys;
  std::vector<Matrix> text_keys;
  for (int i = 0; i < b; ++i) {
    const MmdaSample& sample = plan.samples[i];
    image_queries.push_back(online.project_image(ad::row(images[i].tokens, 0)));
    text_queries.push_back(online.project_text(ad::row(itc_texts[i].tokens, 0)));
    VisualEmbedding vk = shadow.encode_image(sample.patches);
    TextEmbedding tk = shadow.encode_text(itc_on_clean ? sample.clean : sample.masked.tokens);
    image_keys.push_back(shadow.project_image(ad::row(vk.tokens, 0)).value());
    text_keys.push_back(shadow.project_text(ad::row(tk.tokens, 0)).value());
  }
  ObjectiveGraph out;
  out.image_keys = stack_rows(image_keys, mc.proj_dim);
  out.text_keys = stack_rows(text_keys, mc.proj_dim);
  const Matrix image_candidates = vstack(out.image_keys, state_.queue.image_feats());
  const Matrix text_candidates = vstack(out.text_keys, state_.queue.text_feats());
  out.l_itc = itc_loss_graph(ad::vconcat(image_queries), ad::vconcat(text_queries), image_candidates,
                             text_candidates, online.temperature(), train_.focal_itc ? train_.gamma : 0.0,
                             &out.scores);

  // (4) positive fusion: ITM positives, MLM, cross-attention traces.
  std::vector<ad::Var> logits;
  std::vector<JointEmbedding> mlm_joints;
  for (int i = 0; i < b; ++i) {
    FusionOutput fused =
        online.fuse(images[i], itm_texts[i], FuseOptions{.probe = probe, .keep_heads = false, .probe_values = {}});
    logits.push_back(online.itm_logits(ad::row(fused.joint.tokens, 0)));
    if (train_.mmda) {
      mlm_joints.push_back(fused.joint);
    } else {
      mlm_joints.push_back(online.fuse(images[i], masked_texts[i]).joint);
    }
    out.traces.push_back(std::move(fused.trace));
  }
  std::vector<ad::Var> mlm_terms;
  for (int i = 0; i < b; ++i) mlm_terms.push_back(mlm_loss_graph(online, mlm_joints[i], plan.samples[i].masked.target));
  out.l_mlm = ad::mean(ad::vconcat(mlm_terms));

  // (5) soft masks, detached from the graph.
  if (need_masks) {
    const double target = train_.mask_target_sum;
    const int n = mc.num_patches();
    std::vector<SoftMask> masks;
    for (int i = 0; i < b; ++i) {
      const int word = plan.word_indices[i];
      switch (source) {
        case MaskSource::kGradCam: {
          GradCamMap gcam = compute_gradcam(out.traces[i], ad::slice(logits[i], 0, 1, kItmMatch, 1));
          masks.push_back(target > 0 ? build_soft_mask(gcam, word, n, target) : build_soft_mask(gcam, word, n));
          out.gradcams.push_back(std::move(gcam));
          break;
        }
        case MaskSource::kCrossAttention:
          masks.push_back(target > 0 ? cross_attention_mask_baseline(out.traces[i], word, n, target)
                                     : cross_attention_mask_baseline(out.traces[i], word, n));
          break;
        case MaskSource::kRandom:
          masks.push_back(random_hard_mask(
              n, train_.randmask_p,
              stream_seed(train_.seed, Stream::kRandomMask, static_cast<std::uint64_t>(plan.step), i)));
          break;
      }
      masks.back().word_index = word;
    }
    plan.masks = std::move(masks);
  }

  // (6) hard negatives.
  if (!plan.negatives) {
    plan.negatives = sample_hard_negatives(
        out.scores, stream_seed(train_.seed, Stream::kNegatives, static_cast<std::uint64_t>(plan.step)),
        train_.negatives);
  }
  const ItmComposition& neg = *plan.negatives;
  std::vector<int> labels(b, kItmMatch);
  for (int i = 0; i < b; ++i) {
    FusionOutput fused = online.fuse(images[i], itm_texts[neg.neg_text_for_image[i]]);
    logits.push_back(online.itm_logits(ad::row(fused.joint.tokens, 0)));
    labels.push_back(kItmMismatch);
  }
  for (int i = 0; i < b; ++i) {
    FusionOutput fused = online.fuse(images[neg.neg_image_for_text[i]], itm_texts[i]);
    logits.push_back(online.itm_logits(ad::row(fused.joint.tokens, 0)));
    labels.push_back(kItmMismatch);
  }
  out.l_itm = itm_loss_graph(ad::vconcat(logits), labels);

  // (7) soft-masked positives.
  ad::Var total = ad::add(ad::add(out.l_itm, out.l_itc), out.l_mlm);
  if (train_.softmask) {
    const std::vector<SoftMask>& masks = *plan.masks;
    SoftMaskedItm masked = soft_masked_itm_loss(online, images, itm_texts, masks);
    out.l_itm_star = masked.loss;
    total = ad::add(total, out.l_itm_star);
    if (train_.softmask_for_mlm) {
      std::vector<ad::Var> masked_mlm;
      for (int i = 0; i < b; ++i) {
        JointEmbedding joint = train_.mmda ? masked.joints[i]
                                           : online.fuse(apply_mask(images[i], masks[i]), masked_texts[i]).joint;
        masked_mlm.push_back(mlm_loss_graph(online, joint, plan.samples[i].masked.target));
      }
      // Replace L_MLM by the average of the plain and masked-feature terms.
      ad::Var combined = ad::scale(ad::add(out.l_mlm, ad::mean(ad::vconcat(masked_mlm))), 0.5);
      total = ad::add(ad::sub(total, out.l_mlm), combined);
      out.l_mlm = combined;
    }
  }
  out.total = total;
  out.params = online.bound();
  return out;
}

void Trainer::apply_gradients(const ObjectiveGraph& graph, const ad::Gradients& grads, double lr) {
  ParamStore& params = state_.model.params;
  AdamState& adam = state_.adam;
  adam.t += 1;
  const double b1 = train_.adam_beta1;
  const double b2 = train_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
  std::vector<const ad::Var*> bound(params.size(), nullptr);
  for (const auto& [idx, var] : graph.params) bound[idx] = &var;
  for (int i = 0; i < params.size(); ++i) {
    Matrix& p = params.value(i);
    const Matrix g = bound[i] ? grads.get(*bound[i]) : Matrix::Zero(p.rows(), p.cols());
    adam.first[i] = b1 * adam.first[i] + (1.0 - b1) * g;
    adam.second[i] = b2 * adam.second[i] + (1.0 - b2) * g.cwiseProduct(g);
    const Matrix update =
        (adam.first[i] / c1).array() / ((adam.second[i] / c2).array().sqrt() + train_.adam_eps);
    const bool decay = p.rows() > 1 && p.cols() > 1;
    if (decay) p *= 1.0 - lr * train_.weight_decay;
    p -= lr * update;
  }
}

StepReport Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const long step = state_.step;
  StepPlan plan = plan_step(step);
  ad::Tape tape;
  ObjectiveGraph graph = build_objectives(tape, plan);

  StepReport report;
  report.step = step;
  report.l_itc = graph.l_itc.scalar();
  report.l_itm = graph.l_itm.scalar();
  report.l_mlm = graph.l_mlm.scalar();
  report.l_itm_star = graph.l_itm_star.valid() ? graph.l_itm_star.scalar() : 0.0;
  const std::pair<const char*, double> terms[] = {
      {"l_itc", report.l_itc}, {"l_itm", report.l_itm}, {"l_mlm", report.l_mlm}, {"l_itm_star", report.l_itm_star}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) throw NumericError(name, step);
  }
  report.total = report.l_itc + report.l_itm + report.l_mlm + report.l_itm_star;
  report.lr = lr_at(step, train_);

  // (8) backward and optimizer step.
  ad::Gradients grads = tape.backward(graph.total);
  apply_gradients(graph, grads, report.lr);
  for (const Matrix& p : state_.model.params.values()) {
    if (!p.allFinite()) throw NumericError("parameters", step);
  }
  // (9), (10)
  momentum_update(state_.model.params, state_.momentum);
  if (state_.queue.capacity() > 0) state_.queue.enqueue(graph.image_keys, graph.text_keys);

  state_.step = step + 1;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void Trainer::restore(TrainerState state) {
  if (!(state.model.config == state_.model.config) || state.model.params.names() != state_.model.params.names()) {
    throw CheckpointError("restored state does not match the trainer's model");
  }
  if (state.queue.capacity() != state_.queue.capacity() || state.queue.dim() != state_.queue.dim()) {
    throw CheckpointError("restored queue capacity does not match train.queue_size");
  }
  state_ = std::move(state);
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace {

constexpr char kMagic[4] = {'S', 'M', 'C', 'K'};
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

struct ArrayWriter {
  nlohmann::json directory = nlohmann::json::array();
  std::vector<double> blob;

  void add(const std::string& name, const Matrix& m) {
    directory.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", blob.size()}});
    // Row-major order in the file.
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) blob.push_back(m(r, c));
    }
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainerState& state, const CheckpointMeta& meta) {
  ArrayWriter arrays;
  const ParamStore& params = state.model.params;
  for (int i = 0; i < params.size(); ++i) arrays.add("param/" + params.name(i), params.value(i));
  for (int i = 0; i < params.size(); ++i) arrays.add("momentum/" + params.name(i), state.momentum.shadow.value(i));
  for (int i = 0; i < params.size(); ++i) arrays.add("adam_m/" + params.name(i), state.adam.first.at(i));
  for (int i = 0; i < params.size(); ++i) arrays.add("adam_v/" + params.name(i), state.adam.second.at(i));
  arrays.add("queue/image", state.queue.image_ring());
  arrays.add("queue/text", state.queue.text_ring());

  nlohmann::json header = {
      {"version", kFormatVersion},
      {"model", to_json(meta.model)},
      {"train", to_json(meta.train)},
      {"augment", to_json(meta.augment)},
      {"vocabulary", meta.vocabulary},
      {"step", state.step},
      {"momentum", state.momentum.momentum},
      {"adam_t", state.adam.t},
      {"queue", {{"capacity", state.queue.capacity()}, {"dim", state.queue.dim()}, {"cursor", state.queue.cursor()},
                 {"size", state.queue.size()}}},
      {"arrays", arrays.directory},
  };
  const std::string text = header.dump();
  const std::uint64_t length = text.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(arrays.blob.data()),
              static_cast<std::streamsize>(arrays.blob.size() * sizeof(double)));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::pair<TrainerState, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[4];
  std::uint64_t length = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError(path.string() + " is not a checkpoint");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in.eof() && !in) throw CheckpointError("truncated checkpoint " + path.string());
  if (raw.size() % sizeof(double) != 0) throw CheckpointError("corrupt checkpoint payload in " + path.string());
  std::vector<double> blob(raw.size() / sizeof(double));
  std::memcpy(blob.data(), raw.data(), raw.size());

  nlohmann::json header;
  CheckpointMeta meta;
  try {
    header = nlohmann::json::parse(text);
    if (header.at("version").get<int>() != kFormatVersion) throw CheckpointError("unsupported checkpoint version");
    meta.model = model_config_from_json(header.at("model"));
    meta.train = train_config_from_json(header.at("train"));
    meta.augment = augment_config_from_json(header.at("augment"));
    meta.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError("bad checkpoint header in " + path.string() + ": " + e.what());
  }

  std::map<std::string, Matrix> arrays;
  for (const auto& entry : header.at("arrays")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::size_t>();
    if (offset + static_cast<std::size_t>(rows * cols) > blob.size()) {
      throw CheckpointError("truncated checkpoint " + path.string());
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = blob[offset + static_cast<std::size_t>(r * cols + c)];
    }
    arrays.emplace(entry.at("name").get<std::string>(), std::move(m));
  }
  auto take = [&](const std::string& name, const Matrix& like) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw CheckpointError("checkpoint is missing array " + name);
    if (it->second.rows() != like.rows() || it->second.cols() != like.cols()) {
      throw CheckpointError("checkpoint array " + name + " has the wrong shape");
    }
    return it->second;
  };

  TrainerState state;
  state.model = init_model(meta.model, 0);
  state.momentum = make_momentum_state(state.model, header.at("momentum").get<double>());
  state.adam = zero_adam(state.model.params);
  ParamStore& params = state.model.params;
  for (int i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    params.value(i) = take("param/" + name, params.value(i));
    state.momentum.shadow.value(i) = take("momentum/" + name, params.value(i));
    state.adam.first[i] = take("adam_m/" + name, params.value(i));
    state.adam.second[i] = take("adam_v/" + name, params.value(i));
  }
  state.adam.t = header.at("adam_t").get<long>();
  state.step = header.at("step").get<long>();
  const auto& q = header.at("queue");
  const int capacity = q.at("capacity").get<int>();
  const int dim = q.at("dim").get<int>();
  state.queue = QueueState::restore(take("queue/image", Matrix(capacity, dim)), take("queue/text", Matrix(capacity, dim)),
                                    q.at("cursor").get<int>(), q.at("size").get<int>());
  return {std::move(state), std::move(meta)};
}

void resume_from_checkpoint(Trainer& trainer, const std::filesystem::path& path) {
  auto [state, meta] = load_checkpoint(path);
  if (!(meta.model == trainer.model_config())) {
    throw CheckpointError("checkpoint model config differs from the run config");
  }
  if (meta.vocabulary != trainer.vocabulary().tokens()) {
    throw CheckpointError("checkpoint vocabulary differs from the corpus vocabulary");
  }
  if (state.queue.capacity() != trainer.train_config().queue_size) {
    throw CheckpointError("checkpoint queue capacity differs from train.queue_size");
  }
  trainer.restore(std::move(state));
}

void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer) {
  save_checkpoint(path, trainer.state(),
                  CheckpointMeta{trainer.model_config(), trainer.train_config(), trainer.augment_config(),
                                 trainer.vocabulary().tokens()});
}

}  // namespace softmask

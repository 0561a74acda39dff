// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// One training step of the combined objective
//   total = L_ITM + L*_ITC + L_MLM + L*_ITM,
// plus the learning-rate schedule, AdamW, momentum/queue maintenance and
// checkpoints.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softmask/augmentation.hpp"
#include "softmask/corpus.hpp"
#include "softmask/model.hpp"
#include "softmask/objectives.hpp"
#include "softmask/soft_mask.hpp"

namespace softmask {

enum class MaskSource { kGradCam, kCrossAttention, kRandom };

struct TrainConfig {
  int batch_size = 8;    // B
  int queue_size = 32;   // Q
  double gamma = 2.0;
  double mlm_rate = 0.15;
  double momentum = 0.995;
  double lr_init = 2e-5;
  double lr_peak = 2e-4;
  double lr_final = 2e-5;
  int warmup_steps = 20;
  int total_steps = 300;
  double weight_decay = 0.02;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double mask_target_sum = 0.0;  // 0 selects (N + 1) / 2
  int checkpoint_every = 0;      // 0 disables periodic checkpoints

  // Ablation toggles. softmask off drops L*_ITM, focal off sets gamma to 0,
  // mmda off trains ITM on clean images and clean captions.
  bool softmask = true;
  bool focal_itc = true;
  bool mmda = true;
  bool softmask_for_mlm = false;
  double randmask_p = 0.0;  // > 0 replaces soft masks by random hard masks
  MaskSource mask_source = MaskSource::kGradCam;
  bool itc_clean_text = false;  // ITC on clean captions even with mmda on
  NegativeSampling negatives = NegativeSampling::kHard;

  void validate() const;
  MaskSource effective_mask_source() const { return randmask_p > 0.0 ? MaskSource::kRandom : mask_source; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Linear warmup lr_init -> lr_peak, then cosine lr_peak -> lr_final at total_steps.
double lr_at(long step, const TrainConfig& config);

// Binary mask with floor(p * (N + 1)) zeros at uniformly random positions.
SoftMask random_hard_mask(int num_patches, double p, std::uint64_t seed);

struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  long t = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct TrainerState {
  Model model;
  MomentumState momentum;
  QueueState queue;
  AdamState adam;
  long step = 0;
};

struct StepReport {
  long step = 0;
  double l_itc = 0.0;       // L*_ITC (plain ITC when focal is off)
  double l_itm = 0.0;
  double l_mlm = 0.0;
  double l_itm_star = 0.0;  // 0 when softmask is off
  double total = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

// Everything a step consumes that is not a function of the online
// parameters. Once negatives and masks are filled in, rebuilding the
// objectives with different parameters differentiates the same function.
struct StepPlan {
  long step = 0;
  std::vector<int> batch;
  std::vector<MmdaSample> samples;
  std::optional<ItmComposition> negatives;
  std::optional<std::vector<SoftMask>> masks;
  std::vector<int> word_indices;
};

struct ObjectiveGraph {
  ad::Var l_itc;
  ad::Var l_itm;
  ad::Var l_mlm;
  ad::Var l_itm_star;  // invalid when softmask is off
  ad::Var total;
  BatchScores scores;
  std::vector<GradCamMap> gradcams;
  std::vector<CrossAttentionTrace> traces;
  Matrix image_keys;  // momentum projections, enqueued after the step
  Matrix text_keys;
  std::vector<std::pair<int, ad::Var>> params;
};

class Trainer {
 public:
  // Initializes the model from train.seed and pre-fills the queue with
  // momentum features of the first batches.
  Trainer(const ModelConfig& model, const TrainConfig& train, const AugmentConfig& augment,
          std::vector<ImageTextPair> corpus, Vocabulary vocab);

  StepReport step();

  // Batch indices used at `step`: per-epoch seeded permutations.
  std::vector<int> batch_indices(long step) const;
  StepPlan plan_step(long step) const;
  // Builds every loss term on `tape`. `params` defaults to the online model.
  ObjectiveGraph build_objectives(ad::Tape& tape, StepPlan& plan, const ParamStore* params = nullptr);

  const TrainerState& state() const { return state_; }
  TrainerState& mutable_state() { return state_; }
  void restore(TrainerState state);

  const ModelConfig& model_config() const { return state_.model.config; }
  const TrainConfig& train_config() const { return train_; }
  TrainConfig& mutable_train_config() { return train_; }
  const AugmentConfig& augment_config() const { return augment_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const std::vector<ImageTextPair>& corpus() const { return corpus_; }

  ForwardCounters& online_counters() { return online_counters_; }
  ForwardCounters& momentum_counters() { return momentum_counters_; }

 private:
  void warm_queue();
  void apply_gradients(const ObjectiveGraph& graph, const ad::Gradients& grads, double lr);

  TrainConfig train_;
  AugmentConfig augment_;
  std::vector<ImageTextPair> corpus_;
  Vocabulary vocab_;
  TrainerState state_;
  ForwardCounters online_counters_;
  ForwardCounters momentum_counters_;
};

// ---------------------------------------------------------------------------
// Checkpoints: a single binary archive with a JSON header (configs,
// vocabulary, step, array directory) followed by raw little-endian doubles.

struct CheckpointMeta {
  ModelConfig model;
  TrainConfig train;
  AugmentConfig augment;
  std::vector<std::string> vocabulary;
};

void save_checkpoint(const std::filesystem::path& path, const TrainerState& state, const CheckpointMeta& meta);
std::pair<TrainerState, CheckpointMeta> load_checkpoint(const std::filesystem::path& path);
// Rejects a checkpoint whose model config, vocabulary or queue capacity
// differs from the trainer's with CheckpointError.
void resume_from_checkpoint(Trainer& trainer, const std::filesystem::path& path);
void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer);

}  // namespace softmask

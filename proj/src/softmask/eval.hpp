// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// Image-text retrieval: a similarity shortlist reranked by the ITM head, an
// exhaustive ITM ranking used as its oracle, and the ablation runner.

#pragma once

#include <json.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "softmask/augmentation.hpp"
#include "softmask/corpus.hpp"
#include "softmask/model.hpp"
#include "softmask/trainer.hpp"

namespace softmask {

// Gallery of images and captions; an image may own several captions.
struct RetrievalCorpus {
  std::vector<std::string> image_ids;
  std::vector<Image> images;
  std::vector<std::string> captions;
  std::vector<int> caption_image;  // owning image of every caption

  int num_images() const { return static_cast<int>(images.size()); }
  int num_captions() const { return static_cast<int>(captions.size()); }

  // One image per pair.
  static RetrievalCorpus from_pairs(const std::vector<ImageTextPair>& pairs);
  // Entries sharing an image path become one image with several captions.
  static RetrievalCorpus from_manifest(const CorpusManifest& manifest);
};

struct RetrievalReport {
  double tr_at_1 = 0, tr_at_5 = 0, tr_at_10 = 0;  // image query -> captions
  double ir_at_1 = 0, ir_at_5 = 0, ir_at_10 = 0;  // caption query -> images
  int num_images = 0;
  int num_captions = 0;
  int k = 0;              // requested shortlist size, 0 for the exhaustive oracle
  int k_text = 0;         // shortlist actually used per direction after clipping
  int k_image = 0;
  std::vector<int> text_ranks;   // per image, best 0-based rank of a true caption
  std::vector<int> image_ranks;  // per caption, 0-based rank of its image
  std::vector<std::vector<int>> text_orderings;   // per image, ranked caption indices
  std::vector<std::vector<int>> image_orderings;  // per caption, ranked image indices
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

// Score of image i against caption j.
using PairScore = std::function<double(int image, int caption)>;

// Ranking core over precomputed similarities (images x captions) and a lazy
// ITM match score. Ties break by similarity, then by gallery index.
RetrievalReport rank_two_stage(const Matrix& similarity, const PairScore& itm, std::span<const int> caption_image,
                               int k);
RetrievalReport rank_exhaustive(const Matrix& similarity, const Matrix& itm, std::span<const int> caption_image);

// Unimodal similarity of every (image, caption) pair.
Matrix similarity_matrix(const Model& model, const Vocabulary& vocab, const RetrievalCorpus& corpus);
// Match logit of the ITM head for one pair.
double itm_score(const Model& model, const Vocabulary& vocab, const Image& image, const std::string& caption);

// k < 1 is a DomainError; k beyond a gallery is clipped with a warning.
RetrievalReport retrieve_two_stage(const Model& model, const Vocabulary& vocab, const RetrievalCorpus& corpus, int k);
RetrievalReport retrieve_exhaustive_oracle(const Model& model, const Vocabulary& vocab,
                                           const RetrievalCorpus& corpus);
int default_shortlist(const RetrievalCorpus& corpus);  // min(gallery, 8)

// ---------------------------------------------------------------------------
// Ablation grid.

struct AblationCell {
  std::string name;
  bool softmask = true;
  bool focal_itc = true;
  bool mmda = true;
  double randmask_p = 0.0;
  MaskSource mask_source = MaskSource::kGradCam;
};

// The eight on/off combinations, RandMask 0.3 and 0.5, and the
// cross-attention mask baseline.
std::vector<AblationCell> default_ablation_grid();

struct AblationRow {
  AblationCell cell;
  RetrievalReport report;
  StepReport last_step;
};

struct AblationSetup {
  ModelConfig model;
  TrainConfig train;
  AugmentConfig augment;
  std::vector<ImageTextPair> train_pairs;
  Vocabulary vocab;
  RetrievalCorpus eval;
  int budget_steps = 0;
  int k = 0;  // 0 selects default_shortlist
};

// Every cell trains from the same seed and initialization for the same
// number of steps.
std::vector<AblationRow> run_ablation_grid(const AblationSetup& setup, std::span<const AblationCell> cells);

nlohmann::json ablation_to_json(std::span<const AblationRow> rows);
// Fixed-width text table with TR@1 and IR@1 columns.
std::string ablation_table(std::span<const AblationRow> rows);

}  // namespace softmask

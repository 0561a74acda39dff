// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "softmask/config_io.hpp"
#include "softmask/errors.hpp"

namespace softmask {

RetrievalCorpus RetrievalCorpus::from_pairs(const std::vector<ImageTextPair>& pairs) {
  RetrievalCorpus corpus;
  for (const ImageTextPair& pair : pairs) {
    corpus.image_ids.push_back(pair.id);
    corpus.images.push_back(pair.image);
    corpus.caption_image.push_back(corpus.num_images() - 1);
    corpus.captions.push_back(pair.caption);
  }
  return corpus;
}

RetrievalCorpus RetrievalCorpus::from_manifest(const CorpusManifest& manifest) {
  RetrievalCorpus corpus;
  std::map<std::filesystem::path, int> by_path;
  for (const ManifestEntry& entry : manifest.entries) {
    auto [it, inserted] = by_path.emplace(entry.image, corpus.num_images());
    if (inserted) {
      corpus.image_ids.push_back(entry.id);
      corpus.images.push_back(read_image(entry.image));
    }
    corpus.captions.push_back(entry.caption);
    corpus.caption_image.push_back(it->second);
  }
  return corpus;
}

nlohmann::json RetrievalReport::to_json() const {
  return nlohmann::json{{"tr_at_1", tr_at_1},       {"tr_at_5", tr_at_5},         {"tr_at_10", tr_at_10},
                        {"ir_at_1", ir_at_1},       {"ir_at_5", ir_at_5},         {"ir_at_10", ir_at_10},
                        {"num_images", num_images}, {"num_captions", num_captions}, {"k", k},
                        {"k_text", k_text},         {"k_image", k_image},         {"text_ranks", text_ranks},
                        {"image_ranks", image_ranks}, {"warnings", warnings}};
}

namespace {

struct Candidate {
  int index;
  double sim;
  double itm;
};

bool by_similarity(const Candidate& a, const Candidate& b) {
  if (a.sim != b.sim) return a.sim > b.sim;
  return a.index < b.index;
}

bool by_itm(const Candidate& a, const Candidate& b) {
  if (a.itm != b.itm) return a.itm > b.itm;
  return by_similarity(a, b);
}

// Stage one over all candidates, stage two over the first k.
std::vector<int> two_stage_order(std::vector<Candidate> cands, int k, const std::function<double(int)>& itm) {
  std::sort(cands.begin(), cands.end(), by_similarity);
  for (int i = 0; i < k; ++i) cands[i].itm = itm(cands[i].index);
  std::sort(cands.begin(), cands.begin() + k, by_itm);
  std::vector<int> order;
  for (const Candidate& c : cands) order.push_back(c.index);
  return order;
}

double recall(const std::vector<int>& ranks, int r) {
  if (ranks.empty()) return 0.0;
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [r](int rank) { return rank < r; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

void fill_ranks(RetrievalReport& report, std::span<const int> caption_image) {
  const int ni = static_cast<int>(report.text_orderings.size());
  const int nc = static_cast<int>(report.image_orderings.size());
  report.text_ranks.assign(ni, nc);
  for (int i = 0; i < ni; ++i) {
    const std::vector<int>& order = report.text_orderings[i];
    for (int pos = 0; pos < static_cast<int>(order.size()); ++pos) {
      if (caption_image[order[pos]] == i) {
        report.text_ranks[i] = pos;
        break;
      }
    }
  }
  report.image_ranks.assign(nc, ni);
  for (int j = 0; j < nc; ++j) {
    const std::vector<int>& order = report.image_orderings[j];
    const auto it = std::find(order.begin(), order.end(), caption_image[j]);
    report.image_ranks[j] = static_cast<int>(it - order.begin());
  }
  report.tr_at_1 = recall(report.text_ranks, 1);
  report.tr_at_5 = recall(report.text_ranks, 5);
  report.tr_at_10 = recall(report.text_ranks, 10);
  report.ir_at_1 = recall(report.image_ranks, 1);
  report.ir_at_5 = recall(report.image_ranks, 5);
  report.ir_at_10 = recall(report.image_ranks, 10);
  report.num_images = ni;
  report.num_captions = nc;
}

void check_shapes(const Matrix& similarity, std::span<const int> caption_image) {
  if (similarity.cols() != static_cast<Eigen::Index>(caption_image.size())) {
    throw ShapeError("retrieval: similarity columns must match the caption count");
  }
  for (int owner : caption_image) {
    if (owner < 0 || owner >= similarity.rows()) throw ShapeError("retrieval: caption owner out of range");
  }
}

}  // namespace

RetrievalReport rank_two_stage(const Matrix& similarity, const PairScore& itm, std::span<const int> caption_image,
                               int k) {
  if (k < 1) throw DomainError("retrieval: k must be >= 1");
  check_shapes(similarity, caption_image);
  const int ni = static_cast<int>(similarity.rows());
  const int nc = static_cast<int>(similarity.cols());
  RetrievalReport report;
  report.k = k;
  report.k_text = std::min(k, nc);
  report.k_image = std::min(k, ni);
  if (report.k_text < k) {
    report.warnings.push_back("k=" + std::to_string(k) + " exceeds the caption gallery; clipped to " +
                              std::to_string(report.k_text));
  }
  if (report.k_image < k) {
    report.warnings.push_back("k=" + std::to_string(k) + " exceeds the image gallery; clipped to " +
                              std::to_string(report.k_image));
  }
  // Both directions share ITM evaluations.
  Matrix cache = Matrix::Constant(ni, nc, std::nan(""));
  auto cached = [&](int i, int j) {
    if (std::isnan(cache(i, j))) cache(i, j) = itm(i, j);
    return cache(i, j);
  };
  for (int i = 0; i < ni; ++i) {
    std::vector<Candidate> cands;
    for (int j = 0; j < nc; ++j) cands.push_back({j, similarity(i, j), 0.0});
    report.text_orderings.push_back(two_stage_order(std::move(cands), report.k_text, [&](int j) { return cached(i, j); }));
  }
  for (int j = 0; j < nc; ++j) {
    std::vector<Candidate> cands;
    for (int i = 0; i < ni; ++i) cands.push_back({i, similarity(i, j), 0.0});
    report.image_orderings.push_back(
        two_stage_order(std::move(cands), report.k_image, [&](int i) { return cached(i, j); }));
  }
  fill_ranks(report, caption_image);
  return report;
}

RetrievalReport rank_exhaustive(const Matrix& similarity, const Matrix& itm, std::span<const int> caption_image) {
  check_shapes(similarity, caption_image);
  if (itm.rows() != similarity.rows() || itm.cols() != similarity.cols()) {
    throw ShapeError("retrieval: ITM and similarity matrices differ in shape");
  }
  const int ni = static_cast<int>(similarity.rows());
  const int nc = static_cast<int>(similarity.cols());
  RetrievalReport report;
  report.k_text = nc;
  report.k_image = ni;
  for (int i = 0; i < ni; ++i) {
    std::vector<Candidate> cands;
    for (int j = 0; j < nc; ++j) cands.push_back({j, similarity(i, j), itm(i, j)});
    std::sort(cands.begin(), cands.end(), by_itm);
    std::vector<int>& order = report.text_orderings.emplace_back();
    for (const Candidate& c : cands) order.push_back(c.index);
  }
  for (int j = 0; j < nc; ++j) {
    std::vector<Candidate> cands;
    for (int i = 0; i < ni; ++i) cands.push_back({i, similarity(i, j), itm(i, j)});
    std::sort(cands.begin(), cands.end(), by_itm);
    std::vector<int>& order = report.image_orderings.emplace_back();
    for (const Candidate& c : cands) order.push_back(c.index);
  }
  fill_ranks(report, caption_image);
  return report;
}

// ---------------------------------------------------------------------------

namespace {

struct EncodedGallery {
  std::vector<Matrix> image_tokens;
  std::vector<Matrix> text_tokens;
  std::vector<std::vector<bool>> text_valid;
  Matrix image_proj;
  Matrix text_proj;
};

EncodedGallery encode_gallery(const Model& model, const Vocabulary& vocab, const RetrievalCorpus& corpus) {
  const ModelConfig& mc = model.config;
  EncodedGallery g;
  g.image_proj.resize(corpus.num_images(), mc.proj_dim);
  g.text_proj.resize(corpus.num_captions(), mc.proj_dim);
  for (int i = 0; i < corpus.num_images(); ++i) {
    ad::Tape tape;
    ModelGraph graph(tape, model, false);
    VisualEmbedding v = graph.encode_image(patchify(corpus.images[i], mc.patch_size));
    g.image_tokens.push_back(v.tokens.value());
    g.image_proj.row(i) = graph.project_image(ad::row(v.tokens, 0)).value().row(0);
  }
  for (int j = 0; j < corpus.num_captions(); ++j) {
    ad::Tape tape;
    ModelGraph graph(tape, model, false);
    TextEmbedding t = graph.encode_text(tokenize(corpus.captions[j], vocab, mc.max_text_len));
    g.text_tokens.push_back(t.tokens.value());
    g.text_valid.push_back(t.valid);
    g.text_proj.row(j) = graph.project_text(ad::row(t.tokens, 0)).value().row(0);
  }
  return g;
}

double fused_match_logit(const Model& model, const Matrix& image_tokens, const Matrix& text_tokens,
                         const std::vector<bool>& valid) {
  ad::Tape tape;
  ModelGraph graph(tape, model, false);
  VisualEmbedding v{tape.constant(image_tokens)};
  TextEmbedding t{tape.constant(text_tokens), valid};
  FusionOutput fused = graph.fuse(v, t);
  return graph.itm_logits(ad::row(fused.joint.tokens, 0)).value()(0, kItmMatch);
}

}  // namespace

Matrix similarity_matrix(const Model& model, const Vocabulary& vocab, const RetrievalCorpus& corpus) {
  EncodedGallery g = encode_gallery(model, vocab, corpus);
  return g.image_proj * g.text_proj.transpose();
}

double itm_score(const Model& model, const Vocabulary& vocab, const Image& image, const std::string& caption) {
  RetrievalCorpus one;
  one.images.push_back(image);
  one.image_ids.push_back("query");
  one.captions.push_back(caption);
  one.caption_image.push_back(0);
  EncodedGallery g = encode_gallery(model, vocab, one);
  return fused_match_logit(model, g.image_tokens[0], g.text_tokens[0], g.text_valid[0]);
}

int default_shortlist(const RetrievalCorpus& corpus) {
  return std::max(1, std::min({corpus.num_images(), corpus.num_captions(), 8}));
}

RetrievalReport retrieve_two_stage(const Model& model, const Vocabulary& vocab, const RetrievalCorpus& corpus, int k) {
  if (k < 1) throw DomainError("retrieval: k must be >= 1");
  EncodedGallery g = encode_gallery(model, vocab, corpus);
  const Matrix sim = g.image_proj * g.text_proj.transpose();
  return rank_two_stage(
      sim,
      [&](int i, int j) { return fused_match_logit(model, g.image_tokens[i], g.text_tokens[j], g.text_valid[j]); },
      corpus.caption_image, k);
}

RetrievalReport retrieve_exhaustive_oracle(const Model& model, const Vocabulary& vocab,
                                           const RetrievalCorpus& corpus) {
  EncodedGallery g = encode_gallery(model, vocab, corpus);
  const Matrix sim = g.image_proj * g.text_proj.transpose();
  Matrix itm(corpus.num_images(), corpus.num_captions());
  for (int i = 0; i < corpus.num_images(); ++i) {
    for (int j = 0; j < corpus.num_captions(); ++j) {
      itm(i, j) = fused_match_logit(model, g.image_tokens[i], g.text_tokens[j], g.text_valid[j]);
    }
  }
  return rank_exhaustive(sim, itm, corpus.caption_image);
}

// ---------------------------------------------------------------------------

std::vector<AblationCell> default_ablation_grid() {
  std::vector<AblationCell> cells;
  auto flag = [](bool on) { return on ? "on" : "off"; };
  for (int bits = 0; bits < 8; ++bits) {
    AblationCell cell;
    cell.softmask = (bits & 4) != 0;
    cell.focal_itc = (bits & 2) != 0;
    cell.mmda = (bits & 1) != 0;
    cell.name = std::string("softmask=") + flag(cell.softmask) + " focal=" + flag(cell.focal_itc) +
                " mmda=" + flag(cell.mmda);
    cells.push_back(cell);
  }
  for (double p : {0.3, 0.5}) {
    AblationCell cell;
    cell.randmask_p = p;
    cell.name = p == 0.3 ? "randmask p=0.3" : "randmask p=0.5";
    cells.push_back(cell);
  }
  AblationCell attention;
  attention.mask_source = MaskSource::kCrossAttention;
  attention.name = "cross-attention mask";
  cells.push_back(attention);
  return cells;
}

std::vector<AblationRow> run_ablation_grid(const AblationSetup& setup, std::span<const AblationCell> cells) {
  if (setup.budget_steps < 1) throw ConfigError("ablation budget must be at least one step");
  const int k = setup.k > 0 ? setup.k : default_shortlist(setup.eval);
  std::vector<AblationRow> rows;
  for (const AblationCell& cell : cells) {
    TrainConfig train = setup.train;
    train.softmask = cell.softmask;
    train.focal_itc = cell.focal_itc;
    train.mmda = cell.mmda;
    train.randmask_p = cell.randmask_p;
    train.mask_source = cell.mask_source;
    Trainer trainer(setup.model, train, setup.augment, setup.train_pairs, setup.vocab);
    AblationRow row;
    row.cell = cell;
    for (int s = 0; s < setup.budget_steps; ++s) row.last_step = trainer.step();
    row.report = retrieve_two_stage(trainer.state().model, setup.vocab, setup.eval, k);
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json ablation_to_json(std::span<const AblationRow> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const AblationRow& row : rows) {
    out.push_back({{"name", row.cell.name},
                   {"softmask", row.cell.softmask},
                   {"focal_itc", row.cell.focal_itc},
                   {"mmda", row.cell.mmda},
                   {"randmask_p", row.cell.randmask_p},
                   {"mask_source", to_string(row.cell.mask_source)},
                   {"tr_at_1", row.report.tr_at_1},
                   {"ir_at_1", row.report.ir_at_1},
                   {"final_total_loss", row.last_step.total},
                   {"report", row.report.to_json()}});
  }
  return out;
}

std::string ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-24s %-8s %-9s %-5s %7s %7s\n", "Variant", "SoftMask", "FocalITC", "MMDA",
                "TR@1", "IR@1");
  out << line;
  auto mark = [](bool on) { return on ? "x" : "-"; };
  for (const AblationRow& row : rows) {
    std::snprintf(line, sizeof(line), "%-24s %-8s %-9s %-5s %7.1f %7.1f\n", row.cell.name.c_str(),
                  mark(row.cell.softmask), mark(row.cell.focal_itc), mark(row.cell.mmda), 100.0 * row.report.tr_at_1,
                  100.0 * row.report.ir_at_1);
    out << line;
  }
  return out.str();
}

}  // namespace softmask

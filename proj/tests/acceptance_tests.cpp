// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criterion numbers follow the project's acceptance list.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "softmask/errors.hpp"
#include "softmask/eval.hpp"
#include "softmask/objectives.hpp"
#include "softmask/soft_mask.hpp"
#include "softmask/trainer.hpp"
#include "test_support.hpp"

using namespace softmask;
using softmask::testing::central_difference;
using softmask::testing::gradients_agree;
using softmask::testing::random_unit_rows;
using softmask::testing::scratch_dir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!out.pass) ++failures;
  std::printf("[%s] AC%d %s: %s (%.1fs)\n", out.pass ? "PASS" : "FAIL", id, name, out.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* format, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c);
  return buf;
}

// Toy setup shared by the gradient and determinism criteria.
testing::TinyRun toy_run() {
  testing::TinyRun run(4, 8, 5);
  run.model.max_text_len = 8;
  run.model.vocab_size = run.vocab.size();
  return run;
}

Outcome gradient_fidelity() {
  const testing::TinyRun run = toy_run();
  Trainer trainer = run.make();
  trainer.step();
  StepPlan plan = trainer.plan_step(1);
  {
    ad::Tape tape;
    trainer.build_objectives(tape, plan);  // fixes negatives and masks
  }
  ParamStore params = trainer.state().model.params;
  const std::vector<std::pair<const char*, ad::Var ObjectiveGraph::*>> terms = {
      {"l_itc", &ObjectiveGraph::l_itc},
      {"l_itm", &ObjectiveGraph::l_itm},
      {"l_mlm", &ObjectiveGraph::l_mlm},
      {"l_itm_star", &ObjectiveGraph::l_itm_star}};
  std::mt19937_64 rng(2026);
  int checked = 0;
  double worst = 0.0;
  std::string failed;
  for (const auto& [name, member] : terms) {
    ad::Tape tape;
    StepPlan fixed = plan;
    const ObjectiveGraph g = trainer.build_objectives(tape, fixed, &params);
    const ad::Gradients grads = tape.backward(g.*member);
    // Candidate entries: every scalar the term depends on.
    std::vector<std::tuple<int, Eigen::Index, double>> entries;
    for (const auto& [idx, var] : g.params) {
      if (!grads.has(var)) continue;
      const Matrix& grad = grads.get(var);
      for (Eigen::Index e = 0; e < grad.size(); ++e) {
        if (std::abs(grad.data()[e]) > 1e-9) entries.emplace_back(idx, e, grad.data()[e]);
      }
    }
    std::shuffle(entries.begin(), entries.end(), rng);
    if (entries.size() < 50) return {false, std::string(name) + ": fewer than 50 dependent parameters"};
    for (int s = 0; s < 50; ++s) {
      const auto [idx, e, analytic] = entries[s];
      const double numeric = central_difference(
          [&] {
            ad::Tape t;
            StepPlan p = plan;
            return (trainer.build_objectives(t, p, &params).*member).scalar();
          },
          params.value(idx).data()[e], 1e-5);
      const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
      worst = std::max(worst, rel);
      if (!gradients_agree(analytic, numeric, 1e-3, 1e-9)) failed += std::string(" ") + name + ":" + params.name(idx);
      ++checked;
    }
  }
  if (!failed.empty()) return {false, "mismatch at" + failed};
  return {true, fmt("%.0f parameters x 4 losses, worst relative error %.2e", checked / 4.0, worst)};
}

Outcome gradcam_fidelity() {
  const testing::TinyRun run = toy_run();
  const Model model = init_model(run.model, 17);
  const ImageTextPair& pair = run.corpus.pairs[0];
  const PatchGrid patches = patchify(pair.image, run.model.patch_size);
  const TokenSequence tokens = tokenize(pair.caption, run.vocab, run.model.max_text_len);
  std::vector<Matrix> offsets(run.model.fusion_layers,
                              Matrix::Zero(run.model.text_tokens(), run.model.image_tokens()));
  auto q_plus = [&](std::vector<Matrix>* grads, GradCamMap* gcam) {
    ad::Tape tape;
    ModelGraph g(tape, model, false);
    FuseOptions options;
    options.probe = true;
    options.probe_values = offsets;
    const FusionOutput f = g.fuse(g.encode_image(patches), g.encode_text(tokens), options);
    const ad::Var q = ad::slice(g.itm_logits(ad::row(f.joint.tokens, 0)), 0, 1, kItmMatch, 1);
    if (grads) *grads = tape.gradients(q, f.trace.probes);
    if (gcam) *gcam = compute_gradcam(f.trace, q);
    return q.scalar();
  };
  std::vector<Matrix> grads;
  GradCamMap gcam;
  q_plus(&grads, &gcam);
  int checked = 0;
  double worst = 0.0;
  double largest = 0.0;
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    for (Eigen::Index i = 0; i < offsets[k].size(); ++i) {
      const double numeric = central_difference([&] { return q_plus(nullptr, nullptr); }, offsets[k].data()[i], 1e-5);
      const double analytic = grads[k].data()[i];
      if (!gradients_agree(analytic, numeric, 1e-3, 1e-9)) {
        return {false, fmt("layer %.0f entry %.0f: analytic %.6g", k, i, analytic) + fmt(" numeric %.6g", numeric)};
      }
      const double scale = std::max(std::abs(analytic), std::abs(numeric));
      if (scale > 1e-6) worst = std::max(worst, std::abs(analytic - numeric) / scale);
      largest = std::max(largest, std::abs(analytic));
      ++checked;
    }
  }
  if (gcam.values.minCoeff() < 0.0) return {false, "negative Grad-CAM entry"};
  if (largest < 1e-6) return {false, fmt("probe gradients vanish (largest %.3g)", largest)};
  return {true, fmt("%.0f map entries, largest gradient %.3g, worst relative error %.2e", checked, largest, worst) +
                    fmt(", min map value %.3g", gcam.values.minCoeff())};
}

Outcome focal_equivalence() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int b = 2 + static_cast<int>(seed % 7);
    const int q = b * static_cast<int>(seed % 3);
    QueueState queue(q, 16);
    if (q > 0) queue.enqueue(random_unit_rows(q, 16, seed + 300), random_unit_rows(q, 16, seed + 400));
    const BatchScores s = itc_probabilities(random_unit_rows(b, 16, seed), random_unit_rows(b, 16, seed + 100), queue,
                                            0.07);
    worst = std::max(worst, std::abs(focal_itc_loss(s, 0.0) - itc_loss(s)));
  }
  const double spot = focal_term(0.9, 2.0);
  const double expected = 0.01 * -std::log(0.9);
  const bool pass = worst <= 1e-9 && std::abs(spot - expected) <= 1e-9;
  return {pass, fmt("max |focal(0) - itc| = %.2e over 100 batches; focal(0.9, 2) = %.9f vs %.9f", worst, spot,
                    expected)};
}

Outcome mask_invariants() {
  const int n = 16;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd row(n + 1);
    for (int j = 0; j <= n; ++j) row(j) = trial % 5 == 0 ? std::round(4 * u(rng)) : u(rng) * (1 + trial % 9);
    const MaskStages st = soft_mask_stages(row, default_mask_target(n));
    if (st.raw_mask.minCoeff() < 0.0 || st.raw_mask.maxCoeff() > 1.0) return {false, "raw mask outside [0, 1]"};
    worst_sum = std::max(worst_sum, std::abs(st.weights.sum() - (n + 1) / 2.0));
    for (int a = 0; a <= n; ++a) {
      for (int b = 0; b <= n; ++b) {
        if (row(a) > row(b) && st.weights(a) > st.weights(b)) return {false, "anti-monotonicity violated"};
      }
    }
  }
  GradCamMap constant;
  constant.values = Matrix::Constant(1, n + 1, 0.42);
  const SoftMask m = build_soft_mask(constant, 0, n);
  const double uniform_err = (m.weights.array() - 0.5).abs().maxCoeff();
  return {worst_sum <= 1e-5 && uniform_err <= 1e-12,
          fmt("1000 rows, max |sum - (N+1)/2| = %.2e, constant row deviation from 0.5 = %.2e", worst_sum,
              uniform_err)};
}

Outcome identity_reduction() {
  const SyntheticCorpus corpus = make_synthetic_corpus(2, 1);
  const Vocabulary vocab = testing::synthetic_vocabulary(corpus);
  ModelConfig config;
  config.vocab_size = vocab.size();
  const Model model = init_model(config, 8);
  ad::Tape tape;
  ModelGraph g(tape, model, false);
  double worst = 0.0;
  for (const ImageTextPair& pair : corpus.pairs) {
    const VisualEmbedding v = g.encode_image(patchify(pair.image, config.patch_size));
    const TextEmbedding t = g.encode_text(tokenize(pair.caption, vocab, config.max_text_len));
    SoftMask ones;
    ones.weights = Eigen::VectorXd::Ones(config.image_tokens());
    const std::vector<VisualEmbedding> images{v};
    const std::vector<TextEmbedding> texts{t};
    const std::vector<SoftMask> masks{ones};
    const SoftMaskedItm masked = soft_masked_itm_loss(g, images, texts, masks);
    const ad::Var plain = g.itm_logits(ad::row(g.fuse(v, t).joint.tokens, 0));
    worst = std::max(worst, (masked.logits - plain.value()).cwiseAbs().maxCoeff());
    const std::vector<int> label{kItmMatch};
    worst = std::max(worst, std::abs(masked.loss.scalar() - itm_loss_graph(plain, label).scalar()));
  }
  return {worst <= 1e-6, fmt("max deviation of logits and loss %.2e", worst)};
}

Outcome unified_path() {
  long counts[2] = {0, 0};
  int b = 0;
  for (int mmda = 0; mmda < 2; ++mmda) {
    testing::TinyRun run = toy_run();
    run.train.mmda = mmda == 1;
    b = run.train.batch_size;
    Trainer t = run.make();
    t.step();
    t.online_counters().text = 0;
    for (int s = 0; s < 3; ++s) t.step();
    counts[mmda] = t.online_counters().text / 3;
  }
  const bool pass = counts[1] == b && counts[0] == 2 * b;
  return {pass, fmt("text-encoder calls per step: %.0f with augmentation, %.0f without (B = %.0f)", counts[1],
                    counts[0], b)};
}

// Hyper-parameters of the overfit run; see the README.
constexpr int kOverfitSteps = 1000;
constexpr int kOverfitEvalEvery = 250;
constexpr double kOverfitLrPeak = 1e-3;
constexpr int kOverfitQueue = 0;

Outcome overfit_retrieval() {
  const SyntheticCorpus corpus = make_synthetic_corpus(8, 0);
  const Vocabulary vocab = testing::synthetic_vocabulary(corpus);
  ModelConfig model;
  model.vocab_size = vocab.size();
  TrainConfig train;
  train.total_steps = kOverfitSteps;
  train.lr_peak = kOverfitLrPeak;
  train.queue_size = kOverfitQueue;
  const AugmentConfig augment;
  Trainer trainer(model, train, augment, corpus.pairs, vocab);
  const RetrievalCorpus gallery = RetrievalCorpus::from_pairs(corpus.pairs);
  std::string log;
  for (int step = 1; step <= kOverfitSteps; ++step) {
    trainer.step();
    if (step % kOverfitEvalEvery != 0) continue;
    const RetrievalReport two = retrieve_two_stage(trainer.state().model, vocab, gallery, 8);
    log += fmt(" step %.0f: TR@1 %.3f IR@1 %.3f;", step, two.tr_at_1, two.ir_at_1);
    if (two.tr_at_1 == 1.0 && two.ir_at_1 == 1.0) {
      const RetrievalReport oracle = retrieve_exhaustive_oracle(trainer.state().model, vocab, gallery);
      const bool same = two.text_orderings == oracle.text_orderings && two.image_orderings == oracle.image_orderings;
      return {same, log + (same ? " two-stage equals the exhaustive oracle" : " two-stage differs from the oracle")};
    }
  }
  return {false, log};
}

Outcome ablation_harness() {
  testing::TinyRun run = toy_run();
  AblationSetup setup{run.model, run.train, run.augment, run.corpus.pairs, run.vocab,
                      RetrievalCorpus::from_pairs(run.corpus.pairs), 3, 0};
  const auto cells = default_ablation_grid();
  const auto a = run_ablation_grid(setup, cells);
  const auto b = run_ablation_grid(setup, cells);
  const bool same = ablation_to_json(a).dump() == ablation_to_json(b).dump();
  const std::string table = ablation_table(a);
  const std::string header = table.substr(0, table.find('\n'));
  const bool columns = header.find("TR@1") != std::string::npos && header.find("IR@1") != std::string::npos &&
                       header.find("SoftMask") != std::string::npos && header.find("FocalITC") != std::string::npos &&
                       header.find("MMDA") != std::string::npos;
  const long lines = std::count(table.begin(), table.end(), '\n');
  const bool pass = same && columns && a.size() == 11 && lines == 12;
  return {pass, fmt("%.0f cells, repeat identical: ", a.size()) + (same ? "yes" : "no") +
                    (columns ? ", table has TR@1/IR@1 columns" : ", table columns missing")};
}

Outcome determinism_resume() {
  const auto dir = scratch_dir("acceptance_resume");
  const testing::TinyRun run = toy_run();
  Trainer straight = run.make();
  std::vector<StepReport> expected;
  for (int i = 0; i < 6; ++i) expected.push_back(straight.step());
  Trainer first = run.make();
  for (int i = 0; i < 3; ++i) first.step();
  save_checkpoint(dir / "step3.ckpt", first);
  Trainer resumed = run.make();
  resume_from_checkpoint(resumed, dir / "step3.ckpt");
  double worst = 0.0;
  for (int i = 3; i < 6; ++i) {
    const StepReport r = resumed.step();
    for (double d : {r.l_itc - expected[i].l_itc, r.l_itm - expected[i].l_itm, r.l_mlm - expected[i].l_mlm,
                     r.l_itm_star - expected[i].l_itm_star}) {
      worst = std::max(worst, std::abs(d));
    }
  }
  return {worst <= 1e-6, fmt("max per-component difference over steps 3-5: %.2e", worst)};
}

Outcome schedule_endpoints() {
  const TrainConfig c;
  const double a = lr_at(0, c);
  const double b = lr_at(c.warmup_steps, c);
  const double e = lr_at(c.total_steps, c);
  return {a == 2e-5 && b == 2e-4 && e == 2e-5, fmt("lr(0) = %.17g, lr(warmup) = %.17g, lr(total) = %.17g", a, b, e)};
}

}  // namespace

int main() {
  criterion(1, "gradient fidelity", gradient_fidelity);
  criterion(2, "Grad-CAM fidelity", gradcam_fidelity);
  criterion(3, "focal equivalence", focal_equivalence);
  criterion(4, "mask invariants", mask_invariants);
  criterion(5, "identity reduction", identity_reduction);
  criterion(6, "unified-path count", unified_path);
  criterion(7, "overfit retrieval", overfit_retrieval);
  criterion(8, "ablation harness", ablation_harness);
  criterion(9, "determinism and resume", determinism_resume);
  criterion(10, "schedule endpoints", schedule_endpoints);
  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}

// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "softmask/errors.hpp"
#include "softmask/trainer.hpp"
#include "test_support.hpp"

using namespace softmask;
using softmask::testing::scratch_dir;
using softmask::testing::TinyRun;

namespace {

void check_same_state(const TrainerState& a, const TrainerState& b) {
  CHECK(a.step == b.step);
  CHECK(a.model.params == b.model.params);
  CHECK(a.momentum.shadow == b.momentum.shadow);
  CHECK(a.momentum.momentum == b.momentum.momentum);
  CHECK(a.adam == b.adam);
  CHECK(a.queue == b.queue);
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  c.warmup_steps = 20;
  c.total_steps = 300;
  CHECK(lr_at(0, c) == 2e-5);
  CHECK(lr_at(20, c) == 2e-4);
  CHECK(lr_at(300, c) == 2e-5);
  CHECK(lr_at(400, c) == 2e-5);
  CHECK(lr_at(10, c) == doctest::Approx(0.5 * (2e-5 + 2e-4)).epsilon(1e-12));
  // Cosine midpoint of the decay phase.
  CHECK(lr_at(160, c) == doctest::Approx(0.5 * (2e-4 + 2e-5)).epsilon(1e-12));
  const double w = 0.5 * (1 + std::cos(std::numbers::pi * 0.25));
  CHECK(lr_at(90, c) == doctest::Approx(2e-5 + (2e-4 - 2e-5) * w).epsilon(1e-12));
  for (long s = 21; s <= 300; ++s) CHECK(lr_at(s, c) <= lr_at(s - 1, c));
  CHECK_THROWS_AS(lr_at(-1, c), DomainError);

  TrainConfig no_warmup = c;
  no_warmup.warmup_steps = 0;
  CHECK(lr_at(0, no_warmup) == 2e-4);
}

TEST_CASE("random hard masks zero a fixed count of uniformly placed positions") {
  const int n = 16;
  for (double p : {0.3, 0.5}) {
    const int zeros = static_cast<int>(std::floor(p * (n + 1)));
    std::vector<int> hits(n + 1, 0);
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
      const SoftMask m = random_hard_mask(n, p, static_cast<std::uint64_t>(d));
      int count = 0;
      for (int j = 0; j <= n; ++j) {
        CHECK((m.weights(j) == 0.0 || m.weights(j) == 1.0));
        if (m.weights(j) == 0.0) {
          ++count;
          ++hits[j];
        }
      }
      CHECK(count == zeros);
    }
    const double rate = zeros / double(n + 1);
    const double sigma = std::sqrt(rate * (1 - rate) / draws);
    for (int j = 0; j <= n; ++j) CHECK(std::abs(hits[j] / double(draws) - rate) <= 4 * sigma);
  }
  CHECK_THROWS_AS(random_hard_mask(n, 0.0, 1), DomainError);
  CHECK_THROWS_AS(random_hard_mask(n, 1.0, 1), DomainError);
}

TEST_CASE("trainer construction checks its inputs") {
  TinyRun run;
  TrainConfig bad = run.train;
  bad.batch_size = 8;
  CHECK_THROWS_AS(Trainer(run.model, bad, run.augment, run.corpus.pairs, run.vocab), ConfigError);
  ModelConfig wrong_vocab = run.model;
  wrong_vocab.vocab_size += 1;
  CHECK_THROWS_AS(Trainer(wrong_vocab, run.train, run.augment, run.corpus.pairs, run.vocab), ConfigError);

  const Trainer t = run.make();
  CHECK(t.state().queue.full());
  CHECK(t.state().step == 0);
}

TEST_CASE("batches are seeded permutations of the corpus") {
  TinyRun run(8);
  const Trainer t = run.make();
  std::vector<int> seen;
  for (long s = 0; s < 2; ++s) {
    const auto batch = t.batch_indices(s);
    CHECK(batch.size() == 4);
    seen.insert(seen.end(), batch.begin(), batch.end());
  }
  std::sort(seen.begin(), seen.end());
  CHECK(seen == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(t.batch_indices(5) == run.make().batch_indices(5));
}

TEST_CASE("total loss is the sum of its components") {
  TinyRun run;
  Trainer t = run.make();
  StepPlan plan = t.plan_step(0);
  ad::Tape tape;
  const ObjectiveGraph g = t.build_objectives(tape, plan);
  const double sum = g.l_itc.scalar() + g.l_itm.scalar() + g.l_mlm.scalar() + g.l_itm_star.scalar();
  CHECK(g.total.scalar() == doctest::Approx(sum).epsilon(1e-12));
  CHECK(plan.masks.has_value());
  CHECK(plan.negatives.has_value());
  CHECK(g.gradcams.size() == 4);

  const StepReport r = t.step();
  CHECK(r.total == doctest::Approx(sum).epsilon(1e-12));
  CHECK(r.l_itc == g.l_itc.scalar());
}

TEST_CASE("toggles change only their own terms") {
  TinyRun run;
  const StepReport full = run.make().step();

  TinyRun no_soft = run;
  no_soft.train.softmask = false;
  const StepReport a = no_soft.make().step();
  CHECK(a.l_itm_star == 0.0);
  CHECK(a.l_itc == full.l_itc);
  CHECK(a.l_itm == full.l_itm);
  CHECK(a.l_mlm == full.l_mlm);
  CHECK(a.total == doctest::Approx(a.l_itc + a.l_itm + a.l_mlm).epsilon(1e-12));

  TinyRun no_focal = run;
  no_focal.train.focal_itc = false;
  const StepReport b = no_focal.make().step();
  CHECK(b.l_itc >= full.l_itc);

  TinyRun all_off = run;
  all_off.train.softmask = false;
  all_off.train.focal_itc = false;
  all_off.train.mmda = false;
  const StepReport c = all_off.make().step();
  CHECK(c.l_itm_star == 0.0);
  CHECK(c.total == doctest::Approx(c.l_itc + c.l_itm + c.l_mlm).epsilon(1e-12));
}

TEST_CASE("mask sources and random masks all train") {
  for (MaskSource source : {MaskSource::kCrossAttention, MaskSource::kRandom}) {
    TinyRun run;
    run.train.mask_source = source;
    if (source == MaskSource::kRandom) run.train.randmask_p = 0.3;
    Trainer t = run.make();
    const StepReport r = t.step();
    CHECK(std::isfinite(r.total));
    CHECK(r.l_itm_star > 0.0);
  }
  TinyRun mlm = TinyRun();
  mlm.train.softmask_for_mlm = true;
  CHECK(std::isfinite(mlm.make().step().l_mlm));
}

TEST_CASE("text encoder runs once per caption with augmentation, twice without") {
  for (bool mmda : {true, false}) {
    TinyRun run;
    run.train.mmda = mmda;
    Trainer t = run.make();
    t.step();
    t.online_counters().text = 0;
    t.online_counters().image = 0;
    t.step();
    const long b = run.train.batch_size;
    CHECK(t.online_counters().text == (mmda ? b : 2 * b));
    CHECK(t.online_counters().image == b);
  }
}

TEST_CASE("seeded runs are reproducible") {
  TinyRun run;
  Trainer a = run.make();
  Trainer b = run.make();
  for (int i = 0; i < 5; ++i) {
    const StepReport ra = a.step();
    const StepReport rb = b.step();
    CHECK(ra.total == rb.total);
    CHECK(ra.l_itm_star == rb.l_itm_star);
  }
  check_same_state(a.state(), b.state());
  CHECK(a.state().queue.size() == run.train.queue_size);
}

TEST_CASE("checkpoints round-trip bit-exactly and resume the same trajectory") {
  const auto dir = scratch_dir("trainer_ckpt");
  TinyRun run;
  Trainer straight = run.make();
  std::vector<StepReport> expected;
  for (int i = 0; i < 6; ++i) expected.push_back(straight.step());

  Trainer first = run.make();
  for (int i = 0; i < 3; ++i) first.step();
  save_checkpoint(dir / "a.ckpt", first);
  const auto [state, meta] = load_checkpoint(dir / "a.ckpt");
  check_same_state(state, first.state());
  CHECK(meta.train == run.train);
  CHECK(meta.vocabulary == run.vocab.tokens());

  Trainer resumed = run.make();
  resume_from_checkpoint(resumed, dir / "a.ckpt");
  for (int i = 3; i < 6; ++i) {
    const StepReport r = resumed.step();
    CHECK(r.step == i);
    CHECK(std::abs(r.l_itc - expected[i].l_itc) <= 1e-6);
    CHECK(std::abs(r.l_itm - expected[i].l_itm) <= 1e-6);
    CHECK(std::abs(r.l_mlm - expected[i].l_mlm) <= 1e-6);
    CHECK(std::abs(r.l_itm_star - expected[i].l_itm_star) <= 1e-6);
  }
  check_same_state(resumed.state(), straight.state());
}

TEST_CASE("checkpoint errors") {
  const auto dir = scratch_dir("trainer_ckpt_errors");
  TinyRun run;
  Trainer t = run.make();
  save_checkpoint(dir / "a.ckpt", t);

  TinyRun wider = run;
  wider.model.embed_dim = 12;
  Trainer other = wider.make();
  CHECK_THROWS_AS(resume_from_checkpoint(other, dir / "a.ckpt"), CheckpointError);

  TinyRun bigger_queue = run;
  bigger_queue.train.queue_size = 16;
  Trainer q = bigger_queue.make();
  CHECK_THROWS_AS(resume_from_checkpoint(q, dir / "a.ckpt"), CheckpointError);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), CheckpointError);
}

TEST_CASE("non-finite losses raise NumericError naming the step") {
  TinyRun run;
  Trainer t = run.make();
  t.step();
  Model& model = t.mutable_state().model;
  model.params.value(model.layout.itm_head.bias)(0, 0) = std::nan("");
  try {
    t.step();
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.step() == 1);
    CHECK(e.term() == "l_itm");
  }
}

TEST_CASE("training lowers the total loss") {
  TinyRun run(8, 16);
  run.train.batch_size = 8;
  run.train.queue_size = 16;
  run.train.total_steps = 300;
  run.train.warmup_steps = 10;
  run.train.lr_peak = 1e-3;
  Trainer t = run.make();
  const double first = t.step().total;
  double tail = 0.0;
  for (int s = 1; s < 300; ++s) {
    const StepReport r = t.step();
    if (s >= 290) tail += r.total / 10.0;
  }
  CHECK(tail < first);
}

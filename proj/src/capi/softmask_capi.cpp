// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/softmask.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "softmask/errors.hpp"
#include "softmask/eval.hpp"
#include "softmask/run_config.hpp"
#include "softmask/soft_mask.hpp"
#include "softmask/trainer.hpp"

struct sm_session {
  softmask::RunConfig config;
  softmask::RunData data;
  std::unique_ptr<softmask::Trainer> trainer;
  std::string output_dir;
};

namespace {

thread_local std::string g_last_error;

sm_status fail(sm_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
sm_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return SM_OK;
  } catch (const softmask::NumericError& e) {
    return fail(SM_ERR_NUMERIC, e.what());
  } catch (const softmask::ConfigError& e) {
    return fail(SM_ERR_USAGE, e.what());
  } catch (const softmask::DomainError& e) {
    return fail(SM_ERR_USAGE, e.what());
  } catch (const softmask::ManifestError& e) {
    return fail(SM_ERR_MANIFEST, e.what());
  } catch (const softmask::CheckpointError& e) {
    return fail(SM_ERR_CHECKPOINT, e.what());
  } catch (const softmask::IoError& e) {
    return fail(SM_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(SM_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(SM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SM_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(bool ok, const char* message) {
  if (!ok) throw softmask::DomainError(message);
}

}  // namespace

extern "C" {

const char* sm_last_error(void) { return g_last_error.c_str(); }

void sm_free_string(char* s) { std::free(s); }

sm_status sm_gen_synthetic(int n, uint64_t seed, int image_size, const char* out_dir) {
  return guarded([&] {
    require(out_dir != nullptr, "output directory is required");
    require(n >= 1, "--n must be at least 1");
    softmask::write_synthetic_corpus(softmask::make_synthetic_corpus(n, seed, image_size), out_dir);
  });
}

sm_status sm_session_open(const char* config_path, const sm_open_options* options, sm_session** out) {
  return guarded([&] {
    require(config_path != nullptr && out != nullptr, "config path and output handle are required");
    *out = nullptr;
    auto session = std::make_unique<sm_session>();
    session->config = softmask::load_run_config(config_path);
    if (options != nullptr && options->override_seed) session->config.train.seed = options->seed;
    session->data = softmask::load_run_data(session->config);
    session->trainer = std::make_unique<softmask::Trainer>(session->config.model, session->config.train,
                                                           session->config.augment, session->data.train_pairs,
                                                           session->data.vocab);
    session->output_dir = session->config.output_dir.string();
    *out = session.release();
  });
}

void sm_session_close(sm_session* session) { delete session; }

sm_status sm_session_info_get(const sm_session* session, sm_session_info* out) {
  return guarded([&] {
    require(session != nullptr && out != nullptr, "session and output are required");
    out->step = session->trainer->state().step;
    out->total_steps = session->config.train.total_steps;
    out->checkpoint_every = session->config.train.checkpoint_every;
    out->num_train_pairs = static_cast<int>(session->data.train_pairs.size());
    out->num_eval_images = session->data.eval.num_images();
    out->num_eval_captions = session->data.eval.num_captions();
  });
}

const char* sm_session_output_dir(const sm_session* session) {
  return session != nullptr ? session->output_dir.c_str() : "";
}

sm_status sm_train_step(sm_session* session, sm_step_report* out) {
  return guarded([&] {
    require(session != nullptr, "session is required");
    const softmask::StepReport r = session->trainer->step();
    if (out != nullptr) {
      *out = sm_step_report{r.step, r.l_itc, r.l_itm, r.l_mlm, r.l_itm_star, r.total, r.lr, r.seconds};
    }
  });
}

sm_status sm_save_checkpoint(sm_session* session, const char* path) {
  return guarded([&] {
    require(session != nullptr && path != nullptr, "session and path are required");
    softmask::save_checkpoint(path, *session->trainer);
  });
}

sm_status sm_load_checkpoint(sm_session* session, const char* path) {
  return guarded([&] {
    require(session != nullptr && path != nullptr, "session and path are required");
    if (!std::filesystem::exists(path)) {
      throw softmask::CheckpointError(std::string("checkpoint not found: ") + path);
    }
    softmask::resume_from_checkpoint(*session->trainer, path);
  });
}

sm_status sm_evaluate(sm_session* session, int k, char** report_json) {
  return guarded([&] {
    require(session != nullptr && report_json != nullptr, "session and output are required");
    const softmask::Model& model = session->trainer->state().model;
    const softmask::RetrievalCorpus& corpus = session->data.eval;
    softmask::RetrievalReport report =
        k < 0 ? softmask::retrieve_exhaustive_oracle(model, session->data.vocab, corpus)
              : softmask::retrieve_two_stage(model, session->data.vocab, corpus,
                                             k == 0 ? softmask::default_shortlist(corpus) : k);
    nlohmann::json j = report.to_json();
    j["mode"] = k < 0 ? "exhaustive" : "two_stage";
    j["step"] = session->trainer->state().step;
    *report_json = dup_string(j.dump(2));
  });
}

sm_status sm_visualize(sm_session* session, const char* pair_id, const char* word, const char* out_dir,
                       char** out_path) {
  return guarded([&] {
    require(session != nullptr && pair_id != nullptr && word != nullptr && out_dir != nullptr && out_path != nullptr,
            "session, pair id, word, output directory and output path are required");
    const softmask::ImageTextPair* pair = nullptr;
    for (const softmask::ImageTextPair& p : session->data.train_pairs) {
      if (p.id == pair_id) pair = &p;
    }
    if (pair == nullptr) throw softmask::DomainError(std::string("unknown pair id '") + pair_id + "'");

    const softmask::Model& model = session->trainer->state().model;
    const softmask::ModelConfig& mc = model.config;
    const softmask::TokenSequence tokens = softmask::tokenize(pair->caption, session->data.vocab, mc.max_text_len);
    const std::vector<std::string> words = softmask::split_words(pair->caption);
    std::string wanted = word;
    for (char& c : wanted) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    int index = -1;
    if (wanted == "cls") {
      index = 0;
    } else {
      for (int i = 0; i < static_cast<int>(words.size()) && i + 1 < tokens.content_length() + 1; ++i) {
        if (words[i] == wanted) {
          index = i + 1;
          break;
        }
      }
    }
    if (index < 0 || index >= mc.max_text_len) {
      std::string listed;
      for (const std::string& w : words) listed += (listed.empty() ? "" : ", ") + w;
      throw softmask::DomainError("word '" + std::string(word) + "' is not in the caption of " + pair_id +
                                  "; caption tokens: " + listed + " (or cls)");
    }

    softmask::ad::Tape tape;
    softmask::ModelGraph graph(tape, model, false);
    const softmask::PatchGrid patches = softmask::patchify(pair->image, mc.patch_size);
    softmask::FusionOutput fused =
        graph.fuse(graph.encode_image(patches), graph.encode_text(tokens), softmask::FuseOptions{.probe = true, .keep_heads = false, .probe_values = {}});
    softmask::ad::Var logits = graph.itm_logits(softmask::ad::row(fused.joint.tokens, 0));
    softmask::GradCamMap gcam =
        softmask::compute_gradcam(fused.trace, softmask::ad::slice(logits, 0, 1, softmask::kItmMatch, 1));
    const Eigen::VectorXd row = gcam.values.row(index).transpose();
    const std::filesystem::path path =
        softmask::export_gradcam_heatmap(row, patches.grid_rows, patches.grid_cols, pair->image, pair->id, wanted,
                                         session->trainer->state().step, out_dir);
    *out_path = dup_string(path.string());
  });
}

sm_status sm_run_ablation(sm_session* session, int budget_steps, char** json, char** table) {
  return guarded([&] {
    require(session != nullptr && json != nullptr && table != nullptr, "session and outputs are required");
    softmask::AblationSetup setup;
    setup.model = session->config.model;
    setup.train = session->config.train;
    setup.augment = session->config.augment;
    setup.train_pairs = session->data.train_pairs;
    setup.vocab = session->data.vocab;
    setup.eval = session->data.eval;
    setup.budget_steps = budget_steps;
    const std::vector<softmask::AblationCell> cells = softmask::default_ablation_grid();
    const std::vector<softmask::AblationRow> rows = softmask::run_ablation_grid(setup, cells);
    *json = dup_string(softmask::ablation_to_json(rows).dump(2));
    *table = dup_string(softmask::ablation_table(rows));
  });
}

}  // extern "C"

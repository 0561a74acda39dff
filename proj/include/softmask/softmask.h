/* Copyright 2026 The SoftMask Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the softmask library. Every function returns an sm_status;
 * on failure sm_last_error() describes the problem for the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * sm_free_string().
 */

#ifndef SOFTMASK_SOFTMASK_H_
#define SOFTMASK_SOFTMASK_H_

#include <stdint.h>

#if defined(SOFTMASK_BUILDING_LIBRARY)
#define SM_API __attribute__((visibility("default")))
#else
#define SM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sm_status {
  SM_OK = 0,
  SM_ERR_INTERNAL = 1,
  SM_ERR_USAGE = 2,      /* bad argument or invalid configuration */
  SM_ERR_NUMERIC = 3,    /* non-finite loss during training */
  SM_ERR_IO = 4,
  SM_ERR_MANIFEST = 5,
  SM_ERR_CHECKPOINT = 6, /* missing, corrupt or incompatible checkpoint */
} sm_status;

typedef struct sm_session sm_session;

typedef struct sm_open_options {
  int override_seed; /* nonzero: replace train.seed with `seed` */
  uint64_t seed;
} sm_open_options;

typedef struct sm_step_report {
  long step;
  double l_itc;
  double l_itm;
  double l_mlm;
  double l_itm_star;
  double total;
  double lr;
  double seconds;
} sm_step_report;

typedef struct sm_session_info {
  long step;             /* next step to run */
  long total_steps;
  int checkpoint_every;
  int num_train_pairs;
  int num_eval_images;
  int num_eval_captions;
} sm_session_info;

SM_API const char* sm_last_error(void);
SM_API void sm_free_string(char* s);

/* Writes manifest.jsonl and images/ for n synthetic pairs into out_dir. */
SM_API sm_status sm_gen_synthetic(int n, uint64_t seed, int image_size, const char* out_dir);

/* Loads and validates a run config, its manifests and vocabulary, and
 * initializes a fresh trainer. options may be NULL. */
SM_API sm_status sm_session_open(const char* config_path, const sm_open_options* options, sm_session** out);
SM_API void sm_session_close(sm_session* session);

SM_API sm_status sm_session_info_get(const sm_session* session, sm_session_info* out);
/* Output directory from the config, valid until the session is closed. */
SM_API const char* sm_session_output_dir(const sm_session* session);

SM_API sm_status sm_train_step(sm_session* session, sm_step_report* out);
SM_API sm_status sm_save_checkpoint(sm_session* session, const char* path);
/* Restores parameters, momentum state, queue, optimizer and step counter. */
SM_API sm_status sm_load_checkpoint(sm_session* session, const char* path);

/* Retrieval report as JSON. k > 0: two-stage with shortlist k (clipped to
 * the gallery); k == 0: default shortlist; k < 0: exhaustive ITM oracle. */
SM_API sm_status sm_evaluate(sm_session* session, int k, char** report_json);

/* Writes the word-conditional Grad-CAM heat map of a pair to out_dir and
 * returns the file path. word "cls" selects the [CLS] row. */
SM_API sm_status sm_visualize(sm_session* session, const char* pair_id, const char* word, const char* out_dir,
                              char** out_path);

/* Runs the ablation grid from the session's config for budget_steps each. */
SM_API sm_status sm_run_ablation(sm_session* session, int budget_steps, char** json, char** table);

#ifdef __cplusplus
}
#endif

#endif /* SOFTMASK_SOFTMASK_H_ */

/* Copyright 2026 The BasisLens Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the basislens library. Every call returns a bl_status; on
 * failure bl_last_error() holds a message for the calling thread. Handles are
 * opaque and owned by the caller, who releases them with the matching _free.
 */
#ifndef BASISLENS_H_
#define BASISLENS_H_

#include <stddef.h>

#if defined(_WIN32)
#define BL_API __declspec(dllexport)
#else
#define BL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bl_status {
  BL_OK = 0,
  BL_ERR_INVALID_ARGUMENT = 1,
  BL_ERR_CONFIG = 2,
  BL_ERR_IO = 3,
  BL_ERR_FORMAT = 4,
  BL_ERR_SHAPE = 5,
  BL_ERR_DOMAIN = 6,
  BL_ERR_DIVERGENCE = 7,
  BL_ERR_STATE = 8,
  BL_ERR_INTERNAL = 9
} bl_status;

BL_API const char* bl_version(void);
BL_API const char* bl_status_name(bl_status status);
/* Message of the last failed call on this thread ("" if none). */
BL_API const char* bl_last_error(void);

/* ---- configuration ---------------------------------------------------- */

typedef struct bl_config bl_config;

BL_API bl_status bl_config_create(bl_config** out);
BL_API bl_status bl_config_load(const char* path, bl_config** out);
BL_API bl_status bl_config_set(bl_config* cfg, const char* key, const char* value);
/* NULL when the key is absent. The pointer stays valid until the next set. */
BL_API const char* bl_config_get(const bl_config* cfg, const char* key);
/* Exact text the config was loaded from ("" for configs built in code). */
BL_API const char* bl_config_source_text(const bl_config* cfg);
BL_API void bl_config_free(bl_config* cfg);

/* ---- corpora ---------------------------------------------------------- */

typedef struct bl_corpus bl_corpus;

/* Synthetic corpus from the config's seed and synth.* keys. */
BL_API bl_status bl_corpus_generate(const bl_config* cfg, size_t n_images, bl_corpus** out);
BL_API bl_status bl_corpus_load(const char* dir, bl_corpus** out);
/* density_dir may be NULL. */
BL_API bl_status bl_corpus_ingest(const char* image_dir, const char* annotation_file, const char* density_dir,
                                  bl_corpus** out);
BL_API bl_status bl_corpus_save(const bl_corpus* corpus, const char* dir);
BL_API size_t bl_corpus_size(const bl_corpus* corpus);
BL_API size_t bl_corpus_num_semantics(const bl_corpus* corpus);
BL_API const char* bl_corpus_id(const bl_corpus* corpus);
BL_API void bl_corpus_free(bl_corpus* corpus);

/* ---- training --------------------------------------------------------- */

typedef struct bl_train_summary {
  int stage;
  size_t epochs_run; /* excluding the epoch-0 evaluation */
  size_t best_epoch;
  double best_val_nss;
  double best_val_cc;
  double best_val_kld;
  double wall_seconds;
} bl_train_summary;

/* Stage 1 trains from scratch; stage 2 requires from_checkpoint (a stage-1
 * checkpoint). Writes epoch_NNN.ckpt, best.ckpt and train_log.csv to out_dir.
 * summary may be NULL. */
BL_API bl_status bl_train(const bl_config* cfg, const bl_corpus* corpus, int stage, const char* from_checkpoint,
                          const char* out_dir, bl_train_summary* summary);

/* Checkpoint path recorded in train_log.csv for `epoch` (-1 selects the best
 * one). *needed (may be NULL) receives the length + 1; a buffer shorter than
 * that gives BL_ERR_INVALID_ARGUMENT. Pass path = NULL to query the size. */
BL_API bl_status bl_snapshot_epoch(const char* train_log_csv, long long epoch, char* path, size_t cap,
                                   size_t* needed);

/* ---- models ----------------------------------------------------------- */

typedef struct bl_model bl_model;

BL_API bl_status bl_model_load(const char* checkpoint, bl_model** out);
BL_API int bl_model_stage(const bl_model* model);
BL_API size_t bl_model_num_bases(const bl_model* model);
/* Copies W^sal (num_bases values). */
BL_API bl_status bl_model_wsal(const bl_model* model, double* out, size_t cap);
BL_API void bl_model_free(bl_model* model);

/* ---- evaluation ------------------------------------------------------- */

typedef enum bl_head { BL_HEAD_ORIGINAL = 0, BL_HEAD_REROUTED = 1 } bl_head;

typedef struct bl_metrics {
  size_t images;
  double nss;
  double cc;
  double kld;
} bl_metrics;

/* Scores every corpus image; writes per-image rows plus a "mean" row to
 * metrics_csv (may be NULL). mean may be NULL. */
BL_API bl_status bl_evaluate(const bl_model* model, const bl_corpus* corpus, bl_head head, const char* metrics_csv,
                             bl_metrics* mean);

/* ---- semantic alignment ----------------------------------------------- */

typedef struct bl_align_options {
  double quantile;
  size_t topk;
  int dataset_threshold; /* 0: per image, 1: one threshold per basis over the corpus */
  int average_all;       /* 0: average over images containing the semantic, 1: over all */
} bl_align_options;

BL_API void bl_align_options_default(bl_align_options* opts);
/* Starts from the defaults and applies the config's align.* keys. */
BL_API bl_status bl_align_options_from_config(const bl_config* cfg, bl_align_options* opts);

typedef struct bl_report bl_report;

/* Needs a stage-2 model. checkpoint_id is recorded in the report. */
BL_API bl_status bl_align(const bl_model* model, const bl_corpus* corpus, const bl_align_options* opts,
                          const char* checkpoint_id, bl_report** out);
/* Writes alignment.csv, importance.csv and categories.csv. */
BL_API bl_status bl_report_write(const bl_report* report, const char* out_dir);
BL_API size_t bl_report_num_semantics(const bl_report* report);
BL_API bl_status bl_report_importance(const bl_report* report, double* out, size_t cap);
BL_API void bl_report_free(bl_report* report);

/* ---- visualization ---------------------------------------------------- */

typedef struct bl_visualize_options {
  double top_fraction;
  double opacity;
  long long chart_top_k;
} bl_visualize_options;

BL_API void bl_visualize_options_default(bl_visualize_options* opts);
BL_API bl_status bl_visualize_options_from_config(const bl_config* cfg, bl_visualize_options* opts);

/* One <image_id>.overlay.png per corpus image plus importance.csv and
 * importance.png (alignment computed with align_opts). */
BL_API bl_status bl_visualize(const bl_model* model, const bl_corpus* corpus, const bl_visualize_options* opts,
                              const bl_align_options* align_opts, const char* out_dir, size_t* overlays_written);

#ifdef __cplusplus
}
#endif

#endif /* BASISLENS_H_ */

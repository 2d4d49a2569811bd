// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include "basislens/basislens.h"

#include <chrono>
#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "basislens/alignment.hpp"
#include "basislens/config.hpp"
#include "basislens/error.hpp"
#include "basislens/parallel.hpp"
#include "basislens/trainer.hpp"
#include "basislens/visualization.hpp"

struct bl_config {
  basislens::Config cfg;
};

struct bl_corpus {
  basislens::Corpus corpus;
};

struct bl_model {
  basislens::SaliencyModel model;
};

struct bl_report {
  basislens::AlignmentResult result;
  basislens::SemanticVocabulary vocab;
};

namespace {

namespace fs = std::filesystem;
using basislens::ErrorKind;

thread_local std::string g_last_error;

bl_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return BL_ERR_INVALID_ARGUMENT;
    case ErrorKind::Config: return BL_ERR_CONFIG;
    case ErrorKind::Io: return BL_ERR_IO;
    case ErrorKind::Format: return BL_ERR_FORMAT;
    case ErrorKind::Shape: return BL_ERR_SHAPE;
    case ErrorKind::Domain: return BL_ERR_DOMAIN;
    case ErrorKind::Divergence: return BL_ERR_DIVERGENCE;
    case ErrorKind::State: return BL_ERR_STATE;
  }
  return BL_ERR_INTERNAL;
}

bl_status fail_with(bl_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Runs body, translating exceptions into status codes.
template <class F>
bl_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return BL_OK;
  } catch (const basislens::Error& e) {
    return fail_with(status_of(e.kind()), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail_with(BL_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail_with(BL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail_with(BL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail_with(BL_ERR_INTERNAL, "unknown error");
  }
}

#define BL_REQUIRE(cond, what) \
  if (!(cond)) return fail_with(BL_ERR_INVALID_ARGUMENT, what)

basislens::AlignmentOptions to_options(const bl_align_options& o) {
  basislens::AlignmentOptions a;
  a.quantile = o.quantile;
  a.topk = o.topk;
  a.scope = o.dataset_threshold ? basislens::ThresholdScope::Dataset : basislens::ThresholdScope::PerImage;
  a.average = o.average_all ? basislens::AlignmentAverage::All : basislens::AlignmentAverage::ContainingOnly;
  return a;
}

}  // namespace

extern "C" {

const char* bl_version(void) { return "0.1.0"; }

const char* bl_status_name(bl_status status) {
  switch (status) {
    case BL_OK: return "ok";
    case BL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case BL_ERR_CONFIG: return "config error";
    case BL_ERR_IO: return "i/o error";
    case BL_ERR_FORMAT: return "format error";
    case BL_ERR_SHAPE: return "shape error";
    case BL_ERR_DOMAIN: return "domain error";
    case BL_ERR_DIVERGENCE: return "divergence";
    case BL_ERR_STATE: return "state error";
    case BL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* bl_last_error(void) { return g_last_error.c_str(); }

bl_status bl_config_create(bl_config** out) {
  BL_REQUIRE(out, "out is null");
  return guarded([&] { *out = new bl_config{}; });
}

bl_status bl_config_load(const char* path, bl_config** out) {
  BL_REQUIRE(path && out, "path and out are required");
  *out = nullptr;
  return guarded([&] { *out = new bl_config{basislens::Config::load(path)}; });
}

bl_status bl_config_set(bl_config* cfg, const char* key, const char* value) {
  BL_REQUIRE(cfg && key && value, "config, key and value are required");
  return guarded([&] { cfg->cfg.set(key, value); });
}

const char* bl_config_get(const bl_config* cfg, const char* key) {
  if (!cfg || !key) return nullptr;
  auto it = cfg->cfg.values().find(key);
  return it == cfg->cfg.values().end() ? nullptr : it->second.c_str();
}

const char* bl_config_source_text(const bl_config* cfg) { return cfg ? cfg->cfg.source_text().c_str() : ""; }

void bl_config_free(bl_config* cfg) { delete cfg; }

bl_status bl_corpus_generate(const bl_config* cfg, size_t n_images, bl_corpus** out) {
  BL_REQUIRE(cfg && out, "config and out are required");
  BL_REQUIRE(n_images >= 1, "n_images must be >= 1");
  *out = nullptr;
  return guarded([&] {
    const auto spec = basislens::synth_spec_from(cfg->cfg);
    *out = new bl_corpus{basislens::generate_synthetic_corpus(spec, n_images)};
  });
}

bl_status bl_corpus_load(const char* dir, bl_corpus** out) {
  BL_REQUIRE(dir && out, "dir and out are required");
  *out = nullptr;
  return guarded([&] { *out = new bl_corpus{basislens::load_corpus(dir)}; });
}

bl_status bl_corpus_ingest(const char* image_dir, const char* annotation_file, const char* density_dir,
                           bl_corpus** out) {
  BL_REQUIRE(image_dir && annotation_file && out, "image_dir, annotation_file and out are required");
  *out = nullptr;
  return guarded([&] {
    *out = new bl_corpus{basislens::ingest_annotations(image_dir, annotation_file, {}, nullptr,
                                                       density_dir ? fs::path(density_dir) : fs::path())};
  });
}

bl_status bl_corpus_save(const bl_corpus* corpus, const char* dir) {
  BL_REQUIRE(corpus && dir, "corpus and dir are required");
  return guarded([&] { basislens::save_corpus(corpus->corpus, dir); });
}

size_t bl_corpus_size(const bl_corpus* corpus) { return corpus ? corpus->corpus.images.size() : 0; }

size_t bl_corpus_num_semantics(const bl_corpus* corpus) { return corpus ? corpus->corpus.vocab.size() : 0; }

const char* bl_corpus_id(const bl_corpus* corpus) { return corpus ? corpus->corpus.id.c_str() : ""; }

void bl_corpus_free(bl_corpus* corpus) { delete corpus; }

bl_status bl_train(const bl_config* cfg, const bl_corpus* corpus, int stage, const char* from_checkpoint,
                   const char* out_dir, bl_train_summary* summary) {
  BL_REQUIRE(cfg && corpus && out_dir, "config, corpus and out_dir are required");
  if (stage != 1 && stage != 2) return fail_with(BL_ERR_CONFIG, "stage must be 1 or 2");
  if (stage == 2 && !from_checkpoint) return fail_with(BL_ERR_CONFIG, "stage 2 requires a stage-1 checkpoint");
  return guarded([&] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto tc = basislens::train_config_from(cfg->cfg, stage);
    basislens::TrainLog log;
    if (stage == 1) {
      const auto bc = basislens::backbone_config_from(cfg->cfg);
      log = basislens::train_stage1(corpus->corpus, bc, tc, out_dir).log;
    } else {
      log = basislens::train_stage2_reroute(from_checkpoint, corpus->corpus, tc, out_dir).log;
    }
    if (summary) {
      const auto& best = log.best();
      summary->stage = stage;
      summary->epochs_run = log.epochs.size() - 1;
      summary->best_epoch = log.best_epoch;
      summary->best_val_nss = best.val_nss;
      summary->best_val_cc = best.val_cc;
      summary->best_val_kld = best.val_kld;
      summary->wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  });
}

bl_status bl_snapshot_epoch(const char* train_log_csv, long long epoch, char* path, size_t cap, size_t* needed) {
  BL_REQUIRE(train_log_csv, "train_log_csv is required");
  return guarded([&] {
    const auto log = basislens::read_train_log(train_log_csv);
    const long long e[1] = {epoch};
    const std::string p = basislens::snapshot_epochs(log, e).front().string();
    if (needed) *needed = p.size() + 1;
    if (path && cap > 0) {
      if (cap < p.size() + 1) basislens::fail(ErrorKind::InvalidArgument, "path buffer too small");
      std::memcpy(path, p.c_str(), p.size() + 1);
    }
  });
}

bl_status bl_model_load(const char* checkpoint, bl_model** out) {
  BL_REQUIRE(checkpoint && out, "checkpoint and out are required");
  *out = nullptr;
  if (!fs::exists(checkpoint)) return fail_with(BL_ERR_IO, std::string("checkpoint not found: ") + checkpoint);
  return guarded([&] { *out = new bl_model{basislens::SaliencyModel::load(checkpoint)}; });
}

int bl_model_stage(const bl_model* model) { return model ? model->model.stage() : 0; }

size_t bl_model_num_bases(const bl_model* model) { return model ? model->model.config().num_bases : 0; }

bl_status bl_model_wsal(const bl_model* model, double* out, size_t cap) {
  BL_REQUIRE(model && out, "model and out are required");
  const auto w = model->model.param(basislens::kWsal).value().data();
  BL_REQUIRE(cap >= w.size(), "output buffer smaller than num_bases");
  std::memcpy(out, w.data(), w.size() * sizeof(double));
  return BL_OK;
}

void bl_model_free(bl_model* model) { delete model; }

bl_status bl_evaluate(const bl_model* model, const bl_corpus* corpus, bl_head head, const char* metrics_csv,
                      bl_metrics* mean) {
  BL_REQUIRE(model && corpus, "model and corpus are required");
  BL_REQUIRE(head == BL_HEAD_ORIGINAL || head == BL_HEAD_REROUTED, "unknown head");
  if (head == BL_HEAD_REROUTED && model->model.stage() != 2) {
    return fail_with(BL_ERR_STATE, "the rerouted head needs a stage-2 checkpoint");
  }
  return guarded([&] {
    std::vector<std::size_t> idx(corpus->corpus.images.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto r = basislens::evaluate(model->model, corpus->corpus, idx,
                                       head == BL_HEAD_ORIGINAL ? basislens::Head::Original
                                                                : basislens::Head::Rerouted);
    if (metrics_csv) basislens::write_metrics_csv(r, metrics_csv);
    if (mean) *mean = bl_metrics{r.images.size(), r.mean.nss, r.mean.cc, r.mean.kld};
  });
}

void bl_align_options_default(bl_align_options* opts) {
  if (opts) *opts = bl_align_options{0.2, 5, 0, 0};
}

bl_status bl_align_options_from_config(const bl_config* cfg, bl_align_options* opts) {
  BL_REQUIRE(cfg && opts, "config and opts are required");
  return guarded([&] {
    const auto a = basislens::alignment_options_from(cfg->cfg);
    *opts = bl_align_options{a.quantile, a.topk, a.scope == basislens::ThresholdScope::Dataset ? 1 : 0,
                             a.average == basislens::AlignmentAverage::All ? 1 : 0};
  });
}

bl_status bl_align(const bl_model* model, const bl_corpus* corpus, const bl_align_options* opts,
                   const char* checkpoint_id, bl_report** out) {
  BL_REQUIRE(model && corpus && opts && out, "model, corpus, opts and out are required");
  *out = nullptr;
  return guarded([&] {
    auto res = basislens::align(model->model, corpus->corpus, to_options(*opts), checkpoint_id ? checkpoint_id : "");
    *out = new bl_report{std::move(res), corpus->corpus.vocab};
  });
}

bl_status bl_report_write(const bl_report* report, const char* out_dir) {
  BL_REQUIRE(report && out_dir, "report and out_dir are required");
  return guarded([&] {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    basislens::write_alignment_csv(report->result.matrix, dir / "alignment.csv");
    basislens::write_importance_csv(report->result.report, report->vocab, dir / "importance.csv");
    basislens::write_categories_csv(report->result.categories, dir / "categories.csv");
  });
}

size_t bl_report_num_semantics(const bl_report* report) {
  return report ? report->result.report.importance.size() : 0;
}

bl_status bl_report_importance(const bl_report* report, double* out, size_t cap) {
  BL_REQUIRE(report && out, "report and out are required");
  const auto& imp = report->result.report.importance;
  BL_REQUIRE(cap >= imp.size(), "output buffer smaller than the vocabulary");
  std::memcpy(out, imp.data(), imp.size() * sizeof(double));
  return BL_OK;
}

void bl_report_free(bl_report* report) { delete report; }

void bl_visualize_options_default(bl_visualize_options* opts) {
  if (opts) *opts = bl_visualize_options{0.1, 0.5, 60};
}

bl_status bl_visualize_options_from_config(const bl_config* cfg, bl_visualize_options* opts) {
  BL_REQUIRE(cfg && opts, "config and opts are required");
  return guarded([&] {
    bl_visualize_options_default(opts);
    opts->top_fraction = cfg->cfg.get_double("visualize.top_fraction", opts->top_fraction);
    opts->opacity = cfg->cfg.get_double("visualize.opacity", opts->opacity);
    opts->chart_top_k = cfg->cfg.get_int("visualize.chart_top_k", opts->chart_top_k);
  });
}

bl_status bl_visualize(const bl_model* model, const bl_corpus* corpus, const bl_visualize_options* opts,
                       const bl_align_options* align_opts, const char* out_dir, size_t* overlays_written) {
  BL_REQUIRE(model && corpus && opts && align_opts && out_dir, "model, corpus, options and out_dir are required");
  if (model->model.stage() != 2) {
    return fail_with(BL_ERR_STATE, "visualization needs a stage-2 checkpoint (W^sal is untrained)");
  }
  return guarded([&] {
    basislens::OverlayOptions ov{opts->top_fraction, opts->opacity};
    ov.validate();
    if (opts->chart_top_k <= 0) basislens::fail(ErrorKind::Config, "chart top_k must be positive");
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    const auto& images = corpus->corpus.images;
    basislens::parallel_for(images.size(), [&](std::size_t i) {
      basislens::write_overlay(basislens::basis_distribution_map(model->model, images[i], ov), dir);
    });
    const std::size_t n = images.size();
    const auto res = basislens::align(model->model, corpus->corpus, to_options(*align_opts));
    basislens::emit_importance_chart_data(res.report, corpus->corpus.vocab, opts->chart_top_k, dir);
    if (overlays_written) *overlays_written = n;
  });
}

}  // extern "C"

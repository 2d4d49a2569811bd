// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0
//
// basislens: synth-gen | train | align | evaluate | visualize
//
// Exit codes: 0 success, 2 usage or configuration problems (including missing
// inputs), 3 failures while running.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "basislens/basislens.h"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct CliError {
  int code;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& msg) { throw CliError{kExitUsage, msg}; }

// Maps a failed library call onto the CLI's exit codes.
void check(bl_status s, const char* what) {
  if (s == BL_OK) return;
  const int code = (s == BL_ERR_CONFIG || s == BL_ERR_INVALID_ARGUMENT || s == BL_ERR_STATE) ? kExitUsage : kExitRuntime;
  throw CliError{code, std::string(what) + ": " + bl_last_error()};
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};
using Config = Handle<bl_config, bl_config_free>;
using Corpus = Handle<bl_corpus, bl_corpus_free>;
using Model = Handle<bl_model, bl_model_free>;
using Report = Handle<bl_report, bl_report_free>;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void require_exists(const std::string& path, const char* what) {
  if (!fs::exists(path)) usage_error(std::string(what) + " not found: " + path);
}

// Records one invocation under <out>/runs/: <run-id>.json plus a byte-exact
// copy of the config as <run-id>.config.
class RunManifest {
 public:
  RunManifest(std::string subcommand, fs::path out_dir) : sub_(std::move(subcommand)), out_(std::move(out_dir)) {
    doc_["subcommand"] = sub_;
    doc_["started_at"] = utc_now();
  }

  void input(const std::string& key, const std::string& value) { doc_["inputs"][key] = value; }
  void output(const std::string& key, const std::string& value) { doc_["outputs"][key] = value; }
  void param(const std::string& key, const json& value) { doc_["parameters"][key] = value; }
  void metric(const std::string& key, const json& value) { doc_["metrics"][key] = value; }

  void write(const bl_config* cfg, const std::string& config_path) {
    const fs::path runs = out_ / "runs";
    fs::create_directories(runs);
    std::string id;
    for (int n = 1;; ++n) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s-%03d", sub_.c_str(), n);
      if (!fs::exists(runs / (std::string(buf) + ".json"))) {
        id = buf;
        break;
      }
    }
    {
      std::ofstream cs(runs / (id + ".config"), std::ios::binary | std::ios::trunc);
      cs << bl_config_source_text(cfg);
    }
    json doc;
    doc["run_id"] = id;
    for (auto it = doc_.begin(); it != doc_.end(); ++it) doc[it.key()] = it.value();
    doc["config_path"] = config_path;
    doc["config_snapshot"] = id + ".config";
    doc["finished_at"] = utc_now();
    std::ofstream ms(runs / (id + ".json"), std::ios::trunc);
    ms << doc.dump(2) << '\n';
    if (!ms) throw CliError{kExitRuntime, "cannot write run manifest in " + runs.string()};
  }

 private:
  std::string sub_;
  fs::path out_;
  json doc_;
};

void load_config(Config& cfg, const std::string& path) {
  if (path.empty()) {
    check(bl_config_create(cfg.out()), "config");
    return;
  }
  if (!fs::exists(path)) usage_error("config file not found: " + path);
  check(bl_config_load(path.c_str(), cfg.out()), "config");
}

void load_corpus(Corpus& corpus, const std::string& dir) {
  require_exists(dir, "corpus");
  check(bl_corpus_load(dir.c_str(), corpus.out()), "corpus");
}

void load_model(Model& model, const std::string& path) {
  require_exists(path, "checkpoint");
  check(bl_model_load(path.c_str(), model.out()), "checkpoint");
}

struct Options {
  std::string config, out, corpus, checkpoint, from_checkpoint, head = "rerouted";
  std::optional<long long> n_images, topk, chart_top_k;
  std::optional<int> stage;
  std::optional<double> quantile, top_fraction, opacity;
};

int cmd_synth_gen(const Options& o) {
  Config cfg;
  load_config(cfg, o.config);
  long long n = 200;
  if (const char* v = bl_config_get(cfg.get(), "synth.n_images")) {
    try {
      n = std::stoll(v);
    } catch (const std::exception&) {
      usage_error(std::string("config key 'synth.n_images': expected an integer, got '") + v + "'");
    }
  }
  if (o.n_images) n = *o.n_images;
  if (n < 1) usage_error("--n-images must be >= 1");
  RunManifest run("synth-gen", o.out);
  std::cout << "generating " << n << " images\n";
  Corpus corpus;
  check(bl_corpus_generate(cfg.get(), static_cast<size_t>(n), corpus.out()), "synth-gen");
  check(bl_corpus_save(corpus.get(), o.out.c_str()), "synth-gen");
  std::cout << "wrote corpus " << bl_corpus_id(corpus.get()) << " to " << o.out << "\n";
  run.param("n_images", n);
  run.output("corpus", o.out);
  run.metric("images", bl_corpus_size(corpus.get()));
  run.metric("semantics", bl_corpus_num_semantics(corpus.get()));
  run.write(cfg.get(), o.config);
  return kExitOk;
}

int cmd_train(const Options& o) {
  if (!o.stage) usage_error("--stage is required");
  const int stage = *o.stage;
  if (stage != 1 && stage != 2) usage_error("--stage must be 1 or 2");
  if (stage == 2 && o.from_checkpoint.empty()) usage_error("stage 2 requires --from-checkpoint");
  if (stage == 1 && !o.from_checkpoint.empty()) usage_error("--from-checkpoint only applies to stage 2");
  Config cfg;
  load_config(cfg, o.config);
  if (stage == 2) require_exists(o.from_checkpoint, "checkpoint");
  Corpus corpus;
  load_corpus(corpus, o.corpus);
  RunManifest run("train", o.out);
  run.param("stage", stage);
  run.input("corpus", o.corpus);
  if (stage == 2) run.input("from_checkpoint", o.from_checkpoint);
  std::cout << "training stage " << stage << " on " << bl_corpus_size(corpus.get()) << " images\n";
  bl_train_summary s{};
  check(bl_train(cfg.get(), corpus.get(), stage, stage == 2 ? o.from_checkpoint.c_str() : nullptr, o.out.c_str(), &s),
        "train");
  std::printf("best epoch %zu of %zu: val NSS %.4f CC %.4f KLD %.4f (%.1fs)\n", s.best_epoch, s.epochs_run,
              s.best_val_nss, s.best_val_cc, s.best_val_kld, s.wall_seconds);
  run.output("checkpoint", (fs::path(o.out) / "best.ckpt").string());
  run.output("train_log", (fs::path(o.out) / "train_log.csv").string());
  run.metric("epochs_run", s.epochs_run);
  run.metric("best_epoch", s.best_epoch);
  run.metric("best_val_nss", s.best_val_nss);
  run.metric("best_val_cc", s.best_val_cc);
  run.metric("best_val_kld", s.best_val_kld);
  run.metric("wall_seconds", s.wall_seconds);
  run.write(cfg.get(), o.config);
  return kExitOk;
}

int cmd_align(const Options& o) {
  Config cfg;
  load_config(cfg, o.config);
  bl_align_options ao;
  check(bl_align_options_from_config(cfg.get(), &ao), "align");
  if (o.quantile) ao.quantile = *o.quantile;
  if (o.topk) {
    if (*o.topk < 1) usage_error("--topk must be >= 1");
    ao.topk = static_cast<size_t>(*o.topk);
  }
  if (!(ao.quantile > 0.0 && ao.quantile < 1.0)) usage_error("--quantile must be in (0,1)");
  Model model;
  load_model(model, o.checkpoint);
  Corpus corpus;
  load_corpus(corpus, o.corpus);
  RunManifest run("align", o.out);
  run.input("checkpoint", o.checkpoint);
  run.input("corpus", o.corpus);
  run.param("quantile", ao.quantile);
  run.param("topk", ao.topk);
  std::cout << "aligning " << bl_model_num_bases(model.get()) << " bases with " << bl_corpus_num_semantics(corpus.get())
            << " semantics\n";
  Report report;
  check(bl_align(model.get(), corpus.get(), &ao, fs::path(o.checkpoint).filename().string().c_str(), report.out()),
        "align");
  check(bl_report_write(report.get(), o.out.c_str()), "align");
  std::vector<double> imp(bl_report_num_semantics(report.get()));
  check(bl_report_importance(report.get(), imp.data(), imp.size()), "align");
  std::size_t pos = 0, neg = 0;
  for (double v : imp) {
    pos += v > 0.0 ? 1 : 0;
    neg += v < 0.0 ? 1 : 0;
  }
  std::cout << "wrote alignment.csv, importance.csv, categories.csv to " << o.out << "\n";
  run.output("alignment", (fs::path(o.out) / "alignment.csv").string());
  run.output("importance", (fs::path(o.out) / "importance.csv").string());
  run.output("categories", (fs::path(o.out) / "categories.csv").string());
  run.metric("positive_semantics", pos);
  run.metric("negative_semantics", neg);
  run.write(cfg.get(), o.config);
  return kExitOk;
}

int cmd_evaluate(const Options& o) {
  bl_head head;
  if (o.head == "original") {
    head = BL_HEAD_ORIGINAL;
  } else if (o.head == "rerouted") {
    head = BL_HEAD_REROUTED;
  } else {
    usage_error("--head must be original or rerouted");
  }
  Config cfg;
  load_config(cfg, o.config);
  Model model;
  load_model(model, o.checkpoint);
  Corpus corpus;
  load_corpus(corpus, o.corpus);
  RunManifest run("evaluate", o.out);
  run.input("checkpoint", o.checkpoint);
  run.input("corpus", o.corpus);
  run.param("head", o.head);
  fs::create_directories(o.out);
  const std::string csv = (fs::path(o.out) / "metrics.csv").string();
  bl_metrics m{};
  check(bl_evaluate(model.get(), corpus.get(), head, csv.c_str(), &m), "evaluate");
  std::printf("%zu images: NSS %.4f CC %.4f KLD %.4f\n", m.images, m.nss, m.cc, m.kld);
  run.output("metrics", csv);
  run.metric("images", m.images);
  run.metric("nss", m.nss);
  run.metric("cc", m.cc);
  run.metric("kld", m.kld);
  run.write(cfg.get(), o.config);
  return kExitOk;
}

int cmd_visualize(const Options& o) {
  Config cfg;
  load_config(cfg, o.config);
  bl_visualize_options vo;
  check(bl_visualize_options_from_config(cfg.get(), &vo), "visualize");
  bl_align_options ao;
  check(bl_align_options_from_config(cfg.get(), &ao), "visualize");
  if (o.top_fraction) vo.top_fraction = *o.top_fraction;
  if (o.opacity) vo.opacity = *o.opacity;
  if (o.chart_top_k) vo.chart_top_k = *o.chart_top_k;
  if (!(vo.top_fraction > 0.0 && vo.top_fraction <= 0.5)) usage_error("--top-fraction must be in (0, 0.5]");
  if (!(vo.opacity >= 0.0 && vo.opacity <= 1.0)) usage_error("--opacity must be in [0,1]");
  if (vo.chart_top_k <= 0) usage_error("--chart-top-k must be positive");
  Model model;
  load_model(model, o.checkpoint);
  if (bl_model_stage(model.get()) != 2) usage_error("visualize needs a stage-2 checkpoint: " + o.checkpoint);
  Corpus corpus;
  load_corpus(corpus, o.corpus);
  RunManifest run("visualize", o.out);
  run.input("checkpoint", o.checkpoint);
  run.input("corpus", o.corpus);
  run.param("top_fraction", vo.top_fraction);
  run.param("opacity", vo.opacity);
  run.param("chart_top_k", vo.chart_top_k);
  size_t n = 0;
  check(bl_visualize(model.get(), corpus.get(), &vo, &ao, o.out.c_str(), &n), "visualize");
  std::cout << "wrote " << n << " overlays and importance chart to " << o.out << "\n";
  run.output("chart_csv", (fs::path(o.out) / "importance.csv").string());
  run.output("chart_png", (fs::path(o.out) / "importance.png").string());
  run.metric("overlays", n);
  run.write(cfg.get(), o.config);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interpretable saliency prediction via learned feature bases"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth-gen", "Generate a synthetic corpus with planted semantic weights");
  synth->add_option("--config", o.config, "Config file");
  synth->add_option("--out", o.out, "Output corpus directory")->required();
  synth->add_option("--n-images", o.n_images, "Number of images (default: synth.n_images or 200)");

  auto* train = app.add_subcommand("train", "Train stage 1 (backbone and bases) or stage 2 (rerouted head)");
  train->add_option("--config", o.config, "Config file");
  train->add_option("--stage", o.stage, "1 or 2")->required();
  train->add_option("--corpus", o.corpus, "Corpus directory")->required();
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_option("--from-checkpoint", o.from_checkpoint, "Stage-1 checkpoint (stage 2 only)");

  auto* align = app.add_subcommand("align", "Align bases with semantics and compute semantic importance");
  align->add_option("--config", o.config, "Config file");
  align->add_option("--checkpoint", o.checkpoint, "Stage-2 checkpoint")->required();
  align->add_option("--corpus", o.corpus, "Corpus directory")->required();
  align->add_option("--out", o.out, "Output directory")->required();
  align->add_option("--quantile", o.quantile, "Fraction of cells kept per basis map (default 0.2)");
  align->add_option("--topk", o.topk, "Semantics considered per basis (default 5)");

  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint with NSS, CC and KLD");
  eval->add_option("--config", o.config, "Config file");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
  eval->add_option("--corpus", o.corpus, "Corpus directory")->required();
  eval->add_option("--out", o.out, "Output directory")->required();
  eval->add_option("--head", o.head, "original or rerouted (default rerouted)");

  auto* vis = app.add_subcommand("visualize", "Render basis polarity overlays and the importance chart");
  vis->add_option("--config", o.config, "Config file");
  vis->add_option("--checkpoint", o.checkpoint, "Stage-2 checkpoint")->required();
  vis->add_option("--corpus", o.corpus, "Corpus directory")->required();
  vis->add_option("--out", o.out, "Output directory")->required();
  vis->add_option("--top-fraction", o.top_fraction, "Fraction of bases per sign (default 0.1)");
  vis->add_option("--opacity", o.opacity, "Colormap weight in the blend (default 0.5)");
  vis->add_option("--chart-top-k", o.chart_top_k, "Semantics shown in the chart (default 60)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth_gen(o);
    if (*train) return cmd_train(o);
    if (*align) return cmd_align(o);
    if (*eval) return cmd_evaluate(o);
    if (*vis) return cmd_visualize(o);
  } catch (const CliError& e) {
    std::cerr << "basislens: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "basislens: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

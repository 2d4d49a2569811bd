// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "basislens/basislens.h"
#include "doctest.h"
#include "support.hpp"

using basislens::testing::TempDir;

namespace {

bl_config* small_config() {
  bl_config* cfg = nullptr;
  REQUIRE(bl_config_create(&cfg) == BL_OK);
  const char* kv[][2] = {
      {"seed", "2"},
      {"model.input_size", "32"},
      {"model.channels", "4,8,8"},
      {"model.num_bases", "16"},
      {"synth.objects_max", "3"},
      {"synth.object_size_min", "6"},
      {"synth.object_size_max", "10"},
      {"batch_size", "4"},
      {"stage1.learning_rate", "0.003"},
      {"stage1.max_epochs", "2"},
      {"stage2.learning_rate", "0.03"},
      {"stage2.max_epochs", "2"},
  };
  for (auto& p : kv) REQUIRE(bl_config_set(cfg, p[0], p[1]) == BL_OK);
  return cfg;
}

}  // namespace

TEST_CASE("status names and last error") {
  CHECK(std::string(bl_status_name(BL_OK)) == "ok");
  CHECK(std::string(bl_version()).size() > 0);
  bl_config* cfg = nullptr;
  CHECK(bl_config_load("/nonexistent/basislens.conf", &cfg) == BL_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::string(bl_last_error()).find("basislens.conf") != std::string::npos);
  CHECK(bl_config_create(nullptr) == BL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("config keys round trip") {
  bl_config* cfg = small_config();
  CHECK(std::string(bl_config_get(cfg, "model.num_bases")) == "16");
  CHECK(bl_config_get(cfg, "nope") == nullptr);
  CHECK(std::string(bl_config_source_text(cfg)).empty());
  bl_config_free(cfg);

  TempDir dir("capi-cfg");
  const std::string text = "# note\nseed = 4\n";
  basislens::testing::write_file(dir / "a.conf", text);
  REQUIRE(bl_config_load((dir / "a.conf").c_str(), &cfg) == BL_OK);
  CHECK(std::string(bl_config_source_text(cfg)) == text);
  bl_config_free(cfg);
  basislens::testing::write_file(dir / "dup.conf", "seed = 1\nseed = 2\n");
  CHECK(bl_config_load((dir / "dup.conf").c_str(), &cfg) == BL_ERR_CONFIG);
}

TEST_CASE("full pipeline through the C interface") {
  TempDir dir("capi-run");
  bl_config* cfg = small_config();
  bl_corpus* corpus = nullptr;
  REQUIRE(bl_corpus_generate(cfg, 12, &corpus) == BL_OK);
  CHECK(bl_corpus_size(corpus) == 12);
  CHECK(bl_corpus_num_semantics(corpus) == 10);
  REQUIRE(bl_corpus_save(corpus, (dir / "corpus").c_str()) == BL_OK);
  bl_corpus* loaded = nullptr;
  REQUIRE(bl_corpus_load((dir / "corpus").c_str(), &loaded) == BL_OK);
  CHECK(bl_corpus_size(loaded) == 12);
  bl_corpus_free(loaded);

  CHECK(bl_train(cfg, corpus, 2, nullptr, (dir / "bad").c_str(), nullptr) == BL_ERR_CONFIG);
  CHECK(bl_train(cfg, corpus, 3, nullptr, (dir / "bad").c_str(), nullptr) == BL_ERR_CONFIG);

  bl_train_summary s1{};
  REQUIRE(bl_train(cfg, corpus, 1, nullptr, (dir / "s1").c_str(), &s1) == BL_OK);
  CHECK(s1.stage == 1);
  CHECK(s1.epochs_run == 2);

  char path[1024];
  size_t needed = 0;
  REQUIRE(bl_snapshot_epoch((dir / "s1" / "train_log.csv").c_str(), -1, path, sizeof path, &needed) == BL_OK);
  CHECK(needed == std::strlen(path) + 1);
  CHECK(std::filesystem::exists(path));
  char tiny[4];
  CHECK(bl_snapshot_epoch((dir / "s1" / "train_log.csv").c_str(), 0, tiny, sizeof tiny, &needed) ==
        BL_ERR_INVALID_ARGUMENT);
  CHECK(needed > sizeof tiny);
  CHECK(bl_snapshot_epoch((dir / "s1" / "train_log.csv").c_str(), 0, nullptr, 0, &needed) == BL_OK);
  CHECK(bl_snapshot_epoch((dir / "s1" / "train_log.csv").c_str(), 9, path, sizeof path, &needed) ==
        BL_ERR_INVALID_ARGUMENT);

  const std::string s1_best = (dir / "s1" / "best.ckpt").string();
  bl_model* m1 = nullptr;
  REQUIRE(bl_model_load(s1_best.c_str(), &m1) == BL_OK);
  CHECK(bl_model_stage(m1) == 1);
  CHECK(bl_model_num_bases(m1) == 16);
  bl_metrics mm{};
  CHECK(bl_evaluate(m1, corpus, BL_HEAD_REROUTED, nullptr, &mm) == BL_ERR_STATE);
  CHECK(bl_evaluate(m1, corpus, BL_HEAD_ORIGINAL, nullptr, &mm) == BL_OK);
  CHECK(mm.images == 12);
  bl_align_options ao;
  bl_align_options_default(&ao);
  CHECK(ao.quantile == 0.2);
  CHECK(ao.topk == 5);
  bl_report* rep = nullptr;
  CHECK(bl_align(m1, corpus, &ao, "s1", &rep) == BL_ERR_STATE);
  bl_visualize_options vo;
  bl_visualize_options_default(&vo);
  CHECK(vo.top_fraction == 0.1);
  CHECK(bl_visualize(m1, corpus, &vo, &ao, (dir / "vis1").c_str(), nullptr) == BL_ERR_STATE);
  bl_model_free(m1);

  bl_train_summary s2{};
  REQUIRE(bl_train(cfg, corpus, 2, s1_best.c_str(), (dir / "s2").c_str(), &s2) == BL_OK);
  CHECK(s2.stage == 2);

  bl_model* m2 = nullptr;
  REQUIRE(bl_model_load((dir / "s2" / "best.ckpt").c_str(), &m2) == BL_OK);
  CHECK(bl_model_stage(m2) == 2);
  std::vector<double> wsal(16);
  CHECK(bl_model_wsal(m2, wsal.data(), wsal.size()) == BL_OK);
  CHECK(bl_model_wsal(m2, wsal.data(), 3) == BL_ERR_INVALID_ARGUMENT);

  REQUIRE(bl_evaluate(m2, corpus, BL_HEAD_REROUTED, (dir / "metrics.csv").c_str(), &mm) == BL_OK);
  CHECK(std::filesystem::exists(dir / "metrics.csv"));

  REQUIRE(bl_align(m2, corpus, &ao, "s2", &rep) == BL_OK);
  CHECK(bl_report_num_semantics(rep) == 10);
  std::vector<double> imp(10);
  REQUIRE(bl_report_importance(rep, imp.data(), imp.size()) == BL_OK);
  for (double v : imp) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  REQUIRE(bl_report_write(rep, (dir / "align").c_str()) == BL_OK);
  for (const char* f : {"alignment.csv", "importance.csv", "categories.csv"}) {
    CHECK(std::filesystem::exists(dir / "align" / f));
  }
  bl_report_free(rep);

  size_t written = 0;
  REQUIRE(bl_visualize(m2, corpus, &vo, &ao, (dir / "vis").c_str(), &written) == BL_OK);
  CHECK(written == 12);
  CHECK(std::filesystem::exists(dir / "vis" / "importance.png"));
  bl_visualize_options bad = vo;
  bad.top_fraction = 0.9;
  CHECK(bl_visualize(m2, corpus, &bad, &ao, (dir / "vis").c_str(), &written) != BL_OK);

  bl_model_free(m2);
  bl_corpus_free(corpus);
  bl_config_free(cfg);
}

TEST_CASE("missing inputs map to IO errors") {
  bl_model* m = nullptr;
  CHECK(bl_model_load("/nonexistent/x.ckpt", &m) == BL_ERR_IO);
  bl_corpus* c = nullptr;
  CHECK(bl_corpus_load("/nonexistent/corpus", &c) == BL_ERR_IO);
  CHECK(bl_align_options_from_config(nullptr, nullptr) == BL_ERR_INVALID_ARGUMENT);
}

// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "basislens/trainer.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace basislens;
using basislens::testing::error_kind_of;
using basislens::testing::read_file;
using basislens::testing::TempDir;
using basislens::testing::tiny_backbone;
using basislens::testing::tiny_spec;
using basislens::testing::tiny_train;

namespace {

const Corpus& small_corpus() {
  static const Corpus c = generate_synthetic_corpus(tiny_spec(), 16);
  return c;
}

bool is_reroute_param(const std::string& name) { return name == kWsal || name == kWsalBias; }

}  // namespace

TEST_CASE("zero learning rate leaves weights and loss unchanged") {
  TempDir dir("lr0");
  const auto res = train_stage1(small_corpus(), tiny_backbone(), tiny_train(1, 3, 0.0), dir.path());
  REQUIRE(res.log.epochs.size() == 4);
  for (const auto& r : res.log.epochs) CHECK(r.train_loss == res.log.epochs[0].train_loss);
  const auto init = SaliencyModel::initialized(tiny_backbone(), tiny_train(1, 3, 0.0).seed);
  for (const auto& name : init.param_names()) CHECK(res.model.param(name).value() == init.param(name).value());
}

TEST_CASE("training is deterministic for a fixed seed") {
  TempDir a("det-a"), b("det-b");
  const auto ra = train_stage1(small_corpus(), tiny_backbone(), tiny_train(1, 2, 3e-3), a.path());
  const auto rb = train_stage1(small_corpus(), tiny_backbone(), tiny_train(1, 2, 3e-3), b.path());
  REQUIRE(ra.log.epochs.size() == rb.log.epochs.size());
  for (std::size_t i = 0; i < ra.log.epochs.size(); ++i) {
    CHECK(ra.log.epochs[i].train_loss == rb.log.epochs[i].train_loss);
    CHECK(ra.log.epochs[i].val_cc == rb.log.epochs[i].val_cc);
  }
  CHECK(read_file(a / "best.ckpt") == read_file(b / "best.ckpt"));
  CHECK(read_file(a / "train_log.csv") == read_file(b / "train_log.csv"));
}

TEST_CASE("training lowers the loss and tracks the best validation CC") {
  TempDir dir("learn");
  const auto res = train_stage1(small_corpus(), tiny_backbone(), tiny_train(1, 4, 3e-3), dir.path());
  CHECK(res.log.epochs.back().train_loss < res.log.epochs.front().train_loss);
  double best = -2.0;
  for (const auto& r : res.log.epochs) best = std::max(best, r.val_cc);
  CHECK(res.log.best().val_cc == best);
  for (const auto& r : res.log.epochs) CHECK(std::filesystem::exists(r.checkpoint));
  // The returned model is the retained best one.
  const auto best_ckpt = SaliencyModel::load(res.log.best_checkpoint);
  for (const auto& name : best_ckpt.param_names()) CHECK(best_ckpt.param(name).value() == res.model.param(name).value());
}

TEST_CASE("stage 2 only moves the rerouted readout") {
  TempDir s1("freeze-1"), s2("freeze-2");
  const auto r1 = train_stage1(small_corpus(), tiny_backbone(), tiny_train(1, 2, 3e-3), s1.path());
  const auto r2 = train_stage2_reroute(r1.log.best_checkpoint, small_corpus(), tiny_train(2, 3, 3e-2), s2.path());
  const auto before = SaliencyModel::load(r1.log.best_checkpoint);
  const auto after = SaliencyModel::load(r2.log.best_checkpoint);
  CHECK(after.stage() == 2);
  bool wsal_moved = false;
  for (const auto& name : before.param_names()) {
    if (is_reroute_param(name)) {
      wsal_moved = wsal_moved || !(before.param(name).value() == after.param(name).value());
    } else {
      CHECK(before.param(name).value() == after.param(name).value());
    }
  }
  CHECK(wsal_moved);
  CHECK(r2.log.stage == 2);
  CHECK(r2.log.epochs.size() >= 2);
}

TEST_CASE("zero stage-2 epochs keep W^sal at its initialization") {
  TempDir s1("zero-1"), s2("zero-2");
  const auto r1 = train_stage1(small_corpus(), tiny_backbone(), tiny_train(1, 1, 3e-3), s1.path());
  const auto r2 = train_stage2_reroute(r1.log.best_checkpoint, small_corpus(), tiny_train(2, 0, 3e-2), s2.path());
  CHECK(r2.log.epochs.size() == 1);
  for (double v : r2.model.param(kWsal).value().data()) CHECK(v == 0.0);
  CHECK(r2.model.param(kWsalBias).value()[0] == kStage2InitialBias);
}

TEST_CASE("stage 2 rejects bad checkpoints") {
  TempDir dir("s2-bad");
  CHECK(error_kind_of([&] {
          train_stage2_reroute(dir / "nope.ckpt", small_corpus(), tiny_train(2, 1, 1e-2), dir / "out");
        }) == ErrorKind::Io);
  basislens::testing::write_file(dir / "junk.ckpt", "BLCK junk");
  CHECK(error_kind_of([&] {
          train_stage2_reroute(dir / "junk.ckpt", small_corpus(), tiny_train(2, 1, 1e-2), dir / "out");
        }) == ErrorKind::Format);
  auto m = SaliencyModel::initialized(tiny_backbone(), 1);
  m.set_stage(2);
  m.save(dir / "s2.ckpt");
  CHECK(error_kind_of([&] {
          train_stage2_reroute(dir / "s2.ckpt", small_corpus(), tiny_train(2, 1, 1e-2), dir / "out");
        }) == ErrorKind::State);
}

TEST_CASE("stage 1 rejects empty corpora and mismatched configs") {
  TempDir dir("s1-bad");
  CHECK(error_kind_of([&] { train_stage1(Corpus{}, tiny_backbone(), tiny_train(1, 1, 1e-3), dir.path()); }) ==
        ErrorKind::InvalidArgument);
  CHECK(error_kind_of([&] { train_stage1(small_corpus(), tiny_backbone(), tiny_train(2, 1, 1e-3), dir.path()); }) ==
        ErrorKind::Config);
  auto wrong = tiny_backbone();
  wrong.input_height = wrong.input_width = 64;
  CHECK(error_kind_of([&] { train_stage1(small_corpus(), wrong, tiny_train(1, 1, 1e-3), dir.path()); }) ==
        ErrorKind::Shape);
}

TEST_CASE("snapshot_epochs retrieves the fine-tuning checkpoints") {
  TempDir dir("snap");
  const auto res = train_stage1(small_corpus(), tiny_backbone(), tiny_train(1, 2, 3e-3), dir.path());
  const std::vector<long long> want{0, 1, kBestEpoch};
  const auto paths = snapshot_epochs(res.log, want);
  REQUIRE(paths.size() == 3);
  CHECK(paths[0].filename() == "epoch_000.ckpt");
  CHECK(paths[1].filename() == "epoch_001.ckpt");
  CHECK(paths[2] == res.log.best().checkpoint);

  const auto e0 = SaliencyModel::load(paths[0]);
  const auto init = SaliencyModel::initialized(tiny_backbone(), tiny_train(1, 2, 3e-3).seed);
  for (const auto& name : init.param_names()) CHECK(e0.param(name).value() == init.param(name).value());

  const std::vector<long long> beyond{5};
  CHECK(error_kind_of([&] { snapshot_epochs(res.log, beyond); }) == ErrorKind::InvalidArgument);
  const std::vector<long long> negative{-7};
  CHECK(error_kind_of([&] { snapshot_epochs(res.log, negative); }) == ErrorKind::InvalidArgument);

  // The CSV log resolves to the same files.
  const TrainLog back = read_train_log(dir / "train_log.csv");
  CHECK(back.best_epoch == res.log.best_epoch);
  CHECK(back.epochs.size() == res.log.epochs.size());
  const auto paths_back = snapshot_epochs(back, want);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::filesystem::equivalent(paths_back[i], paths[i]));
  for (std::size_t i = 0; i < back.epochs.size(); ++i) {
    CHECK(back.epochs[i].train_loss == res.log.epochs[i].train_loss);
    CHECK(back.epochs[i].val_cc == res.log.epochs[i].val_cc);
  }
}

TEST_CASE("evaluation mean is the mean of the rows") {
  const auto m = SaliencyModel::initialized(tiny_backbone(), 2);
  std::vector<std::size_t> all(small_corpus().images.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const EvalResult r = evaluate(m, small_corpus(), all, Head::Original);
  REQUIRE(r.images.size() == all.size());
  double nss = 0, cc = 0, kld = 0;
  for (const auto& row : r.images) {
    nss += row.nss;
    cc += row.cc;
    kld += row.kld;
  }
  const double n = static_cast<double>(all.size());
  CHECK(std::abs(r.mean.nss - nss / n) <= 1e-12);
  CHECK(std::abs(r.mean.cc - cc / n) <= 1e-12);
  CHECK(std::abs(r.mean.kld - kld / n) <= 1e-12);
  CHECK(r.mean.image_id == "mean");
}

// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using basislens::testing::read_file;
using basislens::testing::TempDir;
using basislens::testing::write_file;

namespace {

const char* kSmallConfig =
    "# small run for the CLI tests\n"
    "seed = 2\n"
    "model.input_size = 32\n"
    "model.channels = 4,8,8\n"
    "model.num_bases = 16\n"
    "synth.objects_max = 3\n"
    "synth.object_size_min = 6\n"
    "synth.object_size_max = 10\n"
    "batch_size = 4\n"
    "stage1.learning_rate = 0.003\n"
    "stage1.max_epochs = 2\n"
    "stage2.learning_rate = 0.03\n"
    "stage2.max_epochs = 2\n";

int run(const std::string& args) {
  const std::string cmd = std::string(BASISLENS_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

TEST_CASE("usage problems exit with code 2") {
  TempDir dir("cli-usage");
  CHECK(run("synth-gen --config " + q(dir / "missing.conf") + " --out " + q(dir / "c")) == 2);
  CHECK(run("train --stage 2 --corpus " + q(dir / "c") + " --out " + q(dir / "o")) == 2);
  CHECK(run("train --stage 3 --corpus " + q(dir / "c") + " --out " + q(dir / "o")) == 2);
  CHECK(run("align --checkpoint " + q(dir / "none.ckpt") + " --corpus " + q(dir / "c") + " --out " + q(dir / "o")) ==
        2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("") == 2);
}

TEST_CASE("small end-to-end run through the command line") {
  TempDir dir("cli-run");
  const fs::path conf = dir / "small.conf";
  write_file(conf, kSmallConfig);
  const std::string c = " --config " + q(conf);

  REQUIRE(run("synth-gen" + c + " --n-images 10 --out " + q(dir / "corpus")) == 0);
  REQUIRE(run("synth-gen" + c + " --n-images 10 --out " + q(dir / "corpus2")) == 0);
  for (const char* f : {"annotations.tsv", "semantics.tsv"}) {
    CHECK(read_file(dir / "corpus" / f) == read_file(dir / "corpus2" / f));
  }

  REQUIRE(run("train" + c + " --stage 1 --corpus " + q(dir / "corpus") + " --out " + q(dir / "s1")) == 0);
  const fs::path s1 = dir / "s1" / "best.ckpt";
  CHECK(fs::exists(dir / "s1" / "train_log.csv"));
  CHECK(run("visualize" + c + " --checkpoint " + q(s1) + " --corpus " + q(dir / "corpus") + " --out " +
            q(dir / "v1")) == 2);
  CHECK(run("align" + c + " --checkpoint " + q(s1) + " --corpus " + q(dir / "corpus") + " --out " + q(dir / "a1")) ==
        2);

  REQUIRE(run("train" + c + " --stage 2 --from-checkpoint " + q(s1) + " --corpus " + q(dir / "corpus") + " --out " +
              q(dir / "s2")) == 0);
  const fs::path s2 = dir / "s2" / "best.ckpt";

  REQUIRE(run("evaluate" + c + " --checkpoint " + q(s2) + " --corpus " + q(dir / "corpus") + " --out " +
              q(dir / "eval")) == 0);
  const auto rows = read_csv(dir / "eval" / "metrics.csv");
  REQUIRE(rows.size() == 12);
  CHECK(rows[0] == std::vector<std::string>{"image_id", "nss", "cc", "kld"});
  double sums[3] = {0, 0, 0};
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
    for (int k = 0; k < 3; ++k) sums[k] += std::stod(rows[i][k + 1]);
  }
  CHECK(rows.back()[0] == "mean");
  for (int k = 0; k < 3; ++k) CHECK(std::abs(std::stod(rows.back()[k + 1]) - sums[k] / 10.0) <= 1e-9);
  CHECK(run("evaluate" + c + " --head sideways --checkpoint " + q(s2) + " --corpus " + q(dir / "corpus") + " --out " +
            q(dir / "eval")) == 2);

  REQUIRE(run("align" + c + " --checkpoint " + q(s2) + " --corpus " + q(dir / "corpus") + " --out " +
              q(dir / "align")) == 0);
  for (const char* f : {"alignment.csv", "importance.csv", "categories.csv"}) CHECK(fs::exists(dir / "align" / f));
  CHECK(run("align" + c + " --quantile 1.5 --checkpoint " + q(s2) + " --corpus " + q(dir / "corpus") + " --out " +
            q(dir / "align")) == 2);

  REQUIRE(run("visualize" + c + " --checkpoint " + q(s2) + " --corpus " + q(dir / "corpus") + " --out " +
              q(dir / "vis")) == 0);
  std::size_t overlays = 0;
  for (const auto& e : fs::directory_iterator(dir / "vis")) {
    overlays += e.path().string().ends_with(".overlay.png") ? 1 : 0;
  }
  CHECK(overlays == 10);
  CHECK(fs::exists(dir / "vis" / "importance.png"));
  CHECK(run("visualize" + c + " --top-fraction 0.8 --checkpoint " + q(s2) + " --corpus " + q(dir / "corpus") +
            " --out " + q(dir / "vis")) == 2);

  // Every run leaves a manifest and a byte-exact config snapshot.
  const fs::path manifest = dir / "s2" / "runs" / "train-001.json";
  REQUIRE(fs::exists(manifest));
  const auto doc = nlohmann::json::parse(read_file(manifest));
  CHECK(doc["subcommand"] == "train");
  CHECK(doc["parameters"]["stage"] == 2);
  CHECK(doc["config_path"] == conf.string());
  CHECK(read_file(dir / "s2" / "runs" / "train-001.config") == kSmallConfig);
  CHECK(fs::exists(dir / "align" / "runs" / "align-001.json"));
  CHECK(fs::exists(dir / "corpus" / "runs" / "synth-gen-001.json"));
}

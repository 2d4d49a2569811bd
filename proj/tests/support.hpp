// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "basislens/dataset.hpp"
#include "basislens/error.hpp"
#include "basislens/model.hpp"
#include "basislens/rng.hpp"
#include "basislens/tensor.hpp"
#include "basislens/trainer.hpp"

namespace basislens::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Uniform in +-[lo, hi], so values stay clear of zero.
inline Tensor random_away_from_zero(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor t(shape);
  for (auto& v : t.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  return t;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("basislens-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

template <typename Fn>
ErrorKind error_kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  throw std::logic_error("expected a basislens::Error");
}

// Small backbone so unit tests train in seconds: 32x32 input, 8x8 grid.
inline BackboneConfig tiny_backbone(std::size_t num_bases = 16) {
  BackboneConfig bc;
  bc.input_height = bc.input_width = 32;
  bc.channels = {4, 8, 8};
  bc.num_bases = num_bases;
  return bc;
}

inline SynthSpec tiny_spec(std::uint64_t seed = 7) {
  SynthSpec spec = default_synth_spec();
  spec.seed = seed;
  spec.height = spec.width = 32;
  spec.objects_min = 2;
  spec.objects_max = 3;
  spec.object_size_min = 6;
  spec.object_size_max = 10;
  return spec;
}

inline TrainConfig tiny_train(int stage, std::size_t epochs, double lr) {
  TrainConfig tc;
  tc.seed = 3;
  tc.stage = stage;
  tc.max_epochs = epochs;
  tc.learning_rate = lr;
  tc.batch_size = 4;
  tc.patience = epochs + 1;
  return tc;
}

}  // namespace basislens::testing

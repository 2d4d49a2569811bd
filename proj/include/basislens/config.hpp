// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "basislens/alignment.hpp"
#include "basislens/dataset.hpp"
#include "basislens/model.hpp"
#include "basislens/trainer.hpp"

namespace basislens {

// Flat `key = value` settings. `#` starts a comment; blank lines are ignored.
class Config {
 public:
  Config() = default;
  static Config parse(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // Exact text the config was parsed from (empty when built in code).
  const std::string& source_text() const { return text_; }

 private:
  std::map<std::string, std::string> values_;
  std::string text_;
};

// Typed views. Unknown keys are ignored; malformed values raise Config errors.
BackboneConfig backbone_config_from(const Config& cfg);
// Keys prefixed `stage1.` / `stage2.` override the plain key for that stage.
TrainConfig train_config_from(const Config& cfg, int stage);
SynthSpec synth_spec_from(const Config& cfg);
AlignmentOptions alignment_options_from(const Config& cfg);

}  // namespace basislens

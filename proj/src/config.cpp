// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include "basislens/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "basislens/error.hpp"

namespace basislens {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  fail(ErrorKind::Config, "config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

std::size_t get_size(const Config& cfg, const std::string& key, std::size_t fallback) {
  const long long v = cfg.get_int(key, static_cast<long long>(fallback));
  if (v < 0) bad_value(key, std::to_string(v), "a non-negative integer");
  return static_cast<std::size_t>(v);
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& source) {
  Config cfg;
  cfg.text_ = text;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Config, source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(ErrorKind::Config, source + ":" + std::to_string(lineno) + ": empty key");
    if (cfg.values_.count(key)) {
      fail(ErrorKind::Config, source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Config, "cannot read config file: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::optional<std::string> Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v->c_str(), &end);
  if (v->empty() || *end != '\0' || errno == ERANGE) bad_value(key, *v, "a number");
  return d;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  char* end = nullptr;
  errno = 0;
  const long long n = std::strtoll(v->c_str(), &end, 10);
  if (v->empty() || *end != '\0' || errno == ERANGE) bad_value(key, *v, "an integer");
  return n;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  bad_value(key, *v, "true or false");
}

BackboneConfig backbone_config_from(const Config& cfg) {
  BackboneConfig bc;
  const std::size_t input = get_size(cfg, "model.input_size", bc.input_height);
  bc.input_height = bc.input_width = input;
  if (auto ch = cfg.get("model.channels")) {
    bc.channels.clear();
    std::stringstream ss(*ch);
    std::string part;
    while (std::getline(ss, part, ',')) {
      Config one;
      one.set("model.channels", trim(part));
      const long long c = one.get_int("model.channels", 0);
      if (c <= 0) bad_value("model.channels", *ch, "three positive integers like 16,32,32");
      bc.channels.push_back(static_cast<std::size_t>(c));
    }
  }
  bc.num_bases = get_size(cfg, "model.num_bases", bc.num_bases);
  const std::string alpha = cfg.get_string("model.alpha", "dot");
  if (alpha != "dot" && alpha != "cosine") bad_value("model.alpha", alpha, "dot or cosine");
  bc.normalized_alpha = alpha == "cosine";
  bc.cosine_scale = cfg.get_double("model.cosine_scale", bc.cosine_scale);
  bc.validate();
  return bc;
}

TrainConfig train_config_from(const Config& base, int stage) {
  if (stage != 1 && stage != 2) fail(ErrorKind::Config, "stage must be 1 or 2");
  // stage<N>.<key> overrides <key> for that stage.
  Config cfg = base;
  const std::string prefix = "stage" + std::to_string(stage) + ".";
  for (const auto& [key, value] : base.values()) {
    if (key.rfind(prefix, 0) == 0) cfg.set(key.substr(prefix.size()), value);
  }
  cfg.set("stage", std::to_string(stage));
  TrainConfig tc;
  const long long seed = cfg.get_int("seed", static_cast<long long>(tc.seed));
  if (seed < 0) bad_value("seed", std::to_string(seed), "a non-negative integer");
  tc.seed = static_cast<std::uint64_t>(seed);
  tc.learning_rate = cfg.get_double("learning_rate", tc.learning_rate);
  const std::string opt = cfg.get_string("optimizer", "adam");
  if (opt == "adam") {
    tc.optimizer = OptimizerKind::Adam;
  } else if (opt == "sgd") {
    tc.optimizer = OptimizerKind::Sgd;
  } else {
    bad_value("optimizer", opt, "adam or sgd");
  }
  tc.momentum = cfg.get_double("momentum", tc.momentum);
  tc.batch_size = get_size(cfg, "batch_size", tc.batch_size);
  tc.max_epochs = get_size(cfg, "max_epochs", tc.max_epochs);
  tc.patience = get_size(cfg, "patience", tc.patience);
  tc.stage = static_cast<int>(cfg.get_int("stage", tc.stage));
  tc.loss.nss = cfg.get_double("loss.w_nss", tc.loss.nss);
  tc.loss.cc = cfg.get_double("loss.w_cc", tc.loss.cc);
  tc.loss.kld = cfg.get_double("loss.w_kld", tc.loss.kld);
  const std::string nw = cfg.get_string("loss.nss_target", "density");
  if (nw == "density") {
    tc.nss_weighting = NssWeighting::Density;
  } else if (nw == "points") {
    tc.nss_weighting = NssWeighting::Points;
  } else {
    bad_value("loss.nss_target", nw, "density or points");
  }
  tc.validate();
  return tc;
}

SynthSpec synth_spec_from(const Config& cfg) {
  SynthSpec spec = default_synth_spec();
  const long long seed = cfg.get_int("seed", static_cast<long long>(spec.seed));
  if (seed < 0) bad_value("seed", std::to_string(seed), "a non-negative integer");
  spec.seed = static_cast<std::uint64_t>(seed);
  const std::size_t size = get_size(cfg, "model.input_size", spec.height);
  spec.height = spec.width = size;
  spec.objects_min = get_size(cfg, "synth.objects_min", spec.objects_min);
  spec.objects_max = get_size(cfg, "synth.objects_max", spec.objects_max);
  spec.object_size_min = get_size(cfg, "synth.object_size_min", spec.object_size_min);
  spec.object_size_max = get_size(cfg, "synth.object_size_max", spec.object_size_max);
  spec.fixations_per_image = get_size(cfg, "synth.fixations", spec.fixations_per_image);
  spec.blur_sigma_fraction = cfg.get_double("synth.blur_sigma_fraction", spec.blur_sigma_fraction);
  spec.background_level = cfg.get_double("synth.background_level", spec.background_level);
  spec.pixel_noise = cfg.get_double("synth.pixel_noise", spec.pixel_noise);
  spec.val_fraction = cfg.get_double("synth.val_fraction", spec.val_fraction);
  // synth.weight.<name> overrides one planted weight.
  for (auto& s : spec.semantics) {
    s.planted_weight = cfg.get_double("synth.weight." + s.name, s.planted_weight);
  }
  for (const auto& [key, value] : cfg.values()) {
    if (key.rfind("synth.weight.", 0) != 0) continue;
    const std::string name = key.substr(13);
    const bool known = std::any_of(spec.semantics.begin(), spec.semantics.end(),
                                   [&](const SemanticStyle& s) { return s.name == name; });
    if (!known) fail(ErrorKind::Config, "config key '" + key + "': unknown semantic '" + name + "'");
  }
  spec.validate();
  return spec;
}

AlignmentOptions alignment_options_from(const Config& cfg) {
  AlignmentOptions o;
  o.quantile = cfg.get_double("align.quantile", o.quantile);
  o.topk = get_size(cfg, "align.topk", o.topk);
  const std::string scope = cfg.get_string("align.threshold_scope", "image");
  if (scope == "image") {
    o.scope = ThresholdScope::PerImage;
  } else if (scope == "dataset") {
    o.scope = ThresholdScope::Dataset;
  } else {
    bad_value("align.threshold_scope", scope, "image or dataset");
  }
  const std::string avg = cfg.get_string("align.average", "containing");
  if (avg == "containing") {
    o.average = AlignmentAverage::ContainingOnly;
  } else if (avg == "all") {
    o.average = AlignmentAverage::All;
  } else {
    bad_value("align.average", avg, "containing or all");
  }
  o.validate();
  return o;
}

}  // namespace basislens

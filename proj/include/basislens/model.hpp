// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "basislens/autodiff.hpp"
#include "basislens/tensor.hpp"

namespace basislens {

struct BackboneConfig {
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  // Widths of the three conv stages; the last one is the feature dim C.
  std::vector<std::size_t> channels = {16, 32, 32};
  std::size_t num_bases = 64;
  // Alternative activation: cosine between L2-normalized V and B, scaled by
  // `cosine_scale` before the sigmoid. Off by default (plain dot product).
  bool normalized_alpha = false;
  double cosine_scale = 10.0;

  std::size_t feature_channels() const { return channels.back(); }
  // Stages 1 and 2 downsample by 2 each.
  std::size_t downsample() const { return 4; }
  std::size_t grid_height() const { return input_height / downsample(); }
  std::size_t grid_width() const { return input_width / downsample(); }
  std::size_t grid_cells() const { return grid_height() * grid_width(); }

  void validate() const;
};

// RGB image laid out [3,H,W], values in [0,1].
using Image = Tensor;

// Spatial saliency map at feature resolution, shape [M,1].
using SaliencyMap = Tensor;

enum class Head { Original, Rerouted };

// Names of the learnable tensors, in checkpoint order.
inline constexpr const char* kConv1W = "backbone.conv1.weight";
inline constexpr const char* kConv1B = "backbone.conv1.bias";
inline constexpr const char* kConv2W = "backbone.conv2.weight";
inline constexpr const char* kConv2B = "backbone.conv2.bias";
inline constexpr const char* kConv3W = "backbone.conv3.weight";
inline constexpr const char* kConv3B = "backbone.conv3.bias";
inline constexpr const char* kBases = "head.bases";
inline constexpr const char* kWf = "head.wf";
inline constexpr const char* kWfBias = "head.wf_bias";
inline constexpr const char* kWsal = "head.wsal";
inline constexpr const char* kWsalBias = "head.wsal_bias";

// Toy conv backbone plus the basis factorization head.
class SaliencyModel {
 public:
  // Zero-initialized parameters.
  explicit SaliencyModel(BackboneConfig config);
  // Seeded initialization: He-normal convs, bases N(0,1)/sqrt(C), W^f
  // N(0,1)/sqrt(C), W^sal and all biases zero.
  static SaliencyModel initialized(BackboneConfig config, std::uint64_t seed);

  const BackboneConfig& config() const { return config_; }
  int stage() const { return stage_; }
  void set_stage(int stage);

  ad::Var& param(const std::string& name);
  const ad::Var& param(const std::string& name) const;
  const std::vector<std::string>& param_names() const { return names_; }
  std::vector<ad::Var> backbone_and_head_params();  // everything trained in stage 1
  std::vector<ad::Var> reroute_params();            // W^sal and its bias

  // [3,H,W] -> V as [M,C]
  ad::Var extract_features(const ad::Var& image) const;
  ad::Var compute_alpha(const ad::Var& features) const;
  ad::Var predict(const ad::Var& image, Head head) const;

  // Inference without graph bookkeeping.
  Tensor features(const Image& image) const;
  Tensor alpha(const Image& image) const;
  SaliencyMap saliency(const Image& image, Head head) const;

  void save(const std::filesystem::path& path) const;
  static SaliencyModel load(const std::filesystem::path& path);

 private:
  void add_param(const std::string& name, Tensor value);

  BackboneConfig config_;
  int stage_ = 1;
  std::vector<std::string> names_;
  std::map<std::string, ad::Var> params_;
};

// alpha[i,j] = sigmoid(V_i . B_j). V [M,C], B [N,C] -> [M,N].
ad::Var compute_alpha(const ad::Var& features, const ad::Var& bases);
// Cosine variant: sigmoid(scale * cos(V_i, B_j)).
ad::Var compute_alpha_cosine(const ad::Var& features, const ad::Var& bases, double scale);
// V^f = alpha * B. [M,N] x [N,C] -> [M,C].
ad::Var factorize_features(const ad::Var& alpha, const ad::Var& bases);
// S = V^f W^f + bias. W^f [C,1], bias [1] -> [M,1].
ad::Var predict_saliency_original(const ad::Var& factorized, const ad::Var& wf, const ad::Var& bias);
// S = alpha W^sal + bias. W^sal [N,1], bias [1] -> [M,1].
ad::Var predict_saliency_rerouted(const ad::Var& alpha, const ad::Var& wsal, const ad::Var& bias);

// Bilinear (corner-aligned) resize of a gh x gw map to target_h x target_w.
Tensor upsample_saliency(const Tensor& map, std::size_t grid_h, std::size_t grid_w, std::size_t target_h,
                         std::size_t target_w);

// Checkpoint container: text header (names, shapes, stage, config) followed
// by the tensors in BLT1 format, in header order.
struct Checkpoint {
  int stage = 1;
  BackboneConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;
};
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace basislens

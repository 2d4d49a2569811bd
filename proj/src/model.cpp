// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include "basislens/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "basislens/error.hpp"
#include "basislens/rng.hpp"

namespace basislens {

namespace {

constexpr const char* kCheckpointMagic = "BLCKPT1";

Tensor gaussian(Shape shape, double stdev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = stdev * rng.normal();
  return t;
}

}  // namespace

void BackboneConfig::validate() const {
  if (channels.size() != 3) fail(ErrorKind::Config, "backbone needs exactly 3 conv stage widths");
  for (auto c : channels) {
    if (c == 0) fail(ErrorKind::Config, "conv stage widths must be positive");
  }
  if (num_bases < 2) fail(ErrorKind::Config, "num_bases must be >= 2");
  if (input_height == 0 || input_width == 0 || input_height % downsample() != 0 ||
      input_width % downsample() != 0) {
    fail(ErrorKind::Config, "input size " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                                " must be positive and divisible by " + std::to_string(downsample()));
  }
  if (normalized_alpha && !(cosine_scale > 0.0)) fail(ErrorKind::Config, "cosine_scale must be positive");
}

SaliencyModel::SaliencyModel(BackboneConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& ch = config_.channels;
  const std::size_t c = config_.feature_channels();
  add_param(kConv1W, Tensor({ch[0], 3, 3, 3}));
  add_param(kConv1B, Tensor({ch[0]}));
  add_param(kConv2W, Tensor({ch[1], ch[0], 3, 3}));
  add_param(kConv2B, Tensor({ch[1]}));
  add_param(kConv3W, Tensor({ch[2], ch[1], 3, 3}));
  add_param(kConv3B, Tensor({ch[2]}));
  add_param(kBases, Tensor({config_.num_bases, c}));
  add_param(kWf, Tensor({c, 1}));
  add_param(kWfBias, Tensor({1}));
  add_param(kWsal, Tensor({config_.num_bases, 1}));
  add_param(kWsalBias, Tensor({1}));
}

SaliencyModel SaliencyModel::initialized(BackboneConfig config, std::uint64_t seed) {
  SaliencyModel m(std::move(config));
  Rng rng(seed);
  const auto& ch = m.config_.channels;
  const std::size_t c = m.config_.feature_channels();
  m.param(kConv1W).mutable_value() = gaussian({ch[0], 3, 3, 3}, std::sqrt(2.0 / 27.0), rng);
  m.param(kConv2W).mutable_value() = gaussian({ch[1], ch[0], 3, 3}, std::sqrt(2.0 / (9.0 * ch[0])), rng);
  m.param(kConv3W).mutable_value() = gaussian({ch[2], ch[1], 3, 3}, std::sqrt(2.0 / (9.0 * ch[1])), rng);
  m.param(kBases).mutable_value() = gaussian({m.config_.num_bases, c}, 1.0 / std::sqrt(double(c)), rng);
  m.param(kWf).mutable_value() = gaussian({c, 1}, 1.0 / std::sqrt(double(c)), rng);
  return m;
}

void SaliencyModel::add_param(const std::string& name, Tensor value) {
  names_.push_back(name);
  params_.emplace(name, ad::Var::leaf(std::move(value), true));
}

void SaliencyModel::set_stage(int stage) {
  if (stage != 1 && stage != 2) fail(ErrorKind::InvalidArgument, "stage must be 1 or 2");
  stage_ = stage;
}

ad::Var& SaliencyModel::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorKind::InvalidArgument, "unknown parameter '" + name + "'");
  return it->second;
}

const ad::Var& SaliencyModel::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorKind::InvalidArgument, "unknown parameter '" + name + "'");
  return it->second;
}

std::vector<ad::Var> SaliencyModel::backbone_and_head_params() {
  return {param(kConv1W), param(kConv1B), param(kConv2W), param(kConv2B), param(kConv3W),
          param(kConv3B), param(kBases),  param(kWf),     param(kWfBias)};
}

std::vector<ad::Var> SaliencyModel::reroute_params() { return {param(kWsal), param(kWsalBias)}; }

ad::Var SaliencyModel::extract_features(const ad::Var& image) const {
  const Shape expected{3, config_.input_height, config_.input_width};
  if (image.shape() != expected) {
    throw ShapeError("extract_features: expected image " + shape_str(expected) + ", got " +
                     shape_str(image.shape()));
  }
  using ad::Conv2dOptions;
  auto h = ad::relu(ad::conv2d(image, param(kConv1W), param(kConv1B), Conv2dOptions{2, ad::Padding::Same}));
  h = ad::relu(ad::conv2d(h, param(kConv2W), param(kConv2B), Conv2dOptions{2, ad::Padding::Same}));
  h = ad::relu(ad::conv2d(h, param(kConv3W), param(kConv3B), Conv2dOptions{1, ad::Padding::Same}));
  // [C,m,m] -> [C,M] -> [M,C]
  const std::size_t c = config_.feature_channels();
  return ad::transpose(ad::reshape(h, {c, config_.grid_cells()}));
}

ad::Var SaliencyModel::compute_alpha(const ad::Var& features) const {
  if (config_.normalized_alpha) return compute_alpha_cosine(features, param(kBases), config_.cosine_scale);
  return basislens::compute_alpha(features, param(kBases));
}

ad::Var SaliencyModel::predict(const ad::Var& image, Head head) const {
  auto alpha = compute_alpha(extract_features(image));
  if (head == Head::Rerouted) return predict_saliency_rerouted(alpha, param(kWsal), param(kWsalBias));
  return predict_saliency_original(factorize_features(alpha, param(kBases)), param(kWf), param(kWfBias));
}

Tensor SaliencyModel::features(const Image& image) const {
  ad::NoGradGuard guard;
  return extract_features(ad::Var::constant(image)).value();
}

Tensor SaliencyModel::alpha(const Image& image) const {
  ad::NoGradGuard guard;
  return compute_alpha(extract_features(ad::Var::constant(image))).value();
}

SaliencyMap SaliencyModel::saliency(const Image& image, Head head) const {
  ad::NoGradGuard guard;
  return predict(ad::Var::constant(image), head).value();
}

ad::Var compute_alpha(const ad::Var& features, const ad::Var& bases) {
  if (features.value().rank() != 2 || bases.value().rank() != 2 || features.shape()[1] != bases.shape()[1]) {
    throw ShapeError("compute_alpha: channel mismatch between features " + shape_str(features.shape()) +
                     " and bases " + shape_str(bases.shape()));
  }
  return ad::sigmoid(ad::matmul(features, ad::transpose(bases)));
}

namespace {

// Rows of x [R,C] scaled to unit L2 norm (zero rows stay zero up to the floor).
ad::Var normalize_rows(const ad::Var& x) {
  const auto r = x.shape()[0];
  const auto c = x.shape()[1];
  auto xt = ad::transpose(x);                                  // [C,R]
  auto norms = ad::sqrt(ad::add_scalar(ad::sum_rows(ad::mul(xt, xt)), 1e-12));  // [1,R]
  return ad::transpose(ad::div(xt, ad::broadcast(norms, {c, r})));
}

}  // namespace

ad::Var compute_alpha_cosine(const ad::Var& features, const ad::Var& bases, double scale) {
  if (features.value().rank() != 2 || bases.value().rank() != 2 || features.shape()[1] != bases.shape()[1]) {
    throw ShapeError("compute_alpha: channel mismatch between features " + shape_str(features.shape()) +
                     " and bases " + shape_str(bases.shape()));
  }
  auto cosine = ad::matmul(normalize_rows(features), ad::transpose(normalize_rows(bases)));
  return ad::sigmoid(ad::scale(cosine, scale));
}

ad::Var factorize_features(const ad::Var& alpha, const ad::Var& bases) {
  if (alpha.value().rank() != 2 || bases.value().rank() != 2 || alpha.shape()[1] != bases.shape()[0]) {
    throw ShapeError("factorize_features: alpha " + shape_str(alpha.shape()) + " incompatible with bases " +
                     shape_str(bases.shape()));
  }
  return ad::matmul(alpha, bases);
}

namespace {

ad::Var linear_readout(const char* what, const ad::Var& x, const ad::Var& w, const ad::Var& bias) {
  if (x.value().rank() != 2 || w.shape() != Shape{x.shape()[1], 1} || bias.numel() != 1) {
    throw ShapeError(std::string(what) + ": input " + shape_str(x.shape()) + " incompatible with weights " +
                     shape_str(w.shape()) + " / bias " + shape_str(bias.shape()));
  }
  auto s = ad::matmul(x, w);
  return ad::add(s, ad::broadcast(bias, s.shape()));
}

}  // namespace

ad::Var predict_saliency_original(const ad::Var& factorized, const ad::Var& wf, const ad::Var& bias) {
  return linear_readout("predict_saliency_original", factorized, wf, bias);
}

ad::Var predict_saliency_rerouted(const ad::Var& alpha, const ad::Var& wsal, const ad::Var& bias) {
  return linear_readout("predict_saliency_rerouted", alpha, wsal, bias);
}

Tensor upsample_saliency(const Tensor& map, std::size_t grid_h, std::size_t grid_w, std::size_t target_h,
                         std::size_t target_w) {
  if (target_h < 2 || target_w < 2) {
    throw ShapeError("upsample_saliency: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                     " is smaller than 2x2");
  }
  if (grid_h == 0 || grid_w == 0 || map.numel() != grid_h * grid_w) {
    throw ShapeError("upsample_saliency: map of " + std::to_string(map.numel()) + " values is not " +
                     std::to_string(grid_h) + "x" + std::to_string(grid_w));
  }
  Tensor out({target_h, target_w});
  auto src_coord = [](std::size_t i, std::size_t n_out, std::size_t n_in) {
    if (n_in == 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
  };
  for (std::size_t y = 0; y < target_h; ++y) {
    const double sy = src_coord(y, target_h, grid_h);
    const std::size_t y0 = std::min(static_cast<std::size_t>(sy), grid_h - 1);
    const std::size_t y1 = std::min(y0 + 1, grid_h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < target_w; ++x) {
      const double sx = src_coord(x, target_w, grid_w);
      const std::size_t x0 = std::min(static_cast<std::size_t>(sx), grid_w - 1);
      const std::size_t x1 = std::min(x0 + 1, grid_w - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = map[y0 * grid_w + x0] * (1.0 - fx) + map[y0 * grid_w + x1] * fx;
      const double bot = map[y1 * grid_w + x0] * (1.0 - fx) + map[y1 * grid_w + x1] * fx;
      out[y * target_w + x] = top * (1.0 - fy) + bot * fy;
    }
  }
  return out;
}

void SaliencyModel::save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.stage = stage_;
  ckpt.config = config_;
  for (const auto& n : names_) ckpt.tensors.emplace_back(n, param(n).value());
  write_checkpoint(path, ckpt);
}

SaliencyModel SaliencyModel::load(const std::filesystem::path& path) {
  Checkpoint ckpt = read_checkpoint(path);
  SaliencyModel m(ckpt.config);
  m.set_stage(ckpt.stage);
  if (ckpt.tensors.size() != m.names_.size()) {
    fail(ErrorKind::Format, "checkpoint " + path.string() + " has " + std::to_string(ckpt.tensors.size()) +
                                " tensors, expected " + std::to_string(m.names_.size()));
  }
  for (auto& [name, t] : ckpt.tensors) {
    auto& p = m.param(name);
    if (p.shape() != t.shape()) {
      fail(ErrorKind::Format, "checkpoint tensor " + name + " has shape " + shape_str(t.shape()) + ", expected " +
                                  shape_str(p.shape()));
    }
    if (!t.all_finite()) fail(ErrorKind::Format, "checkpoint tensor " + name + " contains non-finite values");
    p.mutable_value() = std::move(t);
  }
  return m;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot open checkpoint for writing: " + path.string());
  const auto& c = ckpt.config;
  os << kCheckpointMagic << '\n';
  os << "stage " << ckpt.stage << '\n';
  os << "input " << c.input_height << ' ' << c.input_width << '\n';
  os << "channels " << c.channels[0] << ' ' << c.channels[1] << ' ' << c.channels[2] << '\n';
  os << "bases " << c.num_bases << '\n';
  os << "alpha " << (c.normalized_alpha ? "cosine" : "dot") << ' ';
  {
    std::ostringstream s;
    s.precision(17);
    s << c.cosine_scale;
    os << s.str() << '\n';
  }
  os << "tensors " << ckpt.tensors.size() << '\n';
  for (const auto& [name, t] : ckpt.tensors) {
    os << name;
    for (auto d : t.shape()) os << ' ' << d;
    os << '\n';
  }
  os << "end\n";
  for (const auto& [name, t] : ckpt.tensors) write_tensor(os, t);
  if (!os) fail(ErrorKind::Io, "failed writing checkpoint: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open checkpoint: " + path.string());
  auto bad = [&](const std::string& why) -> void {
    fail(ErrorKind::Format, "corrupt checkpoint " + path.string() + ": " + why);
  };
  std::string line;
  std::getline(is, line);
  if (line != kCheckpointMagic) bad("bad magic");

  Checkpoint ckpt;
  std::vector<std::pair<std::string, Shape>> header;
  std::size_t expected_tensors = 0;
  bool saw_end = false;
  while (std::getline(is, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    auto& c = ckpt.config;
    if (key == "stage") {
      ls >> ckpt.stage;
    } else if (key == "input") {
      ls >> c.input_height >> c.input_width;
    } else if (key == "channels") {
      c.channels.assign(3, 0);
      ls >> c.channels[0] >> c.channels[1] >> c.channels[2];
    } else if (key == "bases") {
      ls >> c.num_bases;
    } else if (key == "alpha") {
      std::string mode;
      ls >> mode >> c.cosine_scale;
      c.normalized_alpha = mode == "cosine";
    } else if (key == "tensors") {
      ls >> expected_tensors;
    } else {
      Shape shape;
      std::size_t d = 0;
      while (ls >> d) shape.push_back(d);
      if (shape.empty()) bad("tensor '" + key + "' has no shape");
      header.emplace_back(key, std::move(shape));
      continue;
    }
    if (ls.fail()) bad("malformed header line '" + line + "'");
  }
  if (!saw_end) bad("missing header terminator");
  if (ckpt.stage != 1 && ckpt.stage != 2) bad("stage must be 1 or 2");
  if (header.size() != expected_tensors) bad("tensor count mismatch");
  for (auto& [name, shape] : header) {
    Tensor t = read_tensor(is);
    if (t.shape() != shape) bad("tensor '" + name + "' shape disagrees with header");
    ckpt.tensors.emplace_back(name, std::move(t));
  }
  return ckpt;
}

}  // namespace basislens

// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include "basislens/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "basislens/error.hpp"

namespace basislens {

namespace {

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

Moments moments(std::span<const double> x) {
  Moments m;
  for (double v : x) m.mean += v;
  m.mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(var / static_cast<double>(x.size()));
  return m;
}

void require_same_size(const char* what, std::size_t a, std::size_t b) {
  if (a != b || a == 0) {
    throw ShapeError(std::string(what) + ": map sizes differ (" + std::to_string(a) + " vs " + std::to_string(b) +
                     ")");
  }
}

}  // namespace

void FixationData::validate() const {
  if (points.empty()) fail(ErrorKind::InvalidArgument, "fixation data needs at least one point");
  for (const auto& p : points) {
    if (p.row >= height || p.col >= width) {
      fail(ErrorKind::InvalidArgument, "fixation (" + std::to_string(p.row) + "," + std::to_string(p.col) +
                                           ") outside " + std::to_string(height) + "x" + std::to_string(width));
    }
  }
  if (density.shape() != Shape{height, width}) {
    throw ShapeError("density map shape " + shape_str(density.shape()) + " does not match " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  double total = 0.0;
  for (double v : density.data()) {
    if (v < 0.0) fail(ErrorKind::InvalidArgument, "density map has negative values");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) fail(ErrorKind::InvalidArgument, "density map sums to " + std::to_string(total));
}

FixationData downsample_fixations(const FixationData& fix, std::size_t factor) {
  if (factor == 0 || fix.height % factor != 0 || fix.width % factor != 0) {
    throw ShapeError("downsample_fixations: " + std::to_string(fix.height) + "x" + std::to_string(fix.width) +
                     " not divisible by " + std::to_string(factor));
  }
  FixationData out;
  out.height = fix.height / factor;
  out.width = fix.width / factor;
  out.density = Tensor({out.height, out.width}, 0.0);
  for (std::size_t r = 0; r < fix.height; ++r)
    for (std::size_t c = 0; c < fix.width; ++c)
      out.density[(r / factor) * out.width + c / factor] += fix.density[r * fix.width + c];
  out.points.reserve(fix.points.size());
  for (const auto& p : fix.points) out.points.push_back({p.row / factor, p.col / factor});
  return out;
}

void LossWeights::validate() const {
  if (nss < 0.0 || cc < 0.0 || kld < 0.0) fail(ErrorKind::Config, "loss weights must be non-negative");
  if (nss == 0.0 && cc == 0.0 && kld == 0.0) fail(ErrorKind::Config, "at least one loss weight must be positive");
}

double nss(std::span<const double> saliency, std::size_t width, std::span<const FixationPoint> points) {
  if (points.empty()) fail(ErrorKind::InvalidArgument, "nss: empty fixation list");
  if (width == 0 || saliency.size() % width != 0) throw ShapeError("nss: bad map width");
  const std::size_t height = saliency.size() / width;
  const auto m = moments(saliency);
  if (m.std < kDegenerateStd) return 0.0;
  double acc = 0.0;
  for (const auto& p : points) {
    if (p.row >= height || p.col >= width) fail(ErrorKind::InvalidArgument, "nss: fixation out of bounds");
    acc += (saliency[p.row * width + p.col] - m.mean) / m.std;
  }
  return acc / static_cast<double>(points.size());
}

double cc(std::span<const double> saliency, std::span<const double> density) {
  require_same_size("cc", saliency.size(), density.size());
  const auto ms = moments(saliency);
  const auto md = moments(density);
  if (ms.std < kDegenerateStd || md.std < kDegenerateStd) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < saliency.size(); ++i) acc += (saliency[i] - ms.mean) * (density[i] - md.mean);
  const double r = acc / static_cast<double>(saliency.size()) / (ms.std * md.std);
  return std::clamp(r, -1.0, 1.0);
}

double kld(std::span<const double> saliency, std::span<const double> density) {
  require_same_size("kld", saliency.size(), density.size());
  double lo = std::numeric_limits<double>::infinity();
  for (double v : saliency) lo = std::min(lo, v);
  const double shift = std::min(0.0, lo);
  double total = 0.0;
  for (double v : saliency) total += v - shift;
  total = std::max(total, kKldEpsilon);
  double acc = 0.0;
  for (std::size_t i = 0; i < saliency.size(); ++i) {
    const double q = (saliency[i] - shift) / total;
    const double p = density[i];
    acc += p * (std::log(p + kKldEpsilon) - std::log(q + kKldEpsilon));
  }
  return std::max(0.0, acc);
}

ad::Var nss_loss_term(const ad::Var& saliency, const Tensor& fixation_weights) {
  require_same_size("nss", saliency.numel(), fixation_weights.numel());
  auto s = ad::reshape(saliency, {saliency.numel()});
  auto sd = ad::stddev(s);
  if (sd.item() < kDegenerateStd) return ad::Var::constant(Tensor::scalar(0.0));
  auto centered = ad::sub(s, ad::broadcast(ad::mean(s), s.shape()));
  auto z = ad::div(centered, ad::broadcast(sd, s.shape()));
  auto w = ad::Var::constant(fixation_weights.reshaped({fixation_weights.numel()}));
  double wsum = 0.0;
  for (double v : fixation_weights.data()) wsum += v;
  return ad::scale(ad::sum(ad::mul(z, w)), 1.0 / wsum);
}

ad::Var cc_loss_term(const ad::Var& saliency, const Tensor& density) {
  require_same_size("cc", saliency.numel(), density.numel());
  const std::size_t n = saliency.numel();
  auto s = ad::reshape(saliency, {n});
  auto sd = ad::stddev(s);
  const auto md = moments(density.data());
  if (sd.item() < kDegenerateStd || md.std < kDegenerateStd) return ad::Var::constant(Tensor::scalar(0.0));
  Tensor dc({n});
  for (std::size_t i = 0; i < n; ++i) dc[i] = (density[i] - md.mean) / md.std;
  auto centered = ad::sub(s, ad::broadcast(ad::mean(s), s.shape()));
  auto cov = ad::mean(ad::mul(centered, ad::Var::constant(std::move(dc))));
  return ad::div(cov, sd);
}

ad::Var kld_loss_term(const ad::Var& saliency, const Tensor& density) {
  require_same_size("kld", saliency.numel(), density.numel());
  const std::size_t n = saliency.numel();
  auto s = ad::reshape(saliency, {n});
  auto shift = ad::clamp(ad::min(s), -std::numeric_limits<double>::infinity(), 0.0);
  auto shifted = ad::sub(s, ad::broadcast(shift, s.shape()));
  auto total = ad::clamp(ad::sum(shifted), kKldEpsilon, std::numeric_limits<double>::infinity());
  auto q = ad::div(shifted, ad::broadcast(total, s.shape()));
  auto log_q = ad::log(ad::add_scalar(q, kKldEpsilon));
  Tensor p({n}), log_p({n});
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = density[i];
    log_p[i] = std::log(density[i] + kKldEpsilon);
  }
  auto diff = ad::sub(ad::Var::constant(std::move(log_p)), log_q);
  return ad::sum(ad::mul(ad::Var::constant(std::move(p)), diff));
}

Tensor nss_weights(const FixationData& fix, NssWeighting mode) {
  if (mode == NssWeighting::Density) return fix.density;
  if (fix.points.empty()) fail(ErrorKind::InvalidArgument, "nss: empty fixation list");
  Tensor w({fix.height, fix.width}, 0.0);
  for (const auto& p : fix.points) {
    if (p.row >= fix.height || p.col >= fix.width) fail(ErrorKind::InvalidArgument, "nss: fixation out of bounds");
    w[p.row * fix.width + p.col] += 1.0;
  }
  return w;
}

ad::Var combined_loss(const ad::Var& saliency, const FixationData& fix, const LossWeights& weights,
                      NssWeighting mode) {
  weights.validate();
  require_same_size("combined_loss", saliency.numel(), fix.density.numel());
  ad::Var total = ad::Var::constant(Tensor::scalar(0.0));
  if (weights.kld != 0.0) total = ad::add(total, ad::scale(kld_loss_term(saliency, fix.density), weights.kld));
  if (weights.nss != 0.0) {
    total = ad::sub(total, ad::scale(nss_loss_term(saliency, nss_weights(fix, mode)), weights.nss));
  }
  if (weights.cc != 0.0) total = ad::sub(total, ad::scale(cc_loss_term(saliency, fix.density), weights.cc));
  return total;
}

}  // namespace basislens

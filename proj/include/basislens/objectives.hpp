// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "basislens/autodiff.hpp"
#include "basislens/tensor.hpp"

namespace basislens {

struct FixationPoint {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const FixationPoint&, const FixationPoint&) = default;
};

// Ground truth at one resolution: discrete fixations plus a density map
// ([H,W], non-negative, sums to 1).
struct FixationData {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<FixationPoint> points;
  Tensor density;

  void validate() const;
};

// Sum-pools the density by `factor` and maps points onto the coarse grid.
FixationData downsample_fixations(const FixationData& fix, std::size_t factor);

struct LossWeights {
  double nss = 1.0;
  double cc = 1.0;
  double kld = 1.0;
  void validate() const;
};

enum class NssWeighting {
  Density,  // soft fixation weighting by the density map (training default)
  Points,   // discrete fixation points
};

inline constexpr double kDegenerateStd = 1e-12;
inline constexpr double kKldEpsilon = 1e-8;

// Evaluation metrics over flattened maps (length H*W).
double nss(std::span<const double> saliency, std::size_t width, std::span<const FixationPoint> points);
double cc(std::span<const double> saliency, std::span<const double> density);
double kld(std::span<const double> saliency, std::span<const double> density);

// Differentiable counterparts. `saliency` is any shape with H*W elements.
ad::Var nss_loss_term(const ad::Var& saliency, const Tensor& fixation_weights);
ad::Var cc_loss_term(const ad::Var& saliency, const Tensor& density);
ad::Var kld_loss_term(const ad::Var& saliency, const Tensor& density);

// Fixation weights for the NSS term: the density itself, or point counts / n.
Tensor nss_weights(const FixationData& fix, NssWeighting mode);

// w_kld * KLD - w_nss * NSS - w_cc * CC
ad::Var combined_loss(const ad::Var& saliency, const FixationData& fix, const LossWeights& weights,
                      NssWeighting mode = NssWeighting::Density);

}  // namespace basislens

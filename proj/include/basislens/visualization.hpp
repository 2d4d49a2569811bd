// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "basislens/alignment.hpp"
#include "basislens/dataset.hpp"
#include "basislens/model.hpp"

namespace basislens {

struct OverlayOptions {
  double top_fraction = 0.1;  // of N, per sign
  double opacity = 0.5;       // weight of the colormap in the blend

  void validate() const;
};

// Bases picked for the overlay, ordered by |W^sal| descending (ties by index).
// Only strictly positive / strictly negative weights qualify.
struct BasisSelection {
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
};
BasisSelection select_bases(std::span<const double> wsal, double top_fraction);

// Sum of the selected alpha columns with +1 / -1 weights, divided by the
// largest magnitude when that exceeds 1e-12. alpha [M,N] -> [M].
Tensor signed_basis_map(const Tensor& alpha, const BasisSelection& sel);

struct PolarityOverlay {
  std::string image_id;
  Tensor signed_map;  // [H,W] in [-1,1]
  Tensor rgb;         // [3,H,W]
};

// Positive values tint toward red, negative toward blue.
Tensor blend_overlay(const Tensor& image, const Tensor& signed_map, double opacity);

PolarityOverlay basis_distribution_map(const SaliencyModel& model, const AnnotatedImage& image,
                                       const OverlayOptions& opts = {});

// Writes `<image_id>.overlay.png` into dir and returns its path.
std::filesystem::path write_overlay(const PolarityOverlay& overlay, const std::filesystem::path& dir);

// The top_k semantics by |I| (clamped to P), sorted by I descending; ties
// keep the lower id first.
std::vector<ImportanceRow> chart_rows(const ImportanceReport& report, const SemanticVocabulary& vocab,
                                      std::size_t top_k);

// Vertical bars around a zero line with ticks at -1, -0.5, 0, 0.5, 1.
Tensor render_bar_chart(const std::vector<ImportanceRow>& rows);

// Writes importance.csv and importance.png into dir.
void emit_importance_chart_data(const ImportanceReport& report, const SemanticVocabulary& vocab, long long top_k,
                                const std::filesystem::path& dir);

}  // namespace basislens

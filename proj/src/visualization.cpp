// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include "basislens/visualization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "basislens/error.hpp"
#include "basislens/png_io.hpp"

namespace basislens {

namespace fs = std::filesystem;

namespace {

constexpr double kNormFloor = 1e-12;

struct Rgb {
  double r, g, b;
};

void fill_rect(Tensor& img, long x0, long y0, long x1, long y1, Rgb c) {
  const long h = static_cast<long>(img.dim(1)), w = static_cast<long>(img.dim(2));
  x0 = std::max(0L, x0);
  y0 = std::max(0L, y0);
  x1 = std::min(w, x1);
  y1 = std::min(h, y1);
  const std::size_t plane = img.dim(1) * img.dim(2);
  for (long y = y0; y < y1; ++y) {
    for (long x = x0; x < x1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y * w + x);
      img[i] = c.r;
      img[plane + i] = c.g;
      img[2 * plane + i] = c.b;
    }
  }
}

}  // namespace

void OverlayOptions::validate() const {
  if (!(top_fraction > 0.0 && top_fraction <= 0.5)) fail(ErrorKind::Config, "top fraction must be in (0, 0.5]");
  if (!(opacity >= 0.0 && opacity <= 1.0)) fail(ErrorKind::Config, "opacity must be in [0,1]");
}

BasisSelection select_bases(std::span<const double> wsal, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 0.5)) fail(ErrorKind::InvalidArgument, "top fraction must be in (0, 0.5]");
  const auto k = static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(wsal.size()) - 1e-9));
  std::vector<std::size_t> order(wsal.size());
  std::iota(order.begin(), order.end(), 0);
  BasisSelection sel;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return wsal[a] > wsal[b]; });
  for (std::size_t j : order) {
    if (sel.positive.size() == k || !(wsal[j] > 0.0)) break;
    sel.positive.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return wsal[a] < wsal[b]; });
  for (std::size_t j : order) {
    if (sel.negative.size() == k || !(wsal[j] < 0.0)) break;
    sel.negative.push_back(j);
  }
  return sel;
}

Tensor signed_basis_map(const Tensor& alpha, const BasisSelection& sel) {
  if (alpha.rank() != 2) throw ShapeError("alpha must be [M,N], got " + shape_str(alpha.shape()));
  const std::size_t m = alpha.dim(0), n = alpha.dim(1);
  Tensor out({m}, 0.0);
  auto accumulate = [&](const std::vector<std::size_t>& bases, double sign) {
    for (std::size_t j : bases) {
      if (j >= n) fail(ErrorKind::InvalidArgument, "selected basis out of range");
      for (std::size_t i = 0; i < m; ++i) out[i] += sign * alpha[i * n + j];
    }
  };
  accumulate(sel.positive, 1.0);
  accumulate(sel.negative, -1.0);
  double peak = 0.0;
  for (double v : out.data()) peak = std::max(peak, std::abs(v));
  if (peak > kNormFloor) {
    for (auto& v : out.data()) v /= peak;
  }
  return out;
}

Tensor blend_overlay(const Tensor& image, const Tensor& signed_map, double opacity) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("image must be [3,H,W], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  if (signed_map.numel() != plane) throw ShapeError("signed map does not match the image size");
  Tensor out(image.shape());
  for (std::size_t i = 0; i < plane; ++i) {
    const double v = std::clamp(signed_map[i], -1.0, 1.0);
    Rgb c{1.0, 1.0, 1.0};
    if (v > 0.0) c = {1.0, 1.0 - v, 1.0 - v};
    if (v < 0.0) c = {1.0 + v, 1.0 + v, 1.0};
    out[i] = (1.0 - opacity) * image[i] + opacity * c.r;
    out[plane + i] = (1.0 - opacity) * image[plane + i] + opacity * c.g;
    out[2 * plane + i] = (1.0 - opacity) * image[2 * plane + i] + opacity * c.b;
  }
  return out;
}

PolarityOverlay basis_distribution_map(const SaliencyModel& model, const AnnotatedImage& image,
                                       const OverlayOptions& opts) {
  opts.validate();
  if (model.stage() != 2) fail(ErrorKind::State, "basis overlays need a stage-2 checkpoint (W^sal is untrained)");
  const auto& bc = model.config();
  const auto sel = select_bases(model.param(kWsal).value().data(), opts.top_fraction);
  const Tensor grid = signed_basis_map(model.alpha(image.pixels), sel);
  PolarityOverlay ov;
  ov.image_id = image.id;
  ov.signed_map = upsample_saliency(grid, bc.grid_height(), bc.grid_width(), image.height(), image.width());
  for (auto& v : ov.signed_map.data()) v = std::clamp(v, -1.0, 1.0);
  ov.rgb = blend_overlay(image.pixels, ov.signed_map, opts.opacity);
  return ov;
}

fs::path write_overlay(const PolarityOverlay& overlay, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path p = dir / (overlay.image_id + ".overlay.png");
  write_png_rgb(p, overlay.rgb);
  return p;
}

std::vector<ImportanceRow> chart_rows(const ImportanceReport& report, const SemanticVocabulary& vocab,
                                      std::size_t top_k) {
  if (report.importance.empty()) fail(ErrorKind::InvalidArgument, "importance report is empty");
  if (report.importance.size() != vocab.size()) fail(ErrorKind::InvalidArgument, "report and vocabulary sizes differ");
  const auto& imp = report.importance;
  std::vector<std::size_t> order(imp.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(imp[a]) > std::abs(imp[b]); });
  order.resize(std::min(top_k, order.size()));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return imp[a] != imp[b] ? imp[a] > imp[b] : a < b;
  });
  std::vector<ImportanceRow> rows;
  for (std::size_t p : order) rows.push_back({p, vocab[p].name, vocab[p].category, imp[p]});
  return rows;
}

Tensor render_bar_chart(const std::vector<ImportanceRow>& rows) {
  constexpr long kMargin = 24, kBar = 14, kGap = 6, kHalf = 100;
  const long width = 2 * kMargin + static_cast<long>(rows.size()) * (kBar + kGap) + kGap;
  const long height = 2 * kMargin + 2 * kHalf + 1;
  Tensor img({3, static_cast<std::size_t>(height), static_cast<std::size_t>(width)}, 1.0);
  const long zero_y = kMargin + kHalf;
  const Rgb grid{0.85, 0.85, 0.85}, axis{0.0, 0.0, 0.0};
  const Rgb pos{0.80, 0.15, 0.15}, neg{0.15, 0.30, 0.80};

  for (double t : {-1.0, -0.5, 0.5, 1.0}) {
    const long y = zero_y - std::lround(t * kHalf);
    fill_rect(img, kMargin, y, width - kMargin, y + 1, grid);
    fill_rect(img, kMargin - 6, y, kMargin, y + 1, axis);
  }
  fill_rect(img, kMargin - 6, zero_y, kMargin, zero_y + 1, axis);
  fill_rect(img, kMargin - 1, kMargin, kMargin, kMargin + 2 * kHalf + 1, axis);

  long x = kMargin + kGap;
  for (const auto& r : rows) {
    const double v = std::clamp(r.importance, -1.0, 1.0);
    const long len = std::lround(std::abs(v) * kHalf);
    if (v > 0.0) fill_rect(img, x, zero_y - len, x + kBar, zero_y, pos);
    if (v < 0.0) fill_rect(img, x, zero_y + 1, x + kBar, zero_y + 1 + len, neg);
    x += kBar + kGap;
  }
  fill_rect(img, kMargin, zero_y, width - kMargin, zero_y + 1, axis);
  return img;
}

void emit_importance_chart_data(const ImportanceReport& report, const SemanticVocabulary& vocab, long long top_k,
                                const fs::path& dir) {
  if (top_k <= 0) fail(ErrorKind::InvalidArgument, "chart top_k must be positive");
  const auto rows = chart_rows(report, vocab, static_cast<std::size_t>(top_k));
  fs::create_directories(dir);
  write_importance_rows(rows, dir / "importance.csv");
  write_png_rgb(dir / "importance.png", render_bar_chart(rows));
}

}  // namespace basislens

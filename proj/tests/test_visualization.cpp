// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include "basislens/png_io.hpp"
#include "basislens/visualization.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace basislens;
using basislens::testing::error_kind_of;
using basislens::testing::random_tensor;
using basislens::testing::TempDir;
using basislens::testing::tiny_backbone;

namespace {

// Pixels where blue clearly dominates red, i.e. negative-bar colour.
std::size_t blue_pixels(const Tensor& rgb) {
  const std::size_t plane = rgb.dim(1) * rgb.dim(2);
  std::size_t n = 0;
  for (std::size_t i = 0; i < plane; ++i) n += rgb[2 * plane + i] > rgb[i] + 0.3 ? 1 : 0;
  return n;
}

std::size_t red_pixels(const Tensor& rgb) {
  const std::size_t plane = rgb.dim(1) * rgb.dim(2);
  std::size_t n = 0;
  for (std::size_t i = 0; i < plane; ++i) n += rgb[i] > rgb[2 * plane + i] + 0.3 ? 1 : 0;
  return n;
}

SemanticVocabulary vocab_of(std::size_t n) {
  SemanticVocabulary v;
  for (std::size_t i = 0; i < n; ++i) v.add("s" + std::to_string(i), "cat" + std::to_string(i % 3));
  return v;
}

ImportanceReport report_of(std::vector<double> imp) {
  ImportanceReport r;
  r.raw = imp;
  r.participating.assign(imp.size(), 1);
  r.importance = std::move(imp);
  return r;
}

// Backbone whose feature channel 0 reads the red channel above 0.6 at grid
// cell (r, c), sampled from pixel (4r+3, 4c+3); basis 0 fires on it.
SaliencyModel red_detector() {
  SaliencyModel m(tiny_backbone());
  auto& w1 = m.param(kConv1W).mutable_value();
  w1[((0 * 3 + 0) * 3 + 1) * 3 + 1] = 1.0;
  m.param(kConv1B).mutable_value()[0] = -0.6;
  m.param(kConv2W).mutable_value()[((0 * 4 + 0) * 3 + 1) * 3 + 1] = 1.0;
  m.param(kConv3W).mutable_value()[((0 * 8 + 0) * 3 + 1) * 3 + 1] = 1.0;
  m.param(kBases).mutable_value().at(0, 0) = 50.0;
  auto& wsal = m.param(kWsal).mutable_value();
  wsal[0] = 1.0;
  wsal[1] = -0.5;
  m.set_stage(2);
  return m;
}

}  // namespace

TEST_CASE("ceiling count selects one basis per sign out of ten") {
  const std::vector<double> w{0.3, -0.2, 0.9, -0.8, 0.1, 0.0, -0.1, 0.5, 0.05, -0.6};
  const auto sel = select_bases(w, 0.1);
  CHECK(sel.positive == std::vector<std::size_t>{2});
  CHECK(sel.negative == std::vector<std::size_t>{3});

  const auto more = select_bases(w, 0.3);
  CHECK(more.positive == std::vector<std::size_t>{2, 7, 0});
  CHECK(more.negative == std::vector<std::size_t>{3, 9, 1});

  // Ties keep the lower index; zeros never qualify.
  const std::vector<double> tied{0.5, 0.5, 0.0, 0.0};
  const auto t = select_bases(tied, 0.5);
  CHECK(t.positive == std::vector<std::size_t>{0, 1});
  CHECK(t.negative.empty());

  CHECK(error_kind_of([&] { select_bases(w, 0.0); }) == ErrorKind::InvalidArgument);
  CHECK(error_kind_of([&] { select_bases(w, 0.51); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("signed map is bounded and guards all-zero activations") {
  BasisSelection sel{{0}, {1}};
  const Tensor zero = signed_basis_map(Tensor({20, 3}, 0.0), sel);
  for (double v : zero.data()) CHECK(v == 0.0);

  Rng rng(71);
  const Tensor alpha = random_tensor({20, 3}, rng, 0.0, 1.0);
  const Tensor s = signed_basis_map(alpha, sel);
  double top = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(std::abs(s[i]) <= 1.0);
    top = std::max(top, std::abs(s[i]));
  }
  CHECK(top == doctest::Approx(1.0).epsilon(1e-15));
  // Direction follows alpha_0 - alpha_1.
  for (std::size_t i = 0; i < 20; ++i) CHECK((s[i] > 0) == (alpha.at(i, 0) - alpha.at(i, 1) > 0));
}

TEST_CASE("overlay peaks on the object a dominant positive basis sees") {
  const auto model = red_detector();
  AnnotatedImage img;
  img.id = "red";
  img.pixels = Tensor({3, 32, 32}, 0.3);
  for (std::size_t y = 8; y < 24; ++y) {
    for (std::size_t x = 8; x < 24; ++x) {
      img.pixels[(0 * 32 + y) * 32 + x] = 0.9;
      img.pixels[(1 * 32 + y) * 32 + x] = 0.1;
      img.pixels[(2 * 32 + y) * 32 + x] = 0.1;
    }
  }
  const auto ov = basis_distribution_map(model, img);
  CHECK(ov.signed_map.shape() == Shape{32, 32});
  CHECK(ov.rgb.shape() == Shape{3, 32, 32});
  const auto& d = ov.signed_map.data();
  const auto top = static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
  CHECK(top / 32 >= 8);
  CHECK(top / 32 < 24);
  CHECK(top % 32 >= 8);
  CHECK(top % 32 < 24);
  for (double v : d) {
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
  }
  CHECK(ov.signed_map[0] == doctest::Approx(0.0).epsilon(1e-12));

  TempDir dir("overlay");
  const auto path = write_overlay(ov, dir.path());
  CHECK(path.filename() == "red.overlay.png");
  CHECK(read_png_rgb(path).shape() == Shape{3, 32, 32});

  OverlayOptions bad;
  bad.top_fraction = 0.6;
  CHECK(error_kind_of([&] { basis_distribution_map(model, img, bad); }) == ErrorKind::Config);
  SaliencyModel stage1(tiny_backbone());
  CHECK(error_kind_of([&] { basis_distribution_map(stage1, img); }) == ErrorKind::State);
}

TEST_CASE("blend tints positive red and negative blue") {
  const Tensor img({3, 1, 3}, 0.5);
  const Tensor s({1, 3}, std::vector<double>{1.0, 0.0, -1.0});
  const Tensor out = blend_overlay(img, s, 0.5);
  CHECK(out[0] > out[2 * 3 + 0]);
  // Zero maps to white in the diverging colormap, so it stays neutral.
  CHECK(out[1] == 0.75);
  CHECK(out[4] == 0.75);
  CHECK(out[7] == 0.75);
  CHECK(out[2 * 3 + 2] > out[2]);
}

TEST_CASE("chart rows clamp, sort and round-trip") {
  const auto vocab = vocab_of(5);
  const auto rep = report_of({0.2, -1.0, 1.0, -0.3, 0.0});
  const auto rows = chart_rows(rep, vocab, 100);
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].importance >= rows[i].importance);

  const auto top2 = chart_rows(rep, vocab, 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0].semantic == 2);
  CHECK(top2[1].semantic == 1);

  TempDir dir("chart");
  emit_importance_chart_data(rep, vocab, 60, dir.path());
  const auto back = read_importance_csv(dir / "importance.csv");
  REQUIRE(back.size() == 5);
  for (const auto& r : back) {
    CHECK(r.importance == rep.importance[r.semantic]);
    CHECK(r.name == vocab[r.semantic].name);
    CHECK(r.category == vocab[r.semantic].category);
  }
  const Tensor png = read_png_rgb(dir / "importance.png");
  CHECK(blue_pixels(png) > 0);
  CHECK(red_pixels(png) > 0);

  CHECK(error_kind_of([&] { emit_importance_chart_data(rep, vocab, 0, dir.path()); }) ==
        ErrorKind::InvalidArgument);
  CHECK_THROWS(chart_rows(report_of({}), SemanticVocabulary{}, 5));
}

TEST_CASE("all-positive report draws no negative bars") {
  const auto vocab = vocab_of(4);
  const auto rep = report_of({0.1, 1.0, 0.6, 0.0});
  for (const auto& r : chart_rows(rep, vocab, 10)) CHECK(r.importance >= 0.0);
  const Tensor chart = render_bar_chart(chart_rows(rep, vocab, 10));
  CHECK(blue_pixels(chart) == 0);
  CHECK(red_pixels(chart) > 0);
}

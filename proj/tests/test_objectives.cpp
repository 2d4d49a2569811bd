// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "basislens/objectives.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace basislens;
using basislens::testing::random_tensor;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Tensor random_density(std::size_t h, std::size_t w, Rng& rng) {
  Tensor d({h, w});
  double total = 0;
  for (auto& v : d.data()) total += (v = rng.uniform(0.05, 1.0));
  for (auto& v : d.data()) v /= total;
  return d;
}

FixationData random_fixations(std::size_t h, std::size_t w, Rng& rng) {
  FixationData f;
  f.height = h;
  f.width = w;
  f.density = random_density(h, w, rng);
  for (int i = 0; i < 5; ++i) {
    f.points.push_back({static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(h) - 1)),
                        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w) - 1))});
  }
  return f;
}

}  // namespace

TEST_CASE("nss examples") {
  const std::vector<double> s{1, 2, 3, 4};
  const std::vector<FixationPoint> at4{{1, 1}};
  CHECK(std::abs(nss(s, 2, at4) - (4.0 - 2.5) / std::sqrt(1.25)) < 1e-6);
  CHECK(std::abs(nss(s, 2, at4) - 1.3416) < 1e-4);

  const std::vector<double> flat(6, 3.0);
  const std::vector<FixationPoint> pts{{0, 0}, {1, 2}};
  CHECK(nss(flat, 3, pts) == 0.0);

  const std::vector<double> sym{1, 2, 3};
  const std::vector<FixationPoint> mid{{0, 1}};
  CHECK(std::abs(nss(sym, 3, mid)) < 1e-15);

  CHECK_THROWS(nss(s, 2, std::vector<FixationPoint>{}));
}

TEST_CASE("cc examples") {
  const std::vector<double> s{1, 2, 3, 4};
  CHECK(std::abs(cc(s, s) - 1.0) < 1e-6);
  std::vector<double> anti;
  for (double v : s) anti.push_back(-v + 7.0);
  CHECK(std::abs(cc(s, anti) + 1.0) < 1e-6);
  const std::vector<double> d{1, 1, 2, 2};
  CHECK(std::abs(cc(s, d) - pearson(s, d)) < 1e-12);
  CHECK(cc(s, std::vector<double>(4, 0.25)) == 0.0);
  CHECK_THROWS_AS(cc(s, std::vector<double>{1, 2}), ShapeError);
}

TEST_CASE("kld examples") {
  const std::vector<double> d{0.5, 0.5};
  const std::vector<double> s{0.25, 0.75};
  const double hand = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  CHECK(std::abs(kld(s, d) - hand) < 1e-6);
  CHECK(std::abs(kld(s, d) - 0.1438) < 1e-4);

  Rng rng(4);
  const Tensor dd = random_density(5, 5, rng);
  std::vector<double> prop;
  for (double v : dd.data()) prop.push_back(7.0 * v);
  CHECK(std::abs(kld(prop, dd.data())) < 1e-6);

  for (int i = 0; i < 20; ++i) {
    const Tensor r = random_tensor({25}, rng, -2.0, 2.0);
    CHECK(kld(r.data(), dd.data()) >= 0.0);
  }
  CHECK_THROWS_AS(kld(s, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("nss and cc are invariant to positive affine maps") {
  Rng rng(9);
  const FixationData f = random_fixations(6, 7, rng);
  const Tensor s = random_tensor({42}, rng);
  std::vector<double> t;
  for (double v : s.data()) t.push_back(3.7 * v - 11.0);
  std::vector<double> dt;
  for (double v : f.density.data()) dt.push_back(0.2 * v + 5.0);
  CHECK(std::abs(nss(s.data(), 7, f.points) - nss(t, 7, f.points)) <= 1e-9);
  CHECK(std::abs(cc(s.data(), f.density.data()) - cc(t, f.density.data())) <= 1e-9);
  CHECK(std::abs(cc(s.data(), f.density.data()) - cc(s.data(), dt)) <= 1e-9);
}

TEST_CASE("metrics are permutation equivariant") {
  Rng rng(10);
  const std::size_t h = 4, w = 5, n = h * w;
  const FixationData f = random_fixations(h, w, rng);
  const Tensor s = random_tensor({n}, rng);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  // New position of cell i is perm[i].
  std::vector<double> ps(n), pd(n);
  for (std::size_t i = 0; i < n; ++i) {
    ps[perm[i]] = s[i];
    pd[perm[i]] = f.density[i];
  }
  std::vector<FixationPoint> pp;
  for (const auto& p : f.points) {
    const std::size_t k = perm[p.row * w + p.col];
    pp.push_back({k / w, k % w});
  }
  CHECK(std::abs(nss(s.data(), w, f.points) - nss(ps, w, pp)) <= 1e-12);
  CHECK(std::abs(cc(s.data(), f.density.data()) - cc(ps, pd)) <= 1e-12);
  CHECK(std::abs(kld(s.data(), f.density.data()) - kld(ps, pd)) <= 1e-12);
}

TEST_CASE("loss terms agree with the metrics") {
  Rng rng(12);
  const FixationData f = random_fixations(4, 4, rng);
  const Tensor s = random_tensor({4, 4}, rng);
  auto v = ad::Var::constant(s);
  CHECK(std::abs(cc_loss_term(v, f.density).item() - cc(s.data(), f.density.data())) < 1e-12);
  CHECK(std::abs(kld_loss_term(v, f.density).item() - kld(s.data(), f.density.data())) < 1e-12);
  const Tensor pw = nss_weights(f, NssWeighting::Points);
  CHECK(std::abs(nss_loss_term(v, pw).item() - nss(s.data(), 4, f.points)) < 1e-12);
}

TEST_CASE("loss weight selection") {
  Rng rng(13);
  const FixationData f = random_fixations(4, 4, rng);
  const Tensor s = random_tensor({4, 4}, rng);
  auto v = ad::Var::constant(s);
  LossWeights only_cc{0.0, 1.0, 0.0};
  CHECK(std::abs(combined_loss(v, f, only_cc).item() + cc(s.data(), f.density.data())) < 1e-12);
  LossWeights only_kld{0.0, 0.0, 1.0};
  CHECK(std::abs(combined_loss(v, f, only_kld).item() - kld(s.data(), f.density.data())) < 1e-12);
  CHECK_THROWS(LossWeights{0.0, 0.0, 0.0}.validate());
  CHECK_THROWS(LossWeights{-1.0, 1.0, 1.0}.validate());
}

TEST_CASE("combined loss gradient passes grad_check over ten seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(200 + seed);
    const FixationData f = random_fixations(4, 4, rng);
    const std::vector<Tensor> s{random_tensor({4, 4}, rng)};
    for (auto mode : {NssWeighting::Density, NssWeighting::Points}) {
      auto res = ad::grad_check([&](auto x) { return combined_loss(x[0], f, LossWeights{}, mode); }, s, 1e-5, 1e-4);
      INFO("seed " << seed);
      CHECK(res.max_rel_error[0] < 1e-4);
    }
  }
}

TEST_CASE("a scaled copy of the density beats random maps") {
  Rng rng(14);
  FixationData f;
  f.height = f.width = 5;
  f.density = random_density(5, 5, rng);
  const auto top = std::max_element(f.density.data().begin(), f.density.data().end()) - f.density.data().begin();
  f.points = {{static_cast<std::size_t>(top) / 5, static_cast<std::size_t>(top) % 5}};

  Tensor scaled = f.density;
  for (auto& v : scaled.data()) v *= 4.0;
  const double ideal = combined_loss(ad::Var::constant(scaled), f, LossWeights{}).item();
  double best_random = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 500; ++i) {
    const Tensor r = random_tensor({5, 5}, rng, 0.0, 1.0);
    best_random = std::min(best_random, combined_loss(ad::Var::constant(r), f, LossWeights{}).item());
  }
  CHECK(ideal <= best_random);
}

TEST_CASE("downsampled fixations keep total mass") {
  Rng rng(15);
  FixationData f = random_fixations(8, 8, rng);
  const FixationData d = downsample_fixations(f, 4);
  CHECK(d.height == 2);
  CHECK(d.width == 2);
  const double total = std::accumulate(d.density.data().begin(), d.density.data().end(), 0.0);
  CHECK(std::abs(total - 1.0) < 1e-12);
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    CHECK(d.points[i].row == f.points[i].row / 4);
    CHECK(d.points[i].col == f.points[i].col / 4);
  }
}

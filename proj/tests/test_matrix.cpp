// Copyright 2026 The sidlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "sidlab/matrix.hpp"

using namespace sidlab;
using Catch::Approx;

namespace {

ProbVector pv(std::initializer_list<double> v) {
  ProbVector p;
  p.probs = v;
  return p;
}

// Central-difference oracle for a scalar function of a flat vector.
template <typename F>
std::vector<double> central_diff(const std::vector<double>& x, F f,
                                 double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto hi = x, lo = x;
    hi[i] += h;
    lo[i] -= h;
    g[i] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / scale;
}

}  // namespace

TEST_CASE("softmax: frozen values and contracts") {
  SECTION("uniform symmetry") {
    auto p = softmax({0.0, 0.0, 0.0, 0.0});
    for (double v : p.probs) REQUIRE(v == Approx(0.25).margin(1e-12));
  }
  SECTION("shift invariance") {
    auto a = softmax({0.0, 3.0, 0.0});
    for (double c : {-17.5, 0.25, 42.0}) {
      auto b = softmax({c, c + 3.0, c});
      for (std::size_t i = 0; i < 3; ++i)
        REQUIRE(b[i] == Approx(a[i]).margin(1e-12));
    }
  }
  SECTION("closed form e^x / sum") {
    auto p = softmax({1.0, 2.0});
    REQUIRE(p[0] == Approx(0.26894).margin(1e-4));
    REQUIRE(p[1] == Approx(0.73106).margin(1e-4));
  }
  SECTION("sums to one, argmax preserved") {
    Rng rng(11);
    for (int it = 0; it < 200; ++it) {
      std::vector<double> z(2 + rng.index(8));
      for (auto& v : z) v = rng.uniform(-30.0, 30.0);
      auto p = softmax(z);
      double s = 0.0;
      for (double v : p.probs) s += v;
      REQUIRE(std::abs(s - 1.0) <= 1e-6);
      REQUIRE(p.valid());
      std::size_t za = 0;
      for (std::size_t i = 1; i < z.size(); ++i)
        if (z[i] > z[za]) za = i;
      REQUIRE(p.argmax() == za);
    }
  }
  SECTION("rejects degenerate input") {
    REQUIRE_THROWS_AS(softmax({}), std::invalid_argument);
    REQUIRE_THROWS_AS(softmax({1.0}), std::invalid_argument);
  }
}

TEST_CASE("cross_entropy: frozen values") {
  SECTION("one-hot is zero") {
    REQUIRE(cross_entropy(pv({1.0, 0.0}), 0) == Approx(0.0).margin(1e-9));
  }
  SECTION("ln 2") {
    REQUIRE(cross_entropy(pv({0.5, 0.5}), 0) == Approx(0.69315).margin(1e-4));
  }
  SECTION("-ln 0.1") {
    REQUIRE(cross_entropy(pv({0.9, 0.1}), 1) == Approx(2.30259).margin(1e-4));
  }
  SECTION("non-negative, target range checked") {
    REQUIRE(cross_entropy(pv({0.01, 0.99}), 0) >= 0.0);
    REQUIRE_THROWS_AS(cross_entropy(pv({0.5, 0.5}), 2), std::invalid_argument);
  }
}

TEST_CASE("kl_divergence: frozen values and Gibbs inequality") {
  SECTION("identity") {
    Rng rng(3);
    for (int it = 0; it < 50; ++it) {
      std::vector<double> z(2 + rng.index(6));
      for (auto& v : z) v = rng.uniform(-4.0, 4.0);
      auto p = softmax(z);
      REQUIRE(kl_divergence(p, p) == Approx(0.0).margin(1e-9));
    }
  }
  SECTION("closed form and asymmetry") {
    REQUIRE(kl_divergence(pv({0.5, 0.5}), pv({0.9, 0.1})) ==
            Approx(0.5108).margin(1e-3));
    REQUIRE(kl_divergence(pv({0.9, 0.1}), pv({0.5, 0.5})) ==
            Approx(0.3681).margin(1e-3));
  }
  SECTION("non-negative on random posteriors") {
    Rng rng(7);
    for (int it = 0; it < 2000; ++it) {
      std::vector<double> a(3), b(3);
      for (auto& v : a) v = rng.uniform(-6.0, 6.0);
      for (auto& v : b) v = rng.uniform(-6.0, 6.0);
      REQUIRE(kl_divergence(softmax(a), softmax(b)) >= -1e-9);
    }
  }
  SECTION("length mismatch rejected") {
    REQUIRE_THROWS_AS(kl_divergence(pv({0.5, 0.5}), pv({0.3, 0.3, 0.4})),
                      std::invalid_argument);
  }
}

TEST_CASE("l1_loss: mean of absolute differences") {
  Matrix a(2, 2);
  a.data = {1.0, 2.0, 3.0, 4.0};
  Matrix z(2, 2);
  REQUIRE(l1_loss(a, a) == 0.0);
  REQUIRE(l1_loss(a, z) == Approx(2.5));  // 10 / 4
  Matrix ones(3, 5, 1.0), zeros(3, 5, 0.0);
  REQUIRE(l1_loss(ones, zeros) == Approx(1.0));
  REQUIRE_THROWS_AS(l1_loss(a, ones), std::invalid_argument);
}

TEST_CASE("clip_linf: saturation and idempotence") {
  Matrix m(1, 2);
  m.data = {2.0, -3.0};
  auto c = clip_linf(m, 1.0);
  REQUIRE(c.data[0] == 1.0);
  REQUIRE(c.data[1] == -1.0);

  auto zero = clip_linf(m, 0.0);
  REQUIRE(zero.max_abs() == 0.0);

  REQUIRE_THROWS_AS(clip_linf(m, -0.1), std::invalid_argument);

  Rng rng(5);
  for (int it = 0; it < 200; ++it) {
    Matrix r = Matrix::random_normal(3, 4, 2.0, rng);
    const double eps = rng.uniform(0.0, 3.0);
    auto once = clip_linf(r, eps);
    auto twice = clip_linf(once, eps);
    REQUIRE(once.data == twice.data);
    REQUIRE(once.max_abs() <= eps);
    if (r.max_abs() <= eps) REQUIRE(once.data == r.data);
  }
}

TEST_CASE("sign: definition and idempotence") {
  Matrix m(1, 3);
  m.data = {-0.3, 0.0, 7.1};
  auto s = sign(m);
  REQUIRE(s.data == std::vector<double>{-1.0, 0.0, 1.0});

  Matrix z(4, 4);
  REQUIRE(sign(z).max_abs() == 0.0);

  Rng rng(9);
  for (int it = 0; it < 100; ++it) {
    Matrix r = Matrix::random_normal(2, 5, 1.0, rng);
    auto s1 = sign(r);
    REQUIRE(sign(s1).data == s1.data);
  }
}

TEST_CASE("kernel gradients match central finite differences") {
  Rng rng(1234);

  SECTION("softmax + cross-entropy w.r.t. logits") {
    for (int it = 0; it < 100; ++it) {
      std::vector<double> z(2 + rng.index(8));
      for (auto& v : z) v = rng.uniform(-1.0, 1.0);
      const std::size_t t = rng.index(z.size());
      auto grad = softmax_ce_grad(softmax(z), t);
      auto fd = central_diff(
          z, [&](const std::vector<double>& x) {
            return cross_entropy(softmax(x), t);
          });
      for (std::size_t i = 0; i < z.size(); ++i)
        REQUIRE(rel_err(grad[i], fd[i]) < 1e-4);
    }
  }

  SECTION("KL w.r.t. both arguments") {
    for (int it = 0; it < 100; ++it) {
      std::vector<double> a(4), b(4);
      for (auto& v : a) v = rng.uniform(-1.0, 1.0);
      for (auto& v : b) v = rng.uniform(-1.0, 1.0);
      auto p = softmax(a), q = softmax(b);
      auto gp = kl_grad_p(p, q);
      auto gq = kl_grad_q(p, q);
      auto fdp = central_diff(p.probs, [&](const std::vector<double>& x) {
        ProbVector px;
        px.probs = x;
        return kl_divergence(px, q);
      });
      auto fdq = central_diff(q.probs, [&](const std::vector<double>& x) {
        ProbVector qx;
        qx.probs = x;
        return kl_divergence(p, qx);
      });
      for (std::size_t i = 0; i < 4; ++i) {
        REQUIRE(rel_err(gp[i], fdp[i]) < 1e-4);
        REQUIRE(rel_err(gq[i], fdq[i]) < 1e-4);
      }
    }
  }

  SECTION("softmax_backward chains an arbitrary upstream gradient") {
    for (int it = 0; it < 100; ++it) {
      std::vector<double> z(5), up(5);
      for (auto& v : z) v = rng.uniform(-1.0, 1.0);
      for (auto& v : up) v = rng.uniform(-1.0, 1.0);
      auto p = softmax(z);
      auto dz = softmax_backward(p, up);
      auto fd = central_diff(z, [&](const std::vector<double>& x) {
        auto px = softmax(x);
        double acc = 0.0;
        for (std::size_t i = 0; i < px.size(); ++i) acc += up[i] * px[i];
        return acc;
      });
      for (std::size_t i = 0; i < 5; ++i) REQUIRE(rel_err(dz[i], fd[i]) < 1e-4);
    }
  }

  SECTION("l1 subgradient away from kinks") {
    for (int it = 0; it < 100; ++it) {
      Matrix a = Matrix::random_normal(3, 3, 1.0, rng);
      Matrix b = Matrix::random_normal(3, 3, 1.0, rng);
      for (std::size_t i = 0; i < a.size(); ++i)  // keep away from a == b
        if (std::abs(a.data[i] - b.data[i]) < 0.05)
          a.data[i] += a.data[i] >= b.data[i] ? 0.1 : -0.1;
      auto g = l1_grad(a, b);
      auto fd = central_diff(a.data, [&](const std::vector<double>& x) {
        Matrix ax = a;
        ax.data = x;
        return l1_loss(ax, b);
      });
      for (std::size_t i = 0; i < a.size(); ++i)
        REQUIRE(rel_err(g.data[i], fd[i]) < 1e-4);
    }
  }
}

TEST_CASE("kernel ops keep finite inputs finite") {
  Rng rng(77);
  for (int it = 0; it < 300; ++it) {
    Matrix m = Matrix::random_normal(4, 6, 50.0, rng);
    REQUIRE(clip_linf(m, 5.0).all_finite());
    REQUIRE(sign(m).all_finite());
    std::vector<double> z(6);
    for (auto& v : z) v = rng.uniform(-300.0, 300.0);
    auto p = softmax(z);
    REQUIRE(p.valid());
    REQUIRE(std::isfinite(cross_entropy(p, 0)));
    auto q = softmax(std::vector<double>(6, 0.0));
    REQUIRE(std::isfinite(kl_divergence(p, q)));
  }
}

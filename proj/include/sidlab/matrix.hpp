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
//
// Dense numeric kernel: row-major matrices, posterior vectors, and the
// activation / loss functions (with their analytic gradients) every other
// module is built on. All ops are pure functions.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sidlab/util.hpp"

namespace sidlab {

// Additive floor inside every log term; keeps one-hot posteriors finite.
inline constexpr double kProbFloor = 1e-12;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, rows * cols entries

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }

  static Matrix random_normal(std::size_t r, std::size_t c, double stddev,
                              Rng& rng) {
    Matrix m(r, c);
    for (auto& v : m.data) v = rng.normal(0.0, stddev);
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) {
    return data[r * cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
  }
};

inline void require_same_shape(const Matrix& a, const Matrix& b,
                               const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows) + "x" +
                                std::to_string(b.cols) + ")");
}

// Probability vector over speaker labels. Entries in [0,1], sum 1 within
// 1e-6, length >= 2.
struct ProbVector {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }

  bool valid() const {
    if (probs.size() < 2) return false;
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0 && p <= 1.0)) return false;
      sum += p;
    }
    return std::abs(sum - 1.0) <= 1e-6;
  }

  std::size_t argmax() const {  // ties broken toward the lowest index
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[best]) best = i;
    return best;
  }
};

// ---------------------------------------------------------------------------
// Activations and losses
// ---------------------------------------------------------------------------

// Max-subtracted softmax. Preserves argmax exactly.
inline ProbVector softmax(const std::vector<double>& logits) {
  if (logits.size() < 2)
    throw std::invalid_argument("softmax: need at least 2 logits");
  double mx = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v))
      throw std::invalid_argument("softmax: non-finite logit");
    mx = std::max(mx, v);
  }
  ProbVector out;
  out.probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.probs[i] = std::exp(logits[i] - mx);
    sum += out.probs[i];
  }
  for (auto& p : out.probs) p /= sum;
  return out;
}

// -ln(p[target] + floor)
inline double cross_entropy(const ProbVector& p, std::size_t target) {
  if (target >= p.size())
    throw std::invalid_argument("cross_entropy: target " +
                                std::to_string(target) + " out of range");
  return -std::log(p[target] + kProbFloor);
}

// d cross_entropy(softmax(z), target) / dz. The floor scales the classic
// (p - onehot) by p_t / (p_t + floor).
inline std::vector<double> softmax_ce_grad(const ProbVector& p,
                                           std::size_t target) {
  if (target >= p.size())
    throw std::invalid_argument("softmax_ce_grad: target out of range");
  const double s = p[target] / (p[target] + kProbFloor);
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    g[i] = s * (p[i] - (i == target ? 1.0 : 0.0));
  return g;
}

// KL(p || q) = sum_i p_i ln((p_i + floor)/(q_i + floor))
inline double kl_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_divergence: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    acc += p[i] * std::log((p[i] + kProbFloor) / (q[i] + kProbFloor));
  return acc;
}

// d KL(p||q) / dp_i and / dq_i, exact for the floored formula above.
inline std::vector<double> kl_grad_p(const ProbVector& p,
                                     const ProbVector& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_grad_p: length mismatch");
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    g[i] = std::log((p[i] + kProbFloor) / (q[i] + kProbFloor)) +
           p[i] / (p[i] + kProbFloor);
  return g;
}

inline std::vector<double> kl_grad_q(const ProbVector& p,
                                     const ProbVector& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_grad_q: length mismatch");
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    g[i] = -p[i] / (q[i] + kProbFloor);
  return g;
}

// Backprop a gradient w.r.t. softmax outputs to the logits:
// dL/dz_j = p_j * (dL/dp_j - sum_i dL/dp_i * p_i)
inline std::vector<double> softmax_backward(const ProbVector& p,
                                            const std::vector<double>& dp) {
  if (p.size() != dp.size())
    throw std::invalid_argument("softmax_backward: length mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) dot += dp[i] * p.probs[i];
  std::vector<double> dz(p.size());
  for (std::size_t j = 0; j < p.size(); ++j)
    dz[j] = p.probs[j] * (dp[j] - dot);
  return dz;
}

// Mean (not sum) of absolute elementwise differences.
inline double l1_loss(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "l1_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += std::abs(a.data[i] - b.data[i]);
  return acc / static_cast<double>(a.size());
}

// d l1_loss(a, b) / da = sign(a - b) / n
inline Matrix l1_grad(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "l1_grad");
  Matrix g(a.rows, a.cols);
  const double inv_n = 1.0 / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    g.data[i] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
  }
  return g;
}

// Clamp every entry into [-eps, +eps]. Idempotent.
inline Matrix clip_linf(const Matrix& m, double eps) {
  if (eps < 0.0) throw std::invalid_argument("clip_linf: negative eps");
  Matrix out = m;
  for (auto& v : out.data) v = std::clamp(v, -eps, eps);
  return out;
}

// Entrywise sign; sign(0) = 0 so a zero-gradient coordinate never moves.
inline Matrix sign(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.size(); ++i)
    out.data[i] = m.data[i] > 0.0 ? 1.0 : (m.data[i] < 0.0 ? -1.0 : 0.0);
  return out;
}

}  // namespace sidlab

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
// Targeted l-infinity attacks on mel spectrograms: projected sign-gradient
// descent toward a target label, with an eps budget that is tightened
// multiplicatively after each success, plus the switching loss that couples
// the attack to generator training.

#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "sidlab/classifier.hpp"
#include "sidlab/matrix.hpp"
#include "sidlab/mel.hpp"

namespace sidlab {

struct Perturbation {
  Matrix delta;  // starts all zero, kept inside the eps ball
  double eps = 0.0;
  double lr = 0.0;
};

inline Perturbation make_perturbation(std::size_t frames, std::size_t n_mels,
                                      double eps, double lr) {
  if (eps < 0.0) throw std::invalid_argument("make_perturbation: eps < 0");
  if (lr <= 0.0) throw std::invalid_argument("make_perturbation: lr <= 0");
  return Perturbation{Matrix::zeros(frames, n_mels), eps, lr};
}

struct PerturbationConfig {
  double eps_start = 0.8;
  double lr = 8e-4;
  std::size_t max_iters = 1000;  // per eps budget
  double eps_decay = 0.9;
  double eps_min = 0.05;
  bool early_stop = true;
};

inline void validate(const PerturbationConfig& cfg) {
  if (cfg.eps_start < 0.0)
    throw std::invalid_argument("PerturbationConfig: eps_start < 0");
  if (cfg.eps_min <= 0.0)
    throw std::invalid_argument("PerturbationConfig: eps_min <= 0");
  if (cfg.eps_start > 0.0 && cfg.eps_min > cfg.eps_start)
    throw std::invalid_argument("PerturbationConfig: eps_min > eps_start");
  if (!(cfg.eps_decay > 0.0 && cfg.eps_decay < 1.0))
    throw std::invalid_argument("PerturbationConfig: eps_decay outside (0,1)");
  if (cfg.max_iters < 1)
    throw std::invalid_argument("PerturbationConfig: max_iters < 1");
  if (cfg.lr <= 0.0) throw std::invalid_argument("PerturbationConfig: lr <= 0");
}

struct AttackOutcome {
  bool success = false;
  std::size_t iterations_used = 0;
  Matrix final_delta;
  double final_eps = 0.0;
  double final_loss = 0.0;
};

// One projected sign step: delta' = clip_eps(delta - lr * sign(grad)).
inline Perturbation pgd_step(const Perturbation& p, const Matrix& grad) {
  require_same_shape(p.delta, grad, "pgd_step");
  Perturbation out = p;
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    const double s = grad.data[i] > 0.0 ? 1.0 : (grad.data[i] < 0.0 ? -1.0 : 0.0);
    out.delta.data[i] = p.delta.data[i] - p.lr * s;
  }
  out.delta = clip_linf(out.delta, p.eps);
  return out;
}

inline MelSpectrogram apply_delta(const MelSpectrogram& m, const Matrix& delta) {
  require_same_shape(m.values, delta, "apply_delta");
  MelSpectrogram out = m;
  for (std::size_t i = 0; i < delta.data.size(); ++i)
    out.values.data[i] += delta.data[i];
  return out;
}

// PGD toward the target label at a fixed budget; at most max_iters gradient
// steps. Returns success and the delta reached.
namespace detail {
struct StageResult {
  bool success = false;
  std::size_t steps = 0;
};

inline StageResult run_stage(const SpeakerClassifier& f,
                             const MelSpectrogram& m, std::size_t target,
                             Perturbation& p, const PerturbationConfig& cfg) {
  StageResult r;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    if (cfg.early_stop &&
        f.predict(apply_delta(m, p.delta)) == target) {
      r.success = true;
      return r;
    }
    const Matrix grad = f.grad_input(apply_delta(m, p.delta), target);
    p = pgd_step(p, grad);
    ++r.steps;
  }
  r.success = f.predict(apply_delta(m, p.delta)) == target;
  return r;
}
}  // namespace detail

// Eq.-style schedule: attack at eps_start; after each success multiply eps
// by eps_decay, re-clip the successful delta and try again, stopping at
// eps_min or the first failing budget. Returns the tightest success.
inline AttackOutcome optimize_perturbation(const SpeakerClassifier& f,
                                           const MelSpectrogram& m,
                                           std::size_t target,
                                           const PerturbationConfig& cfg) {
  validate(cfg);
  if (target >= f.n_speakers)
    throw std::invalid_argument("optimize_perturbation: target " +
                                std::to_string(target) + " out of range");
  AttackOutcome out;
  out.final_delta = Matrix::zeros(m.frames(), m.n_mels());

  if (f.predict(m) == target) {  // no-op attack
    out.success = true;
    out.final_loss = f.loss(m, target);
    return out;
  }
  if (cfg.eps_start <= 0.0) {
    out.final_loss = f.loss(m, target);
    return out;
  }

  Perturbation p = make_perturbation(m.frames(), m.n_mels(), cfg.eps_start,
                                     cfg.lr);
  bool have_success = false;
  Matrix best_delta;
  double best_eps = 0.0;
  while (true) {
    const auto stage = detail::run_stage(f, m, target, p, cfg);
    out.iterations_used += stage.steps;
    if (!stage.success) break;
    have_success = true;
    best_delta = p.delta;
    best_eps = p.eps;
    const double next_eps = p.eps * cfg.eps_decay;
    if (next_eps < cfg.eps_min) break;
    p.eps = next_eps;
    p.delta = clip_linf(p.delta, next_eps);
  }

  if (have_success) {
    out.success = true;
    out.final_delta = best_delta;
    out.final_eps = best_eps;
  } else {
    out.final_delta = p.delta;
    out.final_eps = cfg.eps_start;
  }
  out.final_loss = f.loss(apply_delta(m, out.final_delta), target);
  return out;
}

// M_adv = M_hat + delta.
inline MelSpectrogram make_adversarial_target(const MelSpectrogram& m_hat,
                                              const Perturbation& p) {
  require_same_shape(m_hat.values, p.delta, "make_adversarial_target");
  return apply_delta(m_hat, p.delta);
}

// Switching loss: reconstruction against ground truth when the generated mel
// already fools the classifier, otherwise pull toward the adversarial target.
inline double adv_loss(const MelSpectrogram& m_gt, const MelSpectrogram& m_hat,
                       const MelSpectrogram& m_adv, bool attack_succeeded) {
  require_same_shape(m_gt.values, m_hat.values, "adv_loss");
  require_same_shape(m_adv.values, m_hat.values, "adv_loss");
  return attack_succeeded ? l1_loss(m_gt.values, m_hat.values)
                          : l1_loss(m_adv.values, m_hat.values);
}

// One line per attack, fixed key order, shortest-fixed formatting so reruns
// byte-compare cleanly.
inline std::string attack_record_line(std::size_t sample_id,
                                      std::size_t target,
                                      const AttackOutcome& out) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"sample\":%zu,\"target\":%zu,\"success\":%s,"
                "\"iterations\":%zu,\"final_eps\":%.9g,\"final_loss\":%.9g}",
                sample_id, target, out.success ? "true" : "false",
                out.iterations_used, out.final_eps, out.final_loss);
  return std::string(buf);
}

}  // namespace sidlab

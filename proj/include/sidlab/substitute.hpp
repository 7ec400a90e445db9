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
// Query-only oracle around a hidden classifier plus pseudo-Siamese
// distillation of a substitute: intrinsic KL between the clean and
// noise-transformed branches, structural KL of both branches against the
// oracle posterior, and their sum, with gradients flowing through the
// substitute branches only.

#pragma once

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sidlab/classifier.hpp"
#include "sidlab/matrix.hpp"
#include "sidlab/mel.hpp"
#include "sidlab/util.hpp"

namespace sidlab {

// Callers see posteriors and a query counter, nothing else.
class BlackBoxOracle {
 public:
  explicit BlackBoxOracle(SpeakerClassifier backing,
                          std::optional<std::uint64_t> budget = std::nullopt)
      : backing_(std::move(backing)), budget_(budget) {}

  BlackBoxOracle(const BlackBoxOracle&) = delete;
  BlackBoxOracle& operator=(const BlackBoxOracle&) = delete;

  ProbVector query(const MelSpectrogram& m) {
    std::uint64_t cur = count_.load();
    do {
      if (budget_ && cur >= *budget_)
        throw BudgetExhaustedError(
            "oracle query budget of " + std::to_string(*budget_) +
                " exhausted",
            cur);
    } while (!count_.compare_exchange_weak(cur, cur + 1));
    return backing_.forward(m);
  }

  std::size_t n_labels() const { return backing_.n_speakers; }
  std::uint64_t query_count() const { return count_.load(); }
  std::optional<std::uint64_t> query_budget() const { return budget_; }

 private:
  SpeakerClassifier backing_;
  std::optional<std::uint64_t> budget_;
  std::atomic<std::uint64_t> count_{0};
};

// ---------------------------------------------------------------------------
// Distillation losses. p1: substitute on the clean input, p1p: substitute on
// the transformed input, p2: oracle posterior (constant).
// ---------------------------------------------------------------------------

inline double intrinsic_loss(const ProbVector& p1, const ProbVector& p1p) {
  return kl_divergence(p1, p1p);
}

struct StructuralLoss {
  double l_str = 0.0;
  double l_aux = 0.0;
};

inline StructuralLoss structural_loss(const ProbVector& p1,
                                      const ProbVector& p1p,
                                      const ProbVector& p2) {
  StructuralLoss out;
  out.l_aux = kl_divergence(p1p, p2);
  out.l_str = kl_divergence(p1, p2) + out.l_aux;
  return out;
}

inline double total_loss(const ProbVector& p1, const ProbVector& p1p,
                         const ProbVector& p2) {
  return intrinsic_loss(p1, p1p) + structural_loss(p1, p1p, p2).l_str;
}

enum class LossVariant : std::uint32_t {
  kTotal = 0,        // ins + str
  kStrOnly = 1,      // str = KL(p1||p2) + KL(p1'||p2)
  kStrMinusAux = 2,  // KL(p1||p2) only
};

inline const char* loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::kTotal: return "total";
    case LossVariant::kStrOnly: return "str_only";
    case LossVariant::kStrMinusAux: return "str_minus_aux";
  }
  return "unknown";
}

inline double variant_loss(LossVariant v, const ProbVector& p1,
                           const ProbVector& p1p, const ProbVector& p2) {
  switch (v) {
    case LossVariant::kTotal: return total_loss(p1, p1p, p2);
    case LossVariant::kStrOnly: return structural_loss(p1, p1p, p2).l_str;
    case LossVariant::kStrMinusAux: return kl_divergence(p1, p2);
  }
  throw std::invalid_argument("variant_loss: unknown variant");
}

// dL/dp1 and dL/dp1p for the chosen variant; p2 never receives gradient.
inline void variant_grads(LossVariant v, const ProbVector& p1,
                          const ProbVector& p1p, const ProbVector& p2,
                          bool stop_grad_transformed,
                          std::vector<double>* dp1,
                          std::vector<double>* dp1p) {
  dp1->assign(p1.size(), 0.0);
  dp1p->assign(p1p.size(), 0.0);
  const auto add = [](std::vector<double>* acc,
                      const std::vector<double>& g) {
    for (std::size_t i = 0; i < acc->size(); ++i) (*acc)[i] += g[i];
  };
  if (v == LossVariant::kTotal) {
    add(dp1, kl_grad_p(p1, p1p));
    add(dp1p, kl_grad_q(p1, p1p));
  }
  if (v == LossVariant::kTotal || v == LossVariant::kStrOnly ||
      v == LossVariant::kStrMinusAux)
    add(dp1, kl_grad_p(p1, p2));
  if (v == LossVariant::kTotal || v == LossVariant::kStrOnly)
    add(dp1p, kl_grad_p(p1p, p2));
  if (stop_grad_transformed) dp1p->assign(p1p.size(), 0.0);
}

// ---------------------------------------------------------------------------
// Distillation trainer.
// ---------------------------------------------------------------------------

struct DistillConfig {
  double sigma = 4.5;  // dB noise on the transformed branch
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double lr = 0.05;
  double lr_decay = 1.0;
  std::uint64_t seed = 1;
  LossVariant loss_variant = LossVariant::kTotal;
  bool stop_grad_transformed = false;
  bool cache_queries = true;
  ClassifierConfig arch;  // n_speakers is taken from the oracle
};

struct DistillEpochStats {
  std::size_t epoch = 0;
  double ins = 0.0;
  double aux = 0.0;
  double str = 0.0;
  double total = 0.0;
  std::uint64_t queries = 0;   // oracle counter after the epoch
  double agreement = -1.0;     // filled when a probe is supplied
};

struct DistillHooks {
  // Optional held-out probe evaluated after each epoch.
  std::function<double(const SpeakerClassifier&)> agreement_probe;
  // Where to park the model if the oracle budget runs out mid-training.
  std::string exhaustion_checkpoint;
};

struct DistillResult {
  SpeakerClassifier model;
  std::vector<DistillEpochStats> log;
};

inline void validate(const DistillConfig& cfg) {
  if (cfg.sigma < 0.0) throw std::invalid_argument("DistillConfig: sigma < 0");
  if (cfg.epochs < 1) throw std::invalid_argument("DistillConfig: epochs < 1");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("DistillConfig: batch_size < 1");
  if (cfg.lr <= 0.0) throw std::invalid_argument("DistillConfig: lr <= 0");
}

inline DistillResult train_substitute(BlackBoxOracle& oracle,
                                      const std::vector<MelSpectrogram>& data,
                                      const DistillConfig& cfg,
                                      const DistillHooks& hooks = {},
                                      const SpeakerClassifier* warm_start =
                                          nullptr) {
  validate(cfg);
  if (data.empty())
    throw std::invalid_argument("train_substitute: empty dataset");

  DistillResult res;
  if (warm_start) {
    res.model = *warm_start;
    if (res.model.n_speakers != oracle.n_labels())
      throw std::invalid_argument(
          "train_substitute: warm start output width mismatch");
  } else {
    ClassifierConfig arch = cfg.arch;
    arch.n_speakers = oracle.n_labels();
    arch.n_mels = data[0].n_mels();
    arch.seed = cfg.seed;
    res.model = SpeakerClassifier(arch);
  }
  SpeakerClassifier& sub = res.model;
  if (!sub.standardized) {
    Dataset wrap;
    wrap.reserve(data.size());
    for (const auto& m : data) wrap.push_back(LabeledMel{m, 0, 0});
    sub.fit_standardizer(wrap);
  }

  std::vector<std::optional<ProbVector>> cache(data.size());
  const auto posterior = [&](std::size_t i) -> ProbVector {
    if (cfg.cache_queries && cache[i]) return *cache[i];
    ProbVector p = oracle.query(data[i]);
    if (cfg.cache_queries) cache[i] = p;
    return p;
  };

  double lr = cfg.lr * std::pow(cfg.lr_decay,
                                static_cast<double>(sub.epochs_trained));
  try {
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      std::vector<std::size_t> order(data.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng shuffle_rng(derive_seed(cfg.seed, 0xd157u, sub.epochs_trained));
      shuffle_rng.shuffle(order);

      DistillEpochStats es;
      es.epoch = sub.epochs_trained;
      std::size_t done = 0;
      while (done < order.size()) {
        const std::size_t batch_n =
            std::min(cfg.batch_size, order.size() - done);
        std::vector<ParamGrad> grads;
        std::vector<double> dp1, dp1p;
        for (std::size_t k = 0; k < batch_n; ++k) {
          const std::size_t i = order[done + k];
          const MelSpectrogram& x0 = data[i];
          const MelSpectrogram x1 = add_gaussian_noise(
              x0, cfg.sigma,
              derive_seed(derive_seed(cfg.seed, 0x015eu), sub.epochs_trained,
                          i));
          const ProbVector p2 = posterior(i);
          const ProbVector p1 = sub.forward(x0);
          const ProbVector p1p = sub.forward(x1);

          es.ins += intrinsic_loss(p1, p1p);
          const StructuralLoss sl = structural_loss(p1, p1p, p2);
          es.aux += sl.l_aux;
          es.str += sl.l_str;
          es.total += intrinsic_loss(p1, p1p) + sl.l_str;

          variant_grads(cfg.loss_variant, p1, p1p, p2,
                        cfg.stop_grad_transformed, &dp1, &dp1p);
          grads.push_back(
              sub.grad_params_dlogits(x0, softmax_backward(p1, dp1)));
          if (cfg.loss_variant != LossVariant::kStrMinusAux &&
              !cfg.stop_grad_transformed)
            grads.push_back(
                sub.grad_params_dlogits(x1, softmax_backward(p1p, dp1p)));
        }
        const double scale = lr / static_cast<double>(batch_n);
        for (const auto& pg : grads)
          for (std::size_t l = 0; l < sub.layers.size(); ++l) {
            for (std::size_t k = 0; k < sub.layers[l].W.data.size(); ++k)
              sub.layers[l].W.data[k] -= scale * pg.dW[l].data[k];
            for (std::size_t k = 0; k < sub.layers[l].b.size(); ++k)
              sub.layers[l].b[k] -= scale * pg.db[l][k];
          }
        done += batch_n;
      }
      const double n = static_cast<double>(data.size());
      es.ins /= n;
      es.aux /= n;
      es.str /= n;
      es.total /= n;
      es.queries = oracle.query_count();
      ++sub.epochs_trained;
      lr *= cfg.lr_decay;
      if (hooks.agreement_probe) es.agreement = hooks.agreement_probe(sub);
      res.log.push_back(es);
    }
  } catch (const BudgetExhaustedError&) {
    if (!hooks.exhaustion_checkpoint.empty())
      sub.save(hooks.exhaustion_checkpoint);
    throw;
  }
  return res;
}

// One line per epoch, fixed schema for byte-stable reruns.
inline std::string distill_record_line(const DistillEpochStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"epoch\":%zu,\"ins\":%.9g,\"aux\":%.9g,\"str\":%.9g,"
                "\"total\":%.9g,\"queries\":%" PRIu64 ",\"agreement\":%.9g}",
                s.epoch, s.ins, s.aux, s.str, s.total, s.queries,
                s.agreement);
  return std::string(buf);
}

}  // namespace sidlab

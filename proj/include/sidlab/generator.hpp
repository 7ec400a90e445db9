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
// Conditional mel generator: (frozen content code, learned speaker
// embedding) -> tanh hidden layer -> linear mel frame block, clamped to the
// mel dynamic range. Trained either on pure L1 reconstruction or jointly
// with the switching adversarial constraint; both phases share one update
// path so the all-success case is bit-identical to plain reconstruction.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sidlab/attack.hpp"
#include "sidlab/classifier.hpp"
#include "sidlab/matrix.hpp"
#include "sidlab/mel.hpp"
#include "sidlab/util.hpp"

namespace sidlab {

constexpr double kMelClampLo = -80.0;
constexpr double kMelClampHi = 10.0;

struct ContentCode {
  std::vector<double> values;  // unit norm
  std::size_t content_id = 0;
};

inline ContentCode make_content_code(std::uint64_t seed,
                                     std::size_t content_id,
                                     std::size_t dim) {
  if (dim < 1) throw std::invalid_argument("make_content_code: dim < 1");
  ContentCode c;
  c.content_id = content_id;
  c.values.resize(dim);
  Rng rng(derive_seed(seed, 0xc0deu, content_id));
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& v : c.values) {
      v = rng.normal();
      norm2 += v * v;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& v : c.values) v *= inv;
  return c;
}

struct GenPair {
  ContentCode content;
  std::size_t speaker = 0;  // conditioning identity and attack target
  MelSpectrogram m_gt;
};

struct GenConfig {
  std::size_t n_speakers = 10;
  std::size_t d_content = 16;
  std::size_t d_spk = 8;
  std::size_t frames = 28;
  std::size_t n_mels = 80;
  std::size_t hidden_dim = 48;
  std::uint64_t seed = 1;
};

struct GenEpochStats {
  std::size_t epoch = 0;          // global counter value during this pass
  double mean_loss = 0.0;         // the branch-selected training loss
  double recon_l1 = 0.0;          // monitoring: mean l1 to ground truth
  double adv_branch_rate = 0.0;   // fraction of pairs that needed the attack
  double attack_success_rate = 0.0;  // inner attacks that found a delta
};

// Per-pair instrumentation of the switching loss.
struct BatchLog {
  std::size_t epoch = 0;
  std::size_t pair_index = 0;
  bool recon_branch = true;  // true: pull to m_gt; false: pull to m_adv
  bool inner_attack_ran = false;
  bool inner_attack_success = false;
  double loss = 0.0;
  const MelSpectrogram* m_gt = nullptr;
  const MelSpectrogram* m_hat = nullptr;
  const MelSpectrogram* m_adv = nullptr;  // equals m_hat on the recon branch
};

using BatchObserver = std::function<void(const BatchLog&)>;

class CondGenerator {
 public:
  std::size_t n_speakers = 0, d_content = 0, d_spk = 0;
  std::size_t frames = 0, n_mels = 0, hidden_dim = 0;
  std::uint64_t seed = 0;
  std::uint64_t epochs_trained = 0;
  Matrix spk_emb;  // n_speakers x d_spk, learned
  Matrix W1;       // hidden_dim x (d_content + d_spk)
  std::vector<double> b1;
  Matrix W2;  // (frames * n_mels) x hidden_dim
  std::vector<double> b2;

  CondGenerator() = default;

  explicit CondGenerator(const GenConfig& cfg)
      : n_speakers(cfg.n_speakers),
        d_content(cfg.d_content),
        d_spk(cfg.d_spk),
        frames(cfg.frames),
        n_mels(cfg.n_mels),
        hidden_dim(cfg.hidden_dim),
        seed(cfg.seed) {
    if (n_speakers < 2)
      throw std::invalid_argument("CondGenerator: n_speakers < 2");
    if (d_content < 1 || d_spk < 1 || frames < 1 || n_mels < 1 ||
        hidden_dim < 1)
      throw std::invalid_argument("CondGenerator: zero dimension");
    Rng rng(derive_seed(seed, 0x9e4eu));
    spk_emb = init_matrix(n_speakers, d_spk, rng);
    W1 = init_matrix(hidden_dim, d_content + d_spk, rng);
    b1.assign(hidden_dim, 0.0);
    W2 = init_matrix(frames * n_mels, hidden_dim, rng);
    b2.assign(frames * n_mels, 0.0);
  }

  MelSpectrogram generate(const ContentCode& content,
                          std::size_t speaker) const {
    Forward fw = forward(content, speaker);
    MelSpectrogram m;
    m.values = Matrix::zeros(frames, n_mels);
    m.values.data = fw.out;
    return m;
  }

  // Plain reconstruction training.
  std::vector<GenEpochStats> train_recon(const std::vector<GenPair>& pairs,
                                         const TrainOptions& opt) {
    return run_training(pairs, opt, nullptr, nullptr, nullptr);
  }

  // Switching-loss training against a frozen classifier: per pair, if the
  // generated mel already classifies as the conditioning speaker the loss is
  // plain reconstruction; otherwise an inner attack builds the adversarial
  // target. A failed inner attack falls back to reconstruction.
  std::vector<GenEpochStats> joint_train_adv(const SpeakerClassifier& f,
                                             const std::vector<GenPair>& pairs,
                                             const PerturbationConfig& pcfg,
                                             const TrainOptions& opt,
                                             const BatchObserver& observer =
                                                 nullptr) {
    validate(pcfg);
    if (f.n_mels != n_mels)
      throw std::invalid_argument(
          "joint_train_adv: classifier mel width mismatch");
    return run_training(pairs, opt, &f, &pcfg, &observer);
  }

  void save(const std::string& path) const {
    std::string buf;
    buf.append("CONDGEN1");
    detail::put_u32(buf, static_cast<std::uint32_t>(n_speakers));
    detail::put_u32(buf, static_cast<std::uint32_t>(d_content));
    detail::put_u32(buf, static_cast<std::uint32_t>(d_spk));
    detail::put_u32(buf, static_cast<std::uint32_t>(frames));
    detail::put_u32(buf, static_cast<std::uint32_t>(n_mels));
    detail::put_u32(buf, static_cast<std::uint32_t>(hidden_dim));
    detail::put_u64(buf, seed);
    detail::put_u64(buf, epochs_trained);
    for (double v : spk_emb.data) detail::put_f64(buf, v);
    for (double v : W1.data) detail::put_f64(buf, v);
    for (double v : b1) detail::put_f64(buf, v);
    for (double v : W2.data) detail::put_f64(buf, v);
    for (double v : b2) detail::put_f64(buf, v);
    detail::spew(path, buf);
  }

  static CondGenerator load(const std::string& path) {
    detail::ByteReader r(detail::slurp(path), path);
    r.expect_magic("CONDGEN1");
    CondGenerator g;
    g.n_speakers = r.u32();
    g.d_content = r.u32();
    g.d_spk = r.u32();
    g.frames = r.u32();
    g.n_mels = r.u32();
    g.hidden_dim = r.u32();
    g.seed = r.u64();
    g.epochs_trained = r.u64();
    if (g.n_speakers < 2 || g.d_content < 1 || g.d_spk < 1 || g.frames < 1 ||
        g.n_mels < 1 || g.hidden_dim < 1)
      throw IoError(path + ": malformed generator header");
    g.spk_emb = Matrix::zeros(g.n_speakers, g.d_spk);
    g.W1 = Matrix::zeros(g.hidden_dim, g.d_content + g.d_spk);
    g.b1.resize(g.hidden_dim);
    g.W2 = Matrix::zeros(g.frames * g.n_mels, g.hidden_dim);
    g.b2.resize(g.frames * g.n_mels);
    for (double& v : g.spk_emb.data) v = r.f64();
    for (double& v : g.W1.data) v = r.f64();
    for (double& v : g.b1) v = r.f64();
    for (double& v : g.W2.data) v = r.f64();
    for (double& v : g.b2) v = r.f64();
    r.expect_end();
    return g;
  }

 private:
  struct Forward {
    std::vector<double> input;  // [content ; speaker embedding]
    std::vector<double> h;      // tanh activations
    std::vector<double> z;      // pre-clamp outputs
    std::vector<double> out;    // clamped
    std::size_t speaker = 0;
  };

  static Matrix init_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m = Matrix::zeros(rows, cols);
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (double& v : m.data) v = rng.uniform(-a, a);
    return m;
  }

  Forward forward(const ContentCode& content, std::size_t speaker) const {
    if (speaker >= n_speakers)
      throw std::invalid_argument("CondGenerator: speaker " +
                                  std::to_string(speaker) + " out of range");
    if (content.values.size() != d_content)
      throw std::invalid_argument("CondGenerator: content dim mismatch");
    Forward fw;
    fw.speaker = speaker;
    fw.input = content.values;
    const double* emb = spk_emb.data.data() + speaker * d_spk;
    fw.input.insert(fw.input.end(), emb, emb + d_spk);
    fw.h.resize(hidden_dim);
    for (std::size_t r = 0; r < hidden_dim; ++r) {
      double acc = b1[r];
      for (std::size_t c = 0; c < fw.input.size(); ++c)
        acc += W1(r, c) * fw.input[c];
      fw.h[r] = std::tanh(acc);
    }
    fw.z.resize(frames * n_mels);
    fw.out.resize(frames * n_mels);
    for (std::size_t r = 0; r < fw.z.size(); ++r) {
      double acc = b2[r];
      for (std::size_t c = 0; c < hidden_dim; ++c) acc += W2(r, c) * fw.h[c];
      fw.z[r] = acc;
      fw.out[r] = std::clamp(acc, kMelClampLo, kMelClampHi);
    }
    return fw;
  }

  // SGD step from dL/d(out); the clamp passes gradient only strictly inside
  // the range.
  void backward_update(const Forward& fw, const Matrix& dout, double lr) {
    std::vector<double> dh(hidden_dim, 0.0);
    for (std::size_t r = 0; r < fw.z.size(); ++r) {
      const double g =
          (fw.z[r] > kMelClampLo && fw.z[r] < kMelClampHi) ? dout.data[r]
                                                           : 0.0;
      if (g == 0.0) continue;
      b2[r] -= lr * g;
      for (std::size_t c = 0; c < hidden_dim; ++c) {
        dh[c] += W2(r, c) * g;
        W2(r, c) -= lr * g * fw.h[c];
      }
    }
    std::vector<double> dinput(fw.input.size(), 0.0);
    for (std::size_t r = 0; r < hidden_dim; ++r) {
      const double dpre = dh[r] * (1.0 - fw.h[r] * fw.h[r]);
      if (dpre == 0.0) continue;
      b1[r] -= lr * dpre;
      for (std::size_t c = 0; c < fw.input.size(); ++c) {
        dinput[c] += W1(r, c) * dpre;
        W1(r, c) -= lr * dpre * fw.input[c];
      }
    }
    for (std::size_t c = 0; c < d_spk; ++c)
      spk_emb(fw.speaker, c) -= lr * dinput[d_content + c];
  }

  std::vector<GenEpochStats> run_training(const std::vector<GenPair>& pairs,
                                          const TrainOptions& opt,
                                          const SpeakerClassifier* f,
                                          const PerturbationConfig* pcfg,
                                          const BatchObserver* observer) {
    if (pairs.empty())
      throw std::invalid_argument("generator training: empty pair list");
    for (const auto& p : pairs) {
      if (p.m_gt.frames() != frames || p.m_gt.n_mels() != n_mels)
        throw std::invalid_argument(
            "generator training: ground-truth mel shape mismatch");
      if (p.speaker >= n_speakers)
        throw std::invalid_argument("generator training: speaker out of range");
    }
    std::vector<GenEpochStats> stats;
    double lr = opt.lr * std::pow(opt.lr_decay,
                                  static_cast<double>(epochs_trained));
    for (std::size_t e = 0; e < opt.epochs; ++e) {
      std::vector<std::size_t> order(pairs.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(derive_seed(seed, 0x9e41u, epochs_trained));
      rng.shuffle(order);

      GenEpochStats es;
      es.epoch = epochs_trained;
      std::size_t adv_branch = 0, attacks_run = 0, attacks_won = 0;
      for (std::size_t i : order) {
        const GenPair& pair = pairs[i];
        const Forward fw = forward(pair.content, pair.speaker);
        MelSpectrogram m_hat;
        m_hat.values = Matrix::zeros(frames, n_mels);
        m_hat.values.data = fw.out;

        BatchLog log;
        log.epoch = epochs_trained;
        log.pair_index = i;
        log.m_gt = &pair.m_gt;
        log.m_hat = &m_hat;
        log.m_adv = &m_hat;

        const MelSpectrogram* target_mel = &pair.m_gt;
        MelSpectrogram m_adv;
        if (f) {
          if (f->predict(m_hat) != pair.speaker) {
            log.inner_attack_ran = true;
            ++attacks_run;
            const AttackOutcome atk =
                optimize_perturbation(*f, m_hat, pair.speaker, *pcfg);
            if (atk.success) {
              log.inner_attack_success = true;
              ++attacks_won;
              m_adv = apply_delta(m_hat, atk.final_delta);
              target_mel = &m_adv;
              log.recon_branch = false;
              log.m_adv = &m_adv;
              ++adv_branch;
            }
          }
        }
        const double step_loss = l1_loss(target_mel->values, m_hat.values);
        log.loss = step_loss;
        es.mean_loss += step_loss;
        es.recon_l1 += l1_loss(pair.m_gt.values, m_hat.values);
        if (observer && *observer) (*observer)(log);
        const Matrix dout = l1_grad(m_hat.values, target_mel->values);
        backward_update(fw, dout, lr);
      }
      const double n = static_cast<double>(pairs.size());
      es.mean_loss /= n;
      es.recon_l1 /= n;
      es.adv_branch_rate = static_cast<double>(adv_branch) / n;
      es.attack_success_rate =
          attacks_run == 0 ? 0.0
                           : static_cast<double>(attacks_won) /
                                 static_cast<double>(attacks_run);
      stats.push_back(es);
      ++epochs_trained;
      lr *= opt.lr_decay;
    }
    return stats;
  }
};

// One line per epoch, fixed schema for byte-stable reruns.
inline std::string epoch_record_line(const GenEpochStats& s) {
  char buf[224];
  std::snprintf(buf, sizeof(buf),
                "{\"epoch\":%zu,\"loss\":%.9g,\"recon_l1\":%.9g,"
                "\"adv_branch_rate\":%.9g,\"attack_success_rate\":%.9g}",
                s.epoch, s.mean_loss, s.recon_l1, s.adv_branch_rate,
                s.attack_success_rate);
  return std::string(buf);
}

}  // namespace sidlab

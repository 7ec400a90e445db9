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
// Speaker identification over time-pooled log-mel statistics: a small tanh
// MLP with a stored feature standardizer, exact analytic gradients with
// respect to both parameters and the input spectrogram, resumable SGD
// training, and the SPKCLF01 checkpoint format.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sidlab/matrix.hpp"
#include "sidlab/mel.hpp"
#include "sidlab/util.hpp"

namespace sidlab {

enum class Pooling : std::uint32_t { kMean = 0, kMeanStd = 1 };

struct ClassifierConfig {
  std::size_t n_mels = 80;
  std::size_t n_speakers = 10;
  std::size_t hidden_dim = 32;
  std::size_t hidden_layers = 1;  // 0 gives a linear softmax model
  Pooling pooling = Pooling::kMeanStd;
  std::uint64_t seed = 1;
};

struct TrainOptions {
  std::size_t epochs = 30;
  double lr = 0.05;
  double lr_decay = 1.0;  // multiplies lr once per epoch
};

struct TrainStats {
  double train_accuracy = 0.0;
  double val_accuracy = -1.0;  // -1 when no validation set was given
  double final_loss = 0.0;
  std::size_t epochs_run = 0;
};

struct Layer {
  Matrix W;  // out x in
  std::vector<double> b;
};

// Gradients in the same layout as the parameters.
struct ParamGrad {
  std::vector<Matrix> dW;
  std::vector<std::vector<double>> db;
};

class SpeakerClassifier {
 public:
  Pooling pooling = Pooling::kMeanStd;
  std::size_t n_mels = 0;
  std::size_t n_speakers = 0;
  std::size_t hidden_dim = 0;
  std::size_t hidden_layers = 0;
  std::uint64_t seed = 0;
  std::uint64_t epochs_trained = 0;
  bool standardized = false;
  std::vector<double> mu, sd;  // per pooled feature
  std::vector<Layer> layers;   // hidden tanh layers, then the linear output

  SpeakerClassifier() = default;

  explicit SpeakerClassifier(const ClassifierConfig& cfg)
      : pooling(cfg.pooling),
        n_mels(cfg.n_mels),
        n_speakers(cfg.n_speakers),
        hidden_dim(cfg.hidden_dim),
        hidden_layers(cfg.hidden_layers),
        seed(cfg.seed) {
    if (n_speakers < 2)
      throw std::invalid_argument("SpeakerClassifier: n_speakers < 2");
    if (n_mels < 1) throw std::invalid_argument("SpeakerClassifier: n_mels < 1");
    if (hidden_layers > 0 && hidden_dim < 1)
      throw std::invalid_argument("SpeakerClassifier: hidden_dim < 1");
    mu.assign(feat_dim(), 0.0);
    sd.assign(feat_dim(), 1.0);
    Rng rng(derive_seed(seed, 0xc1a55u));
    std::size_t in = feat_dim();
    for (std::size_t l = 0; l < hidden_layers; ++l) {
      layers.push_back(make_layer(hidden_dim, in, rng));
      in = hidden_dim;
    }
    layers.push_back(make_layer(n_speakers, in, rng));
  }

  std::size_t feat_dim() const {
    return pooling == Pooling::kMeanStd ? 2 * n_mels : n_mels;
  }

  // Time pooling: per-mel mean, optionally followed by per-mel std with a
  // 1e-8 variance floor.
  std::vector<double> pool(const MelSpectrogram& m) const {
    check_input(m);
    const std::size_t F = m.frames();
    std::vector<double> x(feat_dim(), 0.0);
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t j = 0; j < n_mels; ++j) x[j] += m.values(f, j);
    for (std::size_t j = 0; j < n_mels; ++j) x[j] /= static_cast<double>(F);
    if (pooling == Pooling::kMeanStd) {
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t j = 0; j < n_mels; ++j) {
          const double d = m.values(f, j) - x[j];
          x[n_mels + j] += d * d;
        }
      for (std::size_t j = 0; j < n_mels; ++j)
        x[n_mels + j] =
            std::sqrt(x[n_mels + j] / static_cast<double>(F) + 1e-8);
    }
    return x;
  }

  ProbVector forward(const MelSpectrogram& m) const {
    return softmax(logits(m));
  }

  std::vector<double> logits(const MelSpectrogram& m) const {
    std::vector<double> h = standardize(pool(m));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      h = affine(layers[l], h);
      if (l + 1 < layers.size())
        for (double& v : h) v = std::tanh(v);
    }
    return h;
  }

  std::size_t predict(const MelSpectrogram& m) const {
    return forward(m).argmax();
  }

  double loss(const MelSpectrogram& m, std::size_t target) const {
    return cross_entropy(forward(m), target);
  }

  // d cross_entropy(target) / d mel, exact through the softmax floor, the
  // standardizer and the pooling statistics.
  Matrix grad_input(const MelSpectrogram& m, std::size_t target) const {
    Trace t = trace(m);
    Matrix dmel = Matrix::zeros(m.frames(), m.n_mels());
    backward(m, t, softmax_ce_grad(t.probs, target), nullptr, &dmel);
    return dmel;
  }

  ParamGrad grad_params(const MelSpectrogram& m, std::size_t target) const {
    Trace t = trace(m);
    ParamGrad pg = zero_grad();
    backward(m, t, softmax_ce_grad(t.probs, target), &pg, nullptr);
    return pg;
  }

  // Parameter gradients for an arbitrary upstream dL/dlogits, for losses
  // that are not plain cross entropy.
  ParamGrad grad_params_dlogits(const MelSpectrogram& m,
                                const std::vector<double>& dlogits) const {
    if (dlogits.size() != n_speakers)
      throw std::invalid_argument("grad_params_dlogits: length mismatch");
    Trace t = trace(m);
    ParamGrad pg = zero_grad();
    backward(m, t, dlogits, &pg, nullptr);
    return pg;
  }

  // One SGD pass over train_set per epoch with a per-epoch deterministic
  // shuffle; safe to call repeatedly, the epoch counter carries across calls.
  TrainStats train(const Dataset& train_set, const Dataset& val_set,
                   const TrainOptions& opt) {
    if (train_set.empty())
      throw std::invalid_argument("train: empty training set");
    if (!standardized) fit_standardizer(train_set);
    TrainStats stats;
    double lr = opt.lr * std::pow(opt.lr_decay,
                                  static_cast<double>(epochs_trained));
    for (std::size_t e = 0; e < opt.epochs; ++e) {
      std::vector<std::size_t> order(train_set.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(derive_seed(seed, 0xe90c4u, epochs_trained));
      rng.shuffle(order);
      double loss_sum = 0.0;
      for (std::size_t i : order) {
        const auto& ex = train_set[i];
        Trace t = trace(ex.mel);
        loss_sum += cross_entropy(t.probs, ex.speaker);
        ParamGrad pg = zero_grad();
        backward(ex.mel, t, softmax_ce_grad(t.probs, ex.speaker), &pg,
                 nullptr);
        for (std::size_t l = 0; l < layers.size(); ++l) {
          for (std::size_t k = 0; k < layers[l].W.data.size(); ++k)
            layers[l].W.data[k] -= lr * pg.dW[l].data[k];
          for (std::size_t k = 0; k < layers[l].b.size(); ++k)
            layers[l].b[k] -= lr * pg.db[l][k];
        }
      }
      stats.final_loss = loss_sum / static_cast<double>(train_set.size());
      ++epochs_trained;
      ++stats.epochs_run;
      lr *= opt.lr_decay;
    }
    stats.train_accuracy = accuracy(train_set);
    if (!val_set.empty()) stats.val_accuracy = accuracy(val_set);
    return stats;
  }

  // Feature standardizer from pooled statistics; labels are not consulted,
  // so an unlabeled collection wrapped in a Dataset works too.
  void fit_standardizer(const Dataset& ds) {
    if (ds.empty())
      throw std::invalid_argument("fit_standardizer: empty dataset");
    const std::size_t D = feat_dim();
    std::vector<double> sum(D, 0.0), sq(D, 0.0);
    for (const auto& ex : ds) {
      const auto x = pool(ex.mel);
      for (std::size_t j = 0; j < D; ++j) {
        sum[j] += x[j];
        sq[j] += x[j] * x[j];
      }
    }
    const double n = static_cast<double>(ds.size());
    for (std::size_t j = 0; j < D; ++j) {
      mu[j] = sum[j] / n;
      const double var = std::max(sq[j] / n - mu[j] * mu[j], 0.0);
      const double s = std::sqrt(var);
      sd[j] = s < 1e-6 ? 1.0 : s;
    }
    standardized = true;
  }

  double accuracy(const Dataset& ds) const {
    if (ds.empty()) throw std::invalid_argument("accuracy: empty dataset");
    std::size_t hits = 0;
    for (const auto& ex : ds)
      if (predict(ex.mel) == ex.speaker) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ds.size());
  }

  void save(const std::string& path) const {
    std::string buf;
    buf.append("SPKCLF01");
    detail::put_u32(buf, static_cast<std::uint32_t>(pooling));
    detail::put_u32(buf, static_cast<std::uint32_t>(n_mels));
    detail::put_u32(buf, static_cast<std::uint32_t>(n_speakers));
    detail::put_u32(buf, static_cast<std::uint32_t>(hidden_dim));
    detail::put_u32(buf, static_cast<std::uint32_t>(hidden_layers));
    detail::put_u32(buf, standardized ? 1u : 0u);
    detail::put_u64(buf, seed);
    detail::put_u64(buf, epochs_trained);
    for (double v : mu) detail::put_f64(buf, v);
    for (double v : sd) detail::put_f64(buf, v);
    for (const auto& layer : layers) {
      detail::put_u32(buf, static_cast<std::uint32_t>(layer.W.rows));
      detail::put_u32(buf, static_cast<std::uint32_t>(layer.W.cols));
      for (double v : layer.W.data) detail::put_f64(buf, v);
      for (double v : layer.b) detail::put_f64(buf, v);
    }
    detail::spew(path, buf);
  }

  static SpeakerClassifier load(const std::string& path) {
    detail::ByteReader r(detail::slurp(path), path);
    r.expect_magic("SPKCLF01");
    SpeakerClassifier c;
    const std::uint32_t pooling_raw = r.u32();
    if (pooling_raw > 1) throw IoError(path + ": unknown pooling mode");
    c.pooling = static_cast<Pooling>(pooling_raw);
    c.n_mels = r.u32();
    c.n_speakers = r.u32();
    c.hidden_dim = r.u32();
    c.hidden_layers = r.u32();
    c.standardized = r.u32() != 0;
    c.seed = r.u64();
    c.epochs_trained = r.u64();
    if (c.n_mels == 0 || c.n_speakers < 2)
      throw IoError(path + ": malformed classifier header");
    c.mu.resize(c.feat_dim());
    c.sd.resize(c.feat_dim());
    for (double& v : c.mu) v = r.f64();
    for (double& v : c.sd) v = r.f64();
    for (std::size_t l = 0; l < c.hidden_layers + 1; ++l) {
      const std::uint32_t rows = r.u32();
      const std::uint32_t cols = r.u32();
      if (rows == 0 || cols == 0)
        throw IoError(path + ": zero-sized layer");
      Layer layer;
      layer.W = Matrix::zeros(rows, cols);
      for (double& v : layer.W.data) v = r.f64();
      layer.b.resize(rows);
      for (double& v : layer.b) v = r.f64();
      c.layers.push_back(std::move(layer));
    }
    r.expect_end();
    return c;
  }

 private:
  struct Trace {
    std::vector<double> x;                  // pooled
    std::vector<double> z;                  // standardized
    std::vector<std::vector<double>> act;   // tanh outputs per hidden layer
    ProbVector probs;
  };

  static Layer make_layer(std::size_t out, std::size_t in, Rng& rng) {
    Layer l;
    l.W = Matrix::zeros(out, in);
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : l.W.data) v = rng.uniform(-a, a);
    l.b.assign(out, 0.0);
    return l;
  }

  void check_input(const MelSpectrogram& m) const {
    if (m.n_mels() != n_mels)
      throw std::invalid_argument(
          "SpeakerClassifier: input has " + std::to_string(m.n_mels()) +
          " mel bands, model expects " + std::to_string(n_mels));
    if (m.frames() == 0)
      throw std::invalid_argument("SpeakerClassifier: empty spectrogram");
  }

  std::vector<double> standardize(std::vector<double> x) const {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - mu[j]) / sd[j];
    return x;
  }

  static std::vector<double> affine(const Layer& l,
                                    const std::vector<double>& in) {
    std::vector<double> out(l.W.rows);
    for (std::size_t r = 0; r < l.W.rows; ++r) {
      double acc = l.b[r];
      for (std::size_t c = 0; c < l.W.cols; ++c) acc += l.W(r, c) * in[c];
      out[r] = acc;
    }
    return out;
  }

  Trace trace(const MelSpectrogram& m) const {
    Trace t;
    t.x = pool(m);
    t.z = standardize(t.x);
    std::vector<double> h = t.z;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      h = affine(layers[l], h);
      for (double& v : h) v = std::tanh(v);
      t.act.push_back(h);
    }
    t.probs = softmax(affine(layers.back(), h));
    return t;
  }

  ParamGrad zero_grad() const {
    ParamGrad pg;
    for (const auto& l : layers) {
      pg.dW.push_back(Matrix::zeros(l.W.rows, l.W.cols));
      pg.db.emplace_back(l.b.size(), 0.0);
    }
    return pg;
  }

  // dlogits in, parameter and/or input gradients out.
  void backward(const MelSpectrogram& m, const Trace& t,
                std::vector<double> dlogits, ParamGrad* pg,
                Matrix* dmel) const {
    std::vector<double> d = std::move(dlogits);
    for (std::size_t l = layers.size(); l-- > 0;) {
      const std::vector<double>& input = l == 0 ? t.z : t.act[l - 1];
      if (pg) {
        for (std::size_t r = 0; r < layers[l].W.rows; ++r) {
          pg->db[l][r] += d[r];
          for (std::size_t c = 0; c < layers[l].W.cols; ++c)
            pg->dW[l](r, c) += d[r] * input[c];
        }
      }
      if (l == 0 && !dmel) return;
      std::vector<double> dprev(layers[l].W.cols, 0.0);
      for (std::size_t c = 0; c < layers[l].W.cols; ++c)
        for (std::size_t r = 0; r < layers[l].W.rows; ++r)
          dprev[c] += layers[l].W(r, c) * d[r];
      if (l > 0) {
        const auto& a = t.act[l - 1];
        for (std::size_t c = 0; c < dprev.size(); ++c)
          dprev[c] *= 1.0 - a[c] * a[c];
      }
      d = std::move(dprev);
    }
    if (!dmel) return;
    // Through the standardizer, then unpool.
    std::vector<double> dx(feat_dim());
    for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = d[j] / sd[j];
    const std::size_t F = m.frames();
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t j = 0; j < n_mels; ++j)
        (*dmel)(f, j) = dx[j] / static_cast<double>(F);
    if (pooling == Pooling::kMeanStd) {
      for (std::size_t j = 0; j < n_mels; ++j) {
        const double s = t.x[n_mels + j];
        for (std::size_t f = 0; f < F; ++f)
          (*dmel)(f, j) += dx[n_mels + j] * (m.values(f, j) - t.x[j]) /
                           (static_cast<double>(F) * s);
      }
    }
  }

};

// Fraction of samples where both models emit the same label.
inline double agreement(const SpeakerClassifier& a, const SpeakerClassifier& b,
                        const Dataset& ds) {
  if (ds.empty()) throw std::invalid_argument("agreement: empty dataset");
  std::size_t hits = 0;
  for (const auto& ex : ds)
    if (a.predict(ex.mel) == b.predict(ex.mel)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

}  // namespace sidlab

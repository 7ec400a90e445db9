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
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sidlab/audio.hpp"
#include "sidlab/classifier.hpp"
#include "sidlab/mel.hpp"

namespace {

using namespace sidlab;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

MelSpectrogram random_mel(std::size_t frames, std::size_t n_mels, Rng& rng) {
  MelSpectrogram m;
  m.values = Matrix::zeros(frames, n_mels);
  for (double& v : m.values.data) v = rng.uniform(-60.0, 0.0);
  return m;
}

SpeakerClassifier make_model(std::size_t hidden_layers, Pooling pooling,
                             std::uint64_t seed, std::size_t n_mels = 8,
                             std::size_t n_speakers = 4) {
  ClassifierConfig cfg;
  cfg.n_mels = n_mels;
  cfg.n_speakers = n_speakers;
  cfg.hidden_dim = 6;
  cfg.hidden_layers = hidden_layers;
  cfg.pooling = pooling;
  cfg.seed = seed;
  SpeakerClassifier c(cfg);
  // Non-trivial standardizer so the full chain is exercised.
  Rng rng(derive_seed(seed, 0x57a2u));
  for (std::size_t j = 0; j < c.mu.size(); ++j) {
    c.mu[j] = rng.uniform(-40.0, -10.0);
    c.sd[j] = rng.uniform(0.5, 15.0);
  }
  c.standardized = true;
  return c;
}

Dataset toy_corpus(std::size_t n_speakers, std::size_t utts, double dur_s,
                   std::uint64_t seed) {
  DatasetSpec spec;
  spec.n_speakers = n_speakers;
  spec.utterances_per_speaker = utts;
  spec.duration_s = dur_s;
  spec.seed = seed;
  const MelExtractor ex;
  Dataset ds;
  for (const auto& w : synth_dataset(spec)) {
    LabeledMel e;
    e.mel = ex.extract(w);
    e.speaker = w.speaker;
    e.content_id = w.content_id;
    ds.push_back(std::move(e));
  }
  return ds;
}

void split_per_speaker(const Dataset& ds, std::size_t val_per_speaker,
                       Dataset* train, Dataset* val) {
  std::vector<std::size_t> taken(count_speakers(ds), 0);
  for (const auto& e : ds) {
    if (taken[e.speaker] < val_per_speaker) {
      val->push_back(e);
      ++taken[e.speaker];
    } else {
      train->push_back(e);
    }
  }
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("pooled statistics match a hand computation") {
  ClassifierConfig cfg;
  cfg.n_mels = 2;
  cfg.n_speakers = 2;
  cfg.hidden_layers = 0;
  cfg.pooling = Pooling::kMeanStd;
  SpeakerClassifier c(cfg);
  MelSpectrogram m;
  m.values = Matrix::zeros(2, 2);
  m.values(0, 0) = 0.0;
  m.values(0, 1) = 2.0;
  m.values(1, 0) = 4.0;
  m.values(1, 1) = 6.0;
  const auto x = c.pool(m);
  REQUIRE(x.size() == 4);
  REQUIRE(x[0] == Catch::Approx(2.0));
  REQUIRE(x[1] == Catch::Approx(4.0));
  REQUIRE(x[2] == Catch::Approx(std::sqrt(4.0 + 1e-8)).margin(1e-12));
  REQUIRE(x[3] == Catch::Approx(std::sqrt(4.0 + 1e-8)).margin(1e-12));

  cfg.pooling = Pooling::kMean;
  SpeakerClassifier cm(cfg);
  const auto xm = cm.pool(m);
  REQUIRE(xm.size() == 2);
  REQUIRE(xm[0] == Catch::Approx(2.0));
  REQUIRE(xm[1] == Catch::Approx(4.0));
}

TEST_CASE("linear model logits follow the affine map") {
  ClassifierConfig cfg;
  cfg.n_mels = 2;
  cfg.n_speakers = 2;
  cfg.hidden_layers = 0;
  cfg.pooling = Pooling::kMean;
  SpeakerClassifier c(cfg);
  c.layers[0].W(0, 0) = 1.0;
  c.layers[0].W(0, 1) = -2.0;
  c.layers[0].W(1, 0) = 0.5;
  c.layers[0].W(1, 1) = 3.0;
  c.layers[0].b = {0.25, -1.0};
  MelSpectrogram m;
  m.values = Matrix::zeros(1, 2);
  m.values(0, 0) = 2.0;
  m.values(0, 1) = -1.0;
  const auto z = c.logits(m);
  REQUIRE(z[0] == Catch::Approx(2.0 + 2.0 + 0.25));
  REQUIRE(z[1] == Catch::Approx(1.0 - 3.0 - 1.0));
}

TEST_CASE("input gradients match central differences") {
  Rng rng(7);
  for (std::size_t hidden : {0u, 1u, 2u, 3u}) {
    for (Pooling pooling : {Pooling::kMean, Pooling::kMeanStd}) {
      auto c = make_model(hidden, pooling, 100 + hidden);
      for (int rep = 0; rep < 3; ++rep) {
        auto m = random_mel(5, c.n_mels, rng);
        const std::size_t target = rng.index(c.n_speakers);
        const Matrix g = c.grad_input(m, target);
        for (int probe = 0; probe < 12; ++probe) {
          const std::size_t i = rng.index(m.values.data.size());
          const double h = 1e-5;
          const double keep = m.values.data[i];
          m.values.data[i] = keep + h;
          const double lp = c.loss(m, target);
          m.values.data[i] = keep - h;
          const double lm = c.loss(m, target);
          m.values.data[i] = keep;
          REQUIRE(rel_err(g.data[i], (lp - lm) / (2.0 * h)) < 1e-4);
        }
      }
    }
  }
}

TEST_CASE("parameter gradients match central differences") {
  Rng rng(8);
  for (std::size_t hidden : {0u, 1u, 2u, 3u}) {
    auto c = make_model(hidden, Pooling::kMeanStd, 200 + hidden);
    auto m = random_mel(4, c.n_mels, rng);
    const std::size_t target = rng.index(c.n_speakers);
    const ParamGrad pg = c.grad_params(m, target);
    for (std::size_t l = 0; l < c.layers.size(); ++l) {
      for (int probe = 0; probe < 8; ++probe) {
        const std::size_t i = rng.index(c.layers[l].W.data.size());
        const double h = 1e-5;
        const double keep = c.layers[l].W.data[i];
        c.layers[l].W.data[i] = keep + h;
        const double lp = c.loss(m, target);
        c.layers[l].W.data[i] = keep - h;
        const double lm = c.loss(m, target);
        c.layers[l].W.data[i] = keep;
        REQUIRE(rel_err(pg.dW[l].data[i], (lp - lm) / (2.0 * h)) < 1e-3);
      }
      const std::size_t i = rng.index(c.layers[l].b.size());
      const double h = 1e-5;
      const double keep = c.layers[l].b[i];
      c.layers[l].b[i] = keep + h;
      const double lp = c.loss(m, target);
      c.layers[l].b[i] = keep - h;
      const double lm = c.loss(m, target);
      c.layers[l].b[i] = keep;
      REQUIRE(rel_err(pg.db[l][i], (lp - lm) / (2.0 * h)) < 1e-3);
    }
  }
}

TEST_CASE("training reduces the loss and reports accuracies") {
  const auto ds = toy_corpus(4, 8, 0.25, 21);
  Dataset train, val;
  split_per_speaker(ds, 2, &train, &val);

  ClassifierConfig cfg;
  cfg.n_speakers = 4;
  cfg.seed = 5;
  SpeakerClassifier c(cfg);
  TrainOptions opt;
  opt.epochs = 1;
  const auto first = c.train(train, val, opt);
  REQUIRE(first.epochs_run == 1);
  opt.epochs = 14;
  const auto later = c.train(train, val, opt);
  REQUIRE(later.final_loss < first.final_loss);
  REQUIRE(later.train_accuracy >= 0.9);
  REQUIRE(later.val_accuracy >= 0.0);
  REQUIRE(c.epochs_trained == 15);
}

TEST_CASE("split training matches one continuous run bit for bit") {
  const auto ds = toy_corpus(3, 6, 0.25, 33);
  ClassifierConfig cfg;
  cfg.n_speakers = 3;
  cfg.seed = 77;
  TrainOptions opt;

  SpeakerClassifier one(cfg);
  opt.epochs = 6;
  one.train(ds, {}, opt);

  SpeakerClassifier two(cfg);
  opt.epochs = 2;
  two.train(ds, {}, opt);
  opt.epochs = 4;
  two.train(ds, {}, opt);

  REQUIRE(one.layers.size() == two.layers.size());
  for (std::size_t l = 0; l < one.layers.size(); ++l) {
    REQUIRE(one.layers[l].W.data == two.layers[l].W.data);
    REQUIRE(one.layers[l].b == two.layers[l].b);
  }
}

TEST_CASE("checkpoints round-trip and support resuming") {
  const auto ds = toy_corpus(3, 6, 0.25, 44);
  ClassifierConfig cfg;
  cfg.n_speakers = 3;
  cfg.seed = 9;
  TrainOptions opt;

  SpeakerClassifier ref(cfg);
  opt.epochs = 5;
  ref.train(ds, {}, opt);

  SpeakerClassifier half(cfg);
  opt.epochs = 3;
  half.train(ds, {}, opt);
  const auto path = temp_path("sidlab_clf.ckpt");
  half.save(path);
  auto resumed = SpeakerClassifier::load(path);
  REQUIRE(resumed.epochs_trained == 3);
  REQUIRE(resumed.standardized);
  opt.epochs = 2;
  resumed.train(ds, {}, opt);
  for (std::size_t l = 0; l < ref.layers.size(); ++l) {
    REQUIRE(ref.layers[l].W.data == resumed.layers[l].W.data);
    REQUIRE(ref.layers[l].b == resumed.layers[l].b);
  }

  // Corrupt variants.
  std::string bytes = sidlab::detail::slurp(path);
  const auto bad = temp_path("sidlab_clf_bad.ckpt");
  std::ofstream(bad, std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  REQUIRE_THROWS_AS(SpeakerClassifier::load(bad), IoError);
  std::ofstream(bad, std::ios::binary) << ("XPKCLF01" + bytes.substr(8));
  REQUIRE_THROWS_AS(SpeakerClassifier::load(bad), IoError);
  REQUIRE_THROWS_AS(SpeakerClassifier::load(temp_path("absent.ckpt")),
                    IoError);
}

TEST_CASE("held-out accuracy on the toy corpus clears 95 percent") {
  const auto ds = toy_corpus(6, 12, 0.3, 2026);
  Dataset train, val;
  split_per_speaker(ds, 3, &train, &val);
  ClassifierConfig cfg;
  cfg.n_speakers = 6;
  cfg.seed = 1;
  SpeakerClassifier c(cfg);
  TrainOptions opt;
  opt.epochs = 40;
  const auto stats = c.train(train, val, opt);
  REQUIRE(stats.train_accuracy >= 0.95);
  REQUIRE(stats.val_accuracy >= 0.95);

  SpeakerClassifier other(cfg);
  other.seed = 2;
  other.train(train, val, opt);
  REQUIRE(agreement(c, c, val) == 1.0);
  REQUIRE(agreement(c, other, val) >= 0.9);

  // Predictions shrug off sub-dB noise.
  std::size_t stable = 0;
  for (const auto& e : val) {
    const auto noisy = add_gaussian_noise(e.mel, 0.1, 99);
    if (c.predict(noisy) == c.predict(e.mel)) ++stable;
  }
  REQUIRE(static_cast<double>(stable) / static_cast<double>(val.size()) >=
          0.9);
}

TEST_CASE("classifier rejects malformed inputs") {
  ClassifierConfig cfg;
  cfg.n_speakers = 1;
  REQUIRE_THROWS_AS(SpeakerClassifier(cfg), std::invalid_argument);
  cfg.n_speakers = 3;
  SpeakerClassifier c(cfg);
  MelSpectrogram wrong;
  wrong.values = Matrix::zeros(4, 7);
  REQUIRE_THROWS_AS(c.predict(wrong), std::invalid_argument);
  REQUIRE_THROWS_AS(c.accuracy({}), std::invalid_argument);
  REQUIRE_THROWS_AS(c.train({}, {}, {}), std::invalid_argument);
}

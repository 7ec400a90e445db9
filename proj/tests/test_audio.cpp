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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sidlab/audio.hpp"
#include "sidlab/mel.hpp"

namespace {

using namespace sidlab;

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

// Least-squares sinusoid fit at a fixed frequency; returns the relative
// residual energy.
double tone_fit_residual(const std::vector<double>& x, double freq_hz,
                         double sr) {
  double scc = 0.0, sss = 0.0, scs = 0.0, sxc = 0.0, sxs = 0.0, sxx = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double th = 2.0 * M_PI * freq_hz * static_cast<double>(n) / sr;
    const double c = std::cos(th), s = std::sin(th);
    scc += c * c;
    sss += s * s;
    scs += c * s;
    sxc += x[n] * c;
    sxs += x[n] * s;
    sxx += x[n] * x[n];
  }
  const double det = scc * sss - scs * scs;
  const double a = (sxc * sss - sxs * scs) / det;
  const double b = (sxs * scc - sxc * scs) / det;
  double res = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double th = 2.0 * M_PI * freq_hz * static_cast<double>(n) / sr;
    const double e = x[n] - a * std::cos(th) - b * std::sin(th);
    res += e * e;
  }
  return res / sxx;
}

// Argmax of projection power over a frequency grid, via an oscillator
// recurrence so the scan stays cheap.
double dominant_freq(const std::vector<double>& x, double lo, double hi,
                     double step, double sr) {
  double best_f = lo, best_p = -1.0;
  for (double f = lo; f <= hi; f += step) {
    const double w = 2.0 * M_PI * f / sr;
    const double cw = std::cos(w), sw = std::sin(w);
    double c = 1.0, s = 0.0, sc = 0.0, ss = 0.0;
    for (double v : x) {
      sc += v * c;
      ss += v * s;
      const double c2 = c * cw - s * sw;
      s = c * sw + s * cw;
      c = c2;
    }
    const double p = sc * sc + ss * ss;
    if (p > best_p) {
      best_p = p;
      best_f = f;
    }
  }
  return best_f;
}

WaveSample sine_wave(double freq_hz, double amp, double dur_s,
                     double sr = 16000.0) {
  WaveSample w;
  w.sample_rate = sr;
  const auto n = static_cast<std::size_t>(dur_s * sr);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] =
        amp * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) / sr);
  return w;
}

void put_u32(std::string& b, std::uint32_t v) {
  b.append(reinterpret_cast<const char*>(&v), 4);
}
void put_u16(std::string& b, std::uint16_t v) {
  b.append(reinterpret_cast<const char*>(&v), 2);
}

std::string wav_bytes(std::uint16_t format, std::uint16_t channels,
                      std::uint32_t rate, std::uint16_t bits,
                      const std::vector<std::int16_t>& samples) {
  std::string data;
  for (std::int16_t s : samples)
    data.append(reinterpret_cast<const char*>(&s), 2);
  std::string b;
  b.append("RIFF");
  put_u32(b, static_cast<std::uint32_t>(36 + data.size()));
  b.append("WAVE");
  b.append("fmt ");
  put_u32(b, 16);
  put_u16(b, format);
  put_u16(b, channels);
  put_u32(b, rate);
  put_u32(b, rate * channels * bits / 8);
  put_u16(b, static_cast<std::uint16_t>(channels * bits / 8));
  put_u16(b, bits);
  b.append("data");
  put_u32(b, static_cast<std::uint32_t>(data.size()));
  b += data;
  return b;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("speaker voices are stratified and distinct") {
  DatasetSpec spec;
  spec.n_speakers = 10;
  for (std::uint64_t seed : {1ULL, 7ULL, 123456789ULL}) {
    spec.seed = seed;
    const auto voices = speaker_voices(spec);
    REQUIRE(voices.size() == 10);
    for (std::size_t s = 0; s < voices.size(); ++s) {
      REQUIRE(voices[s].f0_hz >= 90.0);
      REQUIRE(voices[s].f0_hz <= 300.0);
      if (s > 0) REQUIRE(voices[s].f0_hz > voices[s - 1].f0_hz * 1.01);
    }
  }
  spec.n_speakers = 1;
  REQUIRE_THROWS_AS(speaker_voices(spec), std::invalid_argument);
}

TEST_CASE("synthesis is deterministic under the seed") {
  DatasetSpec spec;
  spec.n_speakers = 3;
  spec.utterances_per_speaker = 2;
  spec.duration_s = 0.2;
  spec.seed = 42;
  const auto a = synth_dataset(spec);
  const auto b = synth_dataset(spec);
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].speaker == b[i].speaker);
    REQUIRE(a[i].content_id == b[i].content_id);
    REQUIRE(a[i].samples == b[i].samples);
  }
  spec.seed = 43;
  const auto c = synth_dataset(spec);
  REQUIRE(a[0].samples != c[0].samples);
}

TEST_CASE("samples stay in range and utterances differ within a speaker") {
  DatasetSpec spec;
  spec.n_speakers = 2;
  spec.utterances_per_speaker = 3;
  spec.duration_s = 0.2;
  spec.seed = 5;
  const auto ds = synth_dataset(spec);
  for (const auto& w : ds)
    for (double v : w.samples) {
      REQUIRE(v <= 1.0);
      REQUIRE(v >= -1.0);
    }
  REQUIRE(ds[0].samples != ds[1].samples);
}

TEST_CASE("noise-free single-harmonic synthesis is a pure tone at the "
          "speaker fundamental") {
  DatasetSpec spec;
  spec.n_speakers = 2;
  spec.utterances_per_speaker = 1;
  spec.duration_s = 0.5;
  spec.seed = 99;
  spec.noise_floor = 0.0;
  spec.n_harmonics = 1;
  const auto voices = speaker_voices(spec);
  const auto ds = synth_dataset(spec);
  for (std::size_t s = 0; s < 2; ++s) {
    const double f0 = voices[s].f0_hz;
    const double est = dominant_freq(ds[s].samples, 0.95 * f0, 1.05 * f0,
                                     0.01, spec.sample_rate);
    REQUIRE(std::abs(est / f0 - 1.0) < 0.025);  // per-utterance jitter is 2%
    REQUIRE(tone_fit_residual(ds[s].samples, est, spec.sample_rate) < 2e-3);
  }
}

TEST_CASE("wav reader round-trips 16-bit mono PCM at 16 kHz") {
  const auto dir = temp_dir("sidlab_wav");
  const std::vector<std::int16_t> pcm = {0, 16384, -16384, 32767, -32768, 123};
  write_file(dir + "/ok.wav", wav_bytes(1, 1, 16000, 16, pcm));
  const auto w = read_wav(dir + "/ok.wav");
  REQUIRE(w.samples.size() == pcm.size());
  REQUIRE(w.sample_rate == 16000.0);
  for (std::size_t i = 0; i < pcm.size(); ++i)
    REQUIRE(w.samples[i] == Catch::Approx(pcm[i] / 32768.0).margin(1e-12));
}

TEST_CASE("wav reader rejects unsupported formats with a descriptive error") {
  const auto dir = temp_dir("sidlab_wav_bad");
  const std::vector<std::int16_t> pcm = {0, 1, 2, 3};
  write_file(dir + "/stereo.wav", wav_bytes(1, 2, 16000, 16, pcm));
  write_file(dir + "/rate.wav", wav_bytes(1, 1, 44100, 16, pcm));
  write_file(dir + "/float.wav", wav_bytes(3, 1, 16000, 16, pcm));
  write_file(dir + "/notwav.wav", "JUNKJUNKJUNKJUNKJUNKJUNKJUNKJUNKJUNKJUNK"
                                  "JUNKJUNK");
  const auto truncated = wav_bytes(1, 1, 16000, 16, pcm).substr(0, 30);
  write_file(dir + "/short.wav", truncated);
  REQUIRE_THROWS_WITH(read_wav(dir + "/stereo.wav"),
                      Catch::Matchers::ContainsSubstring("mono"));
  REQUIRE_THROWS_WITH(read_wav(dir + "/rate.wav"),
                      Catch::Matchers::ContainsSubstring("16 kHz"));
  REQUIRE_THROWS_WITH(read_wav(dir + "/float.wav"),
                      Catch::Matchers::ContainsSubstring("PCM"));
  REQUIRE_THROWS_AS(read_wav(dir + "/notwav.wav"), IoError);
  REQUIRE_THROWS_AS(read_wav(dir + "/short.wav"), IoError);
  REQUIRE_THROWS_AS(read_wav(dir + "/absent.wav"), IoError);
}

TEST_CASE("htk mel scale anchors") {
  REQUIRE(hz_to_mel(0.0) == 0.0);
  REQUIRE(hz_to_mel(1000.0) == Catch::Approx(999.9855371).margin(1e-3));
  for (double hz : {50.0, 440.0, 1234.5, 7999.0})
    REQUIRE(mel_to_hz(hz_to_mel(hz)) == Catch::Approx(hz).epsilon(1e-10));
}

TEST_CASE("single mel triangle spans the band with apex at the mel midpoint") {
  const auto centers = mel_centers_hz(1, 100.0, 4000.0);
  REQUIRE(centers.size() == 1);
  const double mid_mel = 0.5 * (hz_to_mel(100.0) + hz_to_mel(4000.0));
  REQUIRE(hz_to_mel(centers[0]) == Catch::Approx(mid_mel).epsilon(1e-12));

  const auto fb = mel_filterbank(400, 1, 16000.0, 100.0, 4000.0);
  REQUIRE(fb.rows == 1);
  REQUIRE(fb.cols == 201);
  for (std::size_t k = 0; k < fb.cols; ++k) {
    const double f_k = static_cast<double>(k) * 40.0;
    if (f_k <= 100.0 || f_k >= 4000.0) REQUIRE(fb(0, k) == 0.0);
  }
  // Apex at the bin nearest the center.
  std::size_t argmax = 0;
  for (std::size_t k = 1; k < fb.cols; ++k)
    if (fb(0, k) > fb(0, argmax)) argmax = k;
  REQUIRE(std::abs(static_cast<double>(argmax) * 40.0 - centers[0]) <= 40.0);
}

TEST_CASE("default filterbank rows are non-empty with ordered peaks") {
  const auto fb = mel_filterbank(400, 80, 16000.0, 0.0, 8000.0);
  REQUIRE(fb.rows == 80);
  REQUIRE(fb.cols == 201);
  std::size_t prev_peak = 0;
  for (std::size_t i = 0; i < fb.rows; ++i) {
    double row_sum = 0.0;
    std::size_t peak = 0;
    for (std::size_t k = 0; k < fb.cols; ++k) {
      REQUIRE(fb(i, k) >= 0.0);
      row_sum += fb(i, k);
      if (fb(i, k) > fb(i, peak)) peak = k;
    }
    REQUIRE(row_sum > 0.0);
    REQUIRE(peak >= prev_peak);
    prev_peak = peak;
  }
}

TEST_CASE("filterbank argument validation") {
  REQUIRE_THROWS_AS(mel_filterbank(400, 0, 16000.0, 0.0, 8000.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(mel_filterbank(400, 80, 16000.0, 4000.0, 1000.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(mel_filterbank(400, 80, 16000.0, 0.0, 9000.0),
                    std::invalid_argument);
}

TEST_CASE("frame count follows the hop arithmetic") {
  const auto w = sine_wave(440.0, 0.5, 1.0);
  REQUIRE(w.samples.size() == 16000);
  const auto m = mel_spectrogram(w, 400, 160, 80);
  REQUIRE(m.frames() == 98);
  REQUIRE(m.n_mels() == 80);
  REQUIRE(m.values.all_finite());
}

TEST_CASE("silence maps to the dB floor everywhere") {
  WaveSample w;
  w.samples.assign(8000, 0.0);
  const auto m = mel_spectrogram(w);
  for (double v : m.values.data) REQUIRE(v == kMelFloorDb);
}

TEST_CASE("tone energy lands in the mel band nearest its frequency") {
  const MelExtractor ex(16000.0, 400, 160, 80);
  const auto centers = ex.centers_hz();
  for (double freq : {440.0, 1000.0, 3000.0}) {
    std::size_t nearest = 0;
    for (std::size_t i = 1; i < centers.size(); ++i)
      if (std::abs(centers[i] - freq) < std::abs(centers[nearest] - freq))
        nearest = i;
    const auto m = ex.extract(sine_wave(freq, 0.5, 0.5));
    for (std::size_t f = 0; f < m.frames(); ++f) {
      std::size_t argmax = 0;
      for (std::size_t j = 1; j < m.n_mels(); ++j)
        if (m.values(f, j) > m.values(f, argmax)) argmax = j;
      REQUIRE(argmax == nearest);
    }
  }
}

TEST_CASE("levels are relative to the utterance maximum") {
  const auto m = mel_spectrogram(sine_wave(1000.0, 0.5, 0.5));
  double top = -1e9;
  for (double v : m.values.data) {
    REQUIRE(v >= kMelFloorDb);
    REQUIRE(v <= 0.0);
    top = std::max(top, v);
  }
  REQUIRE(top == 0.0);
}

TEST_CASE("extraction rejects waveforms shorter than one frame") {
  WaveSample w;
  w.samples.assign(399, 0.1);
  REQUIRE_THROWS_AS(mel_spectrogram(w), std::invalid_argument);
}

TEST_CASE("gaussian dB noise has the requested moments and is seeded") {
  MelSpectrogram m;
  m.values = Matrix::zeros(100, 80);
  for (std::size_t i = 0; i < m.values.data.size(); ++i)
    m.values.data[i] = -30.0 + 0.001 * static_cast<double>(i % 50);

  const auto noisy = add_gaussian_noise(m, 0.1, 2024);
  double mean = 0.0;
  for (std::size_t i = 0; i < m.values.data.size(); ++i)
    mean += noisy.values.data[i] - m.values.data[i];
  mean /= static_cast<double>(m.values.data.size());
  double var = 0.0;
  for (std::size_t i = 0; i < m.values.data.size(); ++i) {
    const double d = noisy.values.data[i] - m.values.data[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(m.values.data.size());
  REQUIRE(std::abs(mean) < 0.01);
  REQUIRE(std::abs(std::sqrt(var) - 0.1) < 0.01);

  const auto again = add_gaussian_noise(m, 0.1, 2024);
  REQUIRE(again.values.data == noisy.values.data);
  const auto other = add_gaussian_noise(m, 0.1, 2025);
  REQUIRE(other.values.data != noisy.values.data);
  const auto clean = add_gaussian_noise(m, 0.0, 2024);
  REQUIRE(clean.values.data == m.values.data);
  REQUIRE_THROWS_AS(add_gaussian_noise(m, -0.1, 1), std::invalid_argument);
}

TEST_CASE("melspec files round-trip bit-identically") {
  const auto dir = temp_dir("sidlab_melio");
  MelSpectrogram m;
  m.values = Matrix::zeros(7, 5);
  Rng rng(11);
  for (double& v : m.values.data)
    v = static_cast<double>(static_cast<float>(rng.uniform(-80.0, 0.0)));

  write_melspec(dir + "/a.mel", m, 777);
  const auto rec = read_melspec(dir + "/a.mel");
  REQUIRE(rec.seed == 777);
  REQUIRE(rec.mel.frames() == 7);
  REQUIRE(rec.mel.n_mels() == 5);
  REQUIRE(rec.mel.values.data == m.values.data);
}

TEST_CASE("melspec reader rejects malformed files") {
  const auto dir = temp_dir("sidlab_melio_bad");
  MelSpectrogram m;
  m.values = Matrix::zeros(3, 4);
  write_melspec(dir + "/ok.mel", m, 1);

  auto bytes = sidlab::detail::slurp(dir + "/ok.mel");
  write_file(dir + "/magic.mel", "XELSPEC1" + bytes.substr(8));
  write_file(dir + "/trunc.mel", bytes.substr(0, bytes.size() - 3));
  write_file(dir + "/extra.mel", bytes + "x");
  REQUIRE_THROWS_AS(read_melspec(dir + "/magic.mel"), IoError);
  REQUIRE_THROWS_AS(read_melspec(dir + "/trunc.mel"), IoError);
  REQUIRE_THROWS_AS(read_melspec(dir + "/extra.mel"), IoError);
  REQUIRE_THROWS_AS(read_melspec(dir + "/absent.mel"), IoError);
}

TEST_CASE("corpus save and load preserve labels and values") {
  const auto dir = temp_dir("sidlab_corpus");
  Dataset ds;
  Rng rng(3);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t c = 0; c < 2; ++c) {
      LabeledMel e;
      e.speaker = s;
      e.content_id = c;
      e.mel.values = Matrix::zeros(4, 3);
      for (double& v : e.mel.values.data)
        v = static_cast<double>(static_cast<float>(rng.uniform(-80.0, 0.0)));
      ds.push_back(e);
    }
  save_corpus(dir, ds, 123);
  const auto back = load_corpus(dir);
  REQUIRE(back.size() == ds.size());
  REQUIRE(count_speakers(back) == 2);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    REQUIRE(back[i].speaker == ds[i].speaker);
    REQUIRE(back[i].content_id == ds[i].content_id);
    REQUIRE(back[i].mel.values.data == ds[i].mel.values.data);
  }

  write_file(dir + "/manifest.tsv", "only_one_field\n");
  REQUIRE_THROWS_AS(load_corpus(dir), IoError);
  REQUIRE_THROWS_AS(load_corpus(dir + "/absent"), IoError);
}

TEST_CASE("mel pipeline is deterministic end to end") {
  DatasetSpec spec;
  spec.n_speakers = 2;
  spec.utterances_per_speaker = 1;
  spec.duration_s = 0.2;
  spec.seed = 31337;
  const auto ds1 = synth_dataset(spec);
  const auto ds2 = synth_dataset(spec);
  const auto m1 = mel_spectrogram(ds1[0]);
  const auto m2 = mel_spectrogram(ds2[0]);
  REQUIRE(m1.values.data == m2.values.data);
}

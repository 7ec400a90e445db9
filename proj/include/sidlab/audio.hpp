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
// Seeded multi-speaker toy corpus: harmonic-series voices with per-speaker
// fundamental and spectral tilt, plus strict 16-bit mono PCM WAV ingestion.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sidlab/util.hpp"

namespace sidlab {

struct WaveSample {
  std::vector<double> samples;  // in [-1, 1]
  double sample_rate = 16000.0;
  std::size_t speaker = 0;
  std::size_t content_id = 0;
};

struct DatasetSpec {
  std::size_t n_speakers = 10;
  std::size_t utterances_per_speaker = 24;
  double duration_s = 0.5;
  std::uint64_t seed = 1;
  double noise_floor = 0.02;  // additive Gaussian amplitude
  double sample_rate = 16000.0;
  std::size_t n_harmonics = 12;
};

// Per-speaker voice parameters derived deterministically from the spec.
struct SpeakerVoice {
  double f0_hz;  // fundamental
  double tilt;   // harmonic h gets amplitude h^(-tilt)
};

namespace detail {
constexpr double kF0MinHz = 90.0;
constexpr double kF0MaxHz = 300.0;
constexpr double kTiltMin = 0.4;
constexpr double kTiltMax = 1.6;
}  // namespace detail

// Stratified log-uniform fundamentals: one band per speaker with a 20%
// margin on each side, so voices are distinct under every seed.
inline std::vector<SpeakerVoice> speaker_voices(const DatasetSpec& spec) {
  if (spec.n_speakers < 2)
    throw std::invalid_argument("speaker_voices: need at least 2 speakers");
  std::vector<SpeakerVoice> voices(spec.n_speakers);
  const double lo = std::log(detail::kF0MinHz);
  const double hi = std::log(detail::kF0MaxHz);
  const double band = (hi - lo) / static_cast<double>(spec.n_speakers);
  const double tilt_band = (detail::kTiltMax - detail::kTiltMin) /
                           static_cast<double>(spec.n_speakers);
  for (std::size_t s = 0; s < spec.n_speakers; ++s) {
    Rng rng(derive_seed(spec.seed, 0x5eedu, s));
    const double u = rng.uniform01();
    voices[s].f0_hz =
        std::exp(lo + (static_cast<double>(s) + 0.2 + 0.6 * u) * band);
    // Alternate tilt bands from opposite ends so neighbours in pitch
    // differ in spectral envelope as well.
    const std::size_t tilt_slot =
        (s % 2 == 0) ? s / 2 : spec.n_speakers - 1 - s / 2;
    const double ut = rng.uniform01();
    voices[s].tilt = detail::kTiltMin +
                     (static_cast<double>(tilt_slot) + 0.2 + 0.6 * ut) *
                         tilt_band;
  }
  return voices;
}

// One utterance: harmonic series at a jittered fundamental with random
// phases and mild per-harmonic amplitude jitter, plus Gaussian noise.
inline WaveSample synth_utterance(const DatasetSpec& spec,
                                  const SpeakerVoice& voice,
                                  std::size_t speaker,
                                  std::size_t content_id) {
  WaveSample w;
  w.sample_rate = spec.sample_rate;
  w.speaker = speaker;
  w.content_id = content_id;
  const std::size_t n =
      static_cast<std::size_t>(spec.duration_s * spec.sample_rate);
  w.samples.resize(n);

  Rng rng(derive_seed(spec.seed, speaker + 1, content_id + 1));
  const double f0 = voice.f0_hz * (1.0 + rng.uniform(-0.02, 0.02));
  const double nyquist = spec.sample_rate / 2.0;

  std::vector<double> amp(spec.n_harmonics, 0.0);
  std::vector<double> phase(spec.n_harmonics, 0.0);
  double amp_sum = 0.0;
  for (std::size_t h = 0; h < spec.n_harmonics; ++h) {
    const double fh = f0 * static_cast<double>(h + 1);
    const double base = std::pow(static_cast<double>(h + 1), -voice.tilt);
    amp[h] = fh < nyquist ? base * (1.0 + rng.uniform(-0.1, 0.1)) : 0.0;
    phase[h] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    amp_sum += amp[h];
  }
  const double scale = amp_sum > 0.0 ? 0.9 / amp_sum : 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.sample_rate;
    double v = 0.0;
    for (std::size_t h = 0; h < spec.n_harmonics; ++h) {
      if (amp[h] == 0.0) continue;
      v += amp[h] *
           std::sin(2.0 * 3.14159265358979323846 * f0 *
                        static_cast<double>(h + 1) * t +
                    phase[h]);
    }
    v *= scale;
    if (spec.noise_floor > 0.0) v += rng.normal(0.0, spec.noise_floor);
    w.samples[i] = std::clamp(v, -1.0, 1.0);
  }
  return w;
}

// Deterministic toy corpus; utterances ordered by (speaker, content).
inline std::vector<WaveSample> synth_dataset(const DatasetSpec& spec) {
  if (spec.n_speakers < 2)
    throw std::invalid_argument("synth_dataset: need at least 2 speakers");
  if (spec.utterances_per_speaker < 1)
    throw std::invalid_argument("synth_dataset: need at least 1 utterance");
  const auto voices = speaker_voices(spec);
  std::vector<WaveSample> out;
  out.reserve(spec.n_speakers * spec.utterances_per_speaker);
  for (std::size_t s = 0; s < spec.n_speakers; ++s)
    for (std::size_t c = 0; c < spec.utterances_per_speaker; ++c)
      out.push_back(synth_utterance(spec, voices[s], s, c));
  return out;
}

// ---------------------------------------------------------------------------
// WAV ingestion: 16-bit PCM, mono, little-endian, 16 kHz only.
// ---------------------------------------------------------------------------

namespace detail {
inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] |
                                    (static_cast<std::uint16_t>(p[1]) << 8));
}
}  // namespace detail

inline WaveSample read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IoError("read_wav: " + path + " is not a RIFF/WAVE file");

  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t sz = detail::read_u32le(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + sz > bytes.size())
      throw IoError("read_wav: truncated chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (sz < 16) throw IoError("read_wav: malformed fmt chunk in " + path);
      format = detail::read_u16le(bytes.data() + body);
      channels = detail::read_u16le(bytes.data() + body + 2);
      rate = detail::read_u32le(bytes.data() + body + 4);
      bits = detail::read_u16le(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw IoError("read_wav: data before fmt in " + path);
      if (format != 1)
        throw IoError("read_wav: " + path + ": only PCM (format 1) accepted");
      if (channels != 1)
        throw IoError("read_wav: " + path + ": only mono accepted, got " +
                      std::to_string(channels) + " channels");
      if (bits != 16)
        throw IoError("read_wav: " + path + ": only 16-bit accepted, got " +
                      std::to_string(bits));
      if (rate != 16000)
        throw IoError("read_wav: " + path + ": only 16 kHz accepted, got " +
                      std::to_string(rate) + " Hz");
      WaveSample w;
      w.sample_rate = 16000.0;
      const std::size_t n = sz / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto u = detail::read_u16le(bytes.data() + body + 2 * i);
        w.samples[i] = static_cast<std::int16_t>(u) / 32768.0;
      }
      return w;
    }
    pos = body + sz + (sz & 1);  // chunks are word-aligned
  }
  throw IoError("read_wav: no data chunk in " + path);
}

}  // namespace sidlab

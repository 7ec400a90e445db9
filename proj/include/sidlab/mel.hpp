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
// Log-mel feature extraction (Hann STFT over a precomputed DFT basis, HTK
// mel triangles, dB relative to utterance max with a -80 dB floor) and the
// MELSPEC1 on-disk format plus TSV corpus manifests.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sidlab/audio.hpp"
#include "sidlab/matrix.hpp"
#include "sidlab/util.hpp"

namespace sidlab {

constexpr double kMelFloorDb = -80.0;

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Triangle centers in Hz: n_mels points spaced uniformly in mel between
// fmin and fmax, endpoints excluded.
inline std::vector<double> mel_centers_hz(std::size_t n_mels, double fmin,
                                          double fmax) {
  if (n_mels < 1) throw std::invalid_argument("mel_centers_hz: n_mels < 1");
  if (!(fmin >= 0.0 && fmin < fmax))
    throw std::invalid_argument("mel_centers_hz: need 0 <= fmin < fmax");
  const double m_lo = hz_to_mel(fmin);
  const double m_hi = hz_to_mel(fmax);
  const double step = (m_hi - m_lo) / static_cast<double>(n_mels + 1);
  std::vector<double> centers(n_mels);
  for (std::size_t i = 0; i < n_mels; ++i)
    centers[i] = mel_to_hz(m_lo + static_cast<double>(i + 1) * step);
  return centers;
}

// Rows are triangles, linear in mel, over the n_fft/2 + 1 FFT bins.
inline Matrix mel_filterbank(std::size_t n_fft, std::size_t n_mels,
                             double sample_rate, double fmin, double fmax) {
  if (n_fft < 2) throw std::invalid_argument("mel_filterbank: n_fft < 2");
  if (n_mels < 1) throw std::invalid_argument("mel_filterbank: n_mels < 1");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0))
    throw std::invalid_argument(
        "mel_filterbank: need 0 <= fmin < fmax <= sample_rate / 2");
  const std::size_t bins = n_fft / 2 + 1;
  const double m_lo = hz_to_mel(fmin);
  const double m_hi = hz_to_mel(fmax);
  const double step = (m_hi - m_lo) / static_cast<double>(n_mels + 1);
  Matrix fb = Matrix::zeros(n_mels, bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double f_k = static_cast<double>(k) * sample_rate /
                       static_cast<double>(n_fft);
    const double m_k = hz_to_mel(f_k);
    for (std::size_t i = 0; i < n_mels; ++i) {
      const double center = m_lo + static_cast<double>(i + 1) * step;
      const double w = 1.0 - std::abs(m_k - center) / step;
      if (w > 0.0) fb(i, k) = w;
    }
  }
  return fb;
}

struct MelSpectrogram {
  Matrix values;  // frames x n_mels, dB in [-80, 0]
  std::size_t frames() const { return values.rows; }
  std::size_t n_mels() const { return values.cols; }
};

// Reusable extraction pipeline; the DFT basis and filterbank are built once.
class MelExtractor {
 public:
  MelExtractor(double sample_rate = 16000.0, std::size_t n_fft = 400,
               std::size_t hop = 160, std::size_t n_mels = 80,
               double fmin = 0.0, double fmax = 0.0)
      : sample_rate_(sample_rate),
        n_fft_(n_fft),
        hop_(hop),
        n_mels_(n_mels),
        fmin_(fmin),
        fmax_(fmax > 0.0 ? fmax : sample_rate / 2.0) {
    if (hop_ < 1) throw std::invalid_argument("MelExtractor: hop < 1");
    fb_ = mel_filterbank(n_fft_, n_mels_, sample_rate_, fmin_, fmax_);
    window_.resize(n_fft_);
    for (std::size_t i = 0; i < n_fft_; ++i)
      window_[i] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 *
                                        static_cast<double>(i) /
                                        static_cast<double>(n_fft_));
    const std::size_t bins = n_fft_ / 2 + 1;
    cos_.assign(bins * n_fft_, 0.0);
    sin_.assign(bins * n_fft_, 0.0);
    for (std::size_t k = 0; k < bins; ++k)
      for (std::size_t i = 0; i < n_fft_; ++i) {
        const double a = 2.0 * 3.14159265358979323846 *
                         static_cast<double>(k) * static_cast<double>(i) /
                         static_cast<double>(n_fft_);
        cos_[k * n_fft_ + i] = std::cos(a);
        sin_[k * n_fft_ + i] = std::sin(a);
      }
  }

  const Matrix& filterbank() const { return fb_; }
  std::vector<double> centers_hz() const {
    return mel_centers_hz(n_mels_, fmin_, fmax_);
  }
  std::size_t n_mels() const { return n_mels_; }

  MelSpectrogram extract(const WaveSample& w) const {
    if (w.samples.size() < n_fft_)
      throw std::invalid_argument(
          "MelExtractor::extract: waveform shorter than one frame");
    const std::size_t frames = 1 + (w.samples.size() - n_fft_) / hop_;
    const std::size_t bins = n_fft_ / 2 + 1;
    MelSpectrogram m;
    m.values = Matrix::zeros(frames, n_mels_);

    std::vector<double> windowed(n_fft_);
    std::vector<double> power(bins);
    Matrix energy = Matrix::zeros(frames, n_mels_);
    double e_max = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
      const double* x = w.samples.data() + f * hop_;
      for (std::size_t i = 0; i < n_fft_; ++i) windowed[i] = x[i] * window_[i];
      for (std::size_t k = 0; k < bins; ++k) {
        double re = 0.0, im = 0.0;
        const double* c = cos_.data() + k * n_fft_;
        const double* s = sin_.data() + k * n_fft_;
        for (std::size_t i = 0; i < n_fft_; ++i) {
          re += windowed[i] * c[i];
          im -= windowed[i] * s[i];
        }
        power[k] = re * re + im * im;
      }
      for (std::size_t j = 0; j < n_mels_; ++j) {
        double e = 0.0;
        for (std::size_t k = 0; k < bins; ++k) e += fb_(j, k) * power[k];
        energy(f, j) = e;
        if (e > e_max) e_max = e;
      }
    }
    const double ref_db = 10.0 * std::log10(std::max(e_max, 1.0));
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t j = 0; j < n_mels_; ++j) {
        const double db =
            10.0 * std::log10(std::max(energy(f, j), 1e-10)) - ref_db;
        m.values(f, j) = std::max(db, kMelFloorDb);
      }
    return m;
  }

 private:
  double sample_rate_;
  std::size_t n_fft_, hop_, n_mels_;
  double fmin_, fmax_;
  Matrix fb_;
  std::vector<double> window_, cos_, sin_;
};

inline MelSpectrogram mel_spectrogram(const WaveSample& w,
                                      std::size_t n_fft = 400,
                                      std::size_t hop = 160,
                                      std::size_t n_mels = 80) {
  return MelExtractor(w.sample_rate, n_fft, hop, n_mels).extract(w);
}

// Additive i.i.d. Gaussian noise in the dB domain; pure addition, no clamp.
inline MelSpectrogram add_gaussian_noise(const MelSpectrogram& m, double sigma,
                                         std::uint64_t seed) {
  if (sigma < 0.0)
    throw std::invalid_argument("add_gaussian_noise: sigma < 0");
  MelSpectrogram out = m;
  Rng rng(seed);
  for (double& v : out.values.data) v += rng.normal(0.0, sigma);
  return out;
}

// ---------------------------------------------------------------------------
// MELSPEC1: magic, u32 frames, u32 n_mels, u64 seed, then f32 LE row-major.
// ---------------------------------------------------------------------------

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

inline void put_u32(std::string& buf, std::uint32_t v) {
  buf.append(reinterpret_cast<const char*>(&v), 4);
}
inline void put_u64(std::string& buf, std::uint64_t v) {
  buf.append(reinterpret_cast<const char*>(&v), 8);
}
inline void put_f32(std::string& buf, float v) {
  buf.append(reinterpret_cast<const char*>(&v), 4);
}
inline void put_f64(std::string& buf, double v) {
  buf.append(reinterpret_cast<const char*>(&v), 8);
}

class ByteReader {
 public:
  ByteReader(std::string bytes, std::string origin)
      : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  void expect_magic(const char* magic) {
    const std::size_t n = std::strlen(magic);
    if (bytes_.size() < pos_ + n ||
        std::memcmp(bytes_.data() + pos_, magic, n) != 0)
      throw IoError(origin_ + ": bad magic, expected " + magic);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    take(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    take(&v, 8);
    return v;
  }
  float f32() {
    float v;
    take(&v, 4);
    return v;
  }
  double f64() {
    double v;
    take(&v, 8);
    return v;
  }
  void expect_end() const {
    if (pos_ != bytes_.size())
      throw IoError(origin_ + ": trailing bytes after payload");
  }

 private:
  void take(void* out, std::size_t n) {
    if (bytes_.size() < pos_ + n) throw IoError(origin_ + ": truncated file");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

// Write via a temp file and rename, so a crash never leaves a torn file.
inline void spew(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path);
}

}  // namespace detail

inline std::string melspec_bytes(const MelSpectrogram& m,
                                 std::uint64_t seed) {
  std::string buf;
  buf.reserve(24 + 4 * m.values.data.size());
  buf.append("MELSPEC1");
  detail::put_u32(buf, static_cast<std::uint32_t>(m.frames()));
  detail::put_u32(buf, static_cast<std::uint32_t>(m.n_mels()));
  detail::put_u64(buf, seed);
  for (double v : m.values.data)
    detail::put_f32(buf, static_cast<float>(v));
  return buf;
}

inline void write_melspec(const std::string& path, const MelSpectrogram& m,
                          std::uint64_t seed) {
  detail::spew(path, melspec_bytes(m, seed));
}

struct MelRecord {
  MelSpectrogram mel;
  std::uint64_t seed = 0;
};

inline MelRecord parse_melspec(std::string bytes, const std::string& origin) {
  detail::ByteReader r(std::move(bytes), origin);
  r.expect_magic("MELSPEC1");
  const std::uint32_t frames = r.u32();
  const std::uint32_t n_mels = r.u32();
  if (frames == 0 || n_mels == 0)
    throw IoError(origin + ": zero-sized mel spectrogram");
  MelRecord rec;
  rec.seed = r.u64();
  rec.mel.values = Matrix::zeros(frames, n_mels);
  for (double& v : rec.mel.values.data) v = static_cast<double>(r.f32());
  r.expect_end();
  return rec;
}

inline MelRecord read_melspec(const std::string& path) {
  return parse_melspec(detail::slurp(path), path);
}

// ---------------------------------------------------------------------------
// Corpus on disk: one MELSPEC1 file per utterance plus a TSV manifest with
// lines "relative_path<TAB>speaker<TAB>content_id".
// ---------------------------------------------------------------------------

struct LabeledMel {
  MelSpectrogram mel;
  std::size_t speaker = 0;
  std::size_t content_id = 0;
};

using Dataset = std::vector<LabeledMel>;

inline std::size_t count_speakers(const Dataset& ds) {
  std::size_t n = 0;
  for (const auto& e : ds) n = std::max(n, e.speaker + 1);
  return n;
}

inline void save_corpus(const std::string& dir, const Dataset& ds,
                        std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("save_corpus: cannot create " + dir);
  std::string manifest;
  for (const auto& e : ds) {
    const std::string name = "spk" + std::to_string(e.speaker) + "_utt" +
                             std::to_string(e.content_id) + ".mel";
    write_melspec(dir + "/" + name, e.mel,
                  derive_seed(seed, e.speaker, e.content_id));
    manifest += name + "\t" + std::to_string(e.speaker) + "\t" +
                std::to_string(e.content_id) + "\n";
  }
  detail::spew(dir + "/manifest.tsv", manifest);
}

inline Dataset load_corpus(const std::string& dir) {
  const std::string mpath = dir + "/manifest.tsv";
  std::ifstream in(mpath);
  if (!in) throw IoError("load_corpus: cannot open " + mpath);
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string rel, spk, content;
    if (!std::getline(ss, rel, '\t') || !std::getline(ss, spk, '\t') ||
        !std::getline(ss, content))
      throw IoError(mpath + ":" + std::to_string(lineno) +
                    ": expected 3 tab-separated fields");
    LabeledMel e;
    try {
      e.speaker = std::stoul(spk);
      e.content_id = std::stoul(content);
    } catch (const std::exception&) {
      throw IoError(mpath + ":" + std::to_string(lineno) +
                    ": non-numeric speaker or content id");
    }
    e.mel = read_melspec(dir + "/" + rel).mel;
    ds.push_back(std::move(e));
  }
  if (ds.empty()) throw IoError(mpath + ": empty manifest");
  return ds;
}

}  // namespace sidlab

// src/dsp.cpp

// Copyright 2026  The stylekit Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "stylekit/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>

#include "stylekit/ioutil.hpp"

namespace stylekit {

namespace {

Vecd hann_periodic(int n) {
  Vecd w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));
  }
  return w;
}

// Reflection without edge duplication, bouncing for indices beyond one period.
Index reflect_index(Index j, Index len) {
  if (len == 1) return 0;
  const Index period = 2 * (len - 1);
  j = ((j % period) + period) % period;
  return j < len ? j : period - j;
}

void check_config(const StftConfig& cfg) {
  if (cfg.n_fft < 2 || (cfg.n_fft & (cfg.n_fft - 1)) != 0) {
    throw Error("stft: n_fft must be a power of two >= 2");
  }
  if (cfg.hop <= 0 || cfg.win_length < cfg.hop || cfg.n_fft < cfg.win_length) {
    throw Error("stft: need 0 < hop <= win_length <= n_fft");
  }
}

// Smooth log-magnitude spectrum of one frame via liftered real cepstrum.
// Reuses the caller's FFT plan; returns all n_fft log values.
Vecd smooth_log_spectrum(Eigen::FFT<double>& fft, const Veccd& frame,
                         int n_fft, int lifter_q) {
  const Index n_bins = frame.size();
  Veccd logmag(n_fft);
  for (Index k = 0; k < n_bins; ++k) {
    logmag[k] = std::log(std::max(std::abs(frame[k]), 1e-10));
  }
  for (Index k = n_bins; k < n_fft; ++k) {
    logmag[k] = logmag[n_fft - k];
  }
  Veccd cep;
  fft.inv(cep, logmag);
  for (Index q = lifter_q + 1; q < n_fft - lifter_q; ++q) {
    cep[q] = 0.0;
  }
  Veccd smooth;
  fft.fwd(smooth, cep);
  return smooth.real();
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  check_config(cfg);
  if (w.samples.size() == 0) throw Error("stft: empty waveform");

  const Index len = w.samples.size();
  const Index pad = cfg.win_length / 2;
  const Index n_frames = 1 + len / cfg.hop;
  const Index n_bins = cfg.n_fft / 2 + 1;
  const Vecd window = hann_periodic(cfg.win_length);
  // Window sits centered when win_length < n_fft.
  const Index off = (cfg.n_fft - cfg.win_length) / 2;

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);

  ComplexSpectrogram out;
  out.config = cfg;
  out.sample_rate = w.sample_rate;
  out.frames.resize(n_frames, n_bins);

  Vecd buf = Vecd::Zero(cfg.n_fft);
  Veccd spec(n_bins);
  for (Index t = 0; t < n_frames; ++t) {
    const Index start = t * cfg.hop - pad;
    for (Index i = 0; i < cfg.win_length; ++i) {
      buf[off + i] = w.samples[reflect_index(start + i, len)] * window[i];
    }
    fft.fwd(spec, buf);
    out.frames.row(t) = spec.transpose();
  }
  return out;
}

Waveform istft(const ComplexSpectrogram& s, int target_len) {
  const StftConfig& cfg = s.config;
  check_config(cfg);
  if (s.n_frames() == 0) throw Error("istft: zero frames");
  if (s.n_bins() != cfg.n_fft / 2 + 1) {
    throw Error("istft: bin count does not match config");
  }

  const Index n_frames = s.n_frames();
  const Index pad = cfg.win_length / 2;
  const Index off = (cfg.n_fft - cfg.win_length) / 2;
  const Vecd window = hann_periodic(cfg.win_length);
  const Index ola_len = (n_frames - 1) * cfg.hop + cfg.win_length;

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);

  Vecd acc = Vecd::Zero(ola_len);
  Vecd denom = Vecd::Zero(ola_len);
  Vecd frame(cfg.n_fft);
  Veccd spec(s.n_bins());
  for (Index t = 0; t < n_frames; ++t) {
    spec = s.frames.row(t).transpose();
    fft.inv(frame, spec);
    const Index base = t * cfg.hop;
    for (Index i = 0; i < cfg.win_length; ++i) {
      acc[base + i] += frame[off + i] * window[i];
      denom[base + i] += window[i] * window[i];
    }
  }

  const Index out_len =
      target_len < 0 ? (n_frames - 1) * cfg.hop : static_cast<Index>(target_len);
  if (pad + out_len > ola_len) {
    throw Error("istft: target length exceeds covered region");
  }
  Waveform out;
  out.sample_rate = s.sample_rate;
  out.samples.resize(out_len);
  for (Index i = 0; i < out_len; ++i) {
    const double d = denom[pad + i];
    out.samples[i] = d < 1e-8 ? 0.0 : acc[pad + i] / d;
  }
  return out;
}

MelFilterbank mel_filterbank(int n_mels, int n_fft, int sample_rate,
                             double fmin, double fmax) {
  if (n_mels < 1) throw Error("mel_filterbank: n_mels must be >= 1");
  if (n_fft < 2) throw Error("mel_filterbank: n_fft must be >= 2");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw Error("mel_filterbank: need 0 <= fmin < fmax <= sample_rate/2");
  }

  const Index n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  Vecd edges_hz(n_mels + 2);
  for (Index m = 0; m < n_mels + 2; ++m) {
    edges_hz[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (n_mels + 1));
  }

  MelFilterbank fb;
  fb.fmin = fmin;
  fb.fmax = fmax;
  fb.center_hz = edges_hz.segment(1, n_mels);
  fb.weights = Matd::Zero(n_mels, n_bins);
  for (Index m = 0; m < n_mels; ++m) {
    const double lo = edges_hz[m], mid = edges_hz[m + 1], hi = edges_hz[m + 2];
    for (Index k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double v = 0.0;
      if (f > lo && f < hi) {
        v = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      }
      fb.weights(m, k) = v;
    }
    const double peak = fb.weights.row(m).maxCoeff();
    if (peak > 0.0) {
      fb.weights.row(m) /= peak;
    } else {
      // Filter narrower than one bin: fall back to the nearest bin.
      const double bin = fb.center_hz[m] * n_fft / sample_rate;
      const Index k = std::clamp<Index>(static_cast<Index>(std::lround(bin)),
                                        0, n_bins - 1);
      fb.weights(m, k) = 1.0;
    }
  }
  return fb;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const StftConfig& cfg,
                               const MelFilterbank& fb) {
  const ComplexSpectrogram s = stft(w, cfg);
  if (fb.weights.cols() != s.n_bins()) {
    throw Error("mel_spectrogram: filterbank does not match stft config");
  }
  const Matd mag = s.frames.cwiseAbs();
  const Matd mel = (mag * fb.weights.transpose()).cwiseMax(1e-5);
  MelSpectrogram out;
  out.frame_period = static_cast<double>(cfg.hop) / w.sample_rate;
  out.frames = mel.array().log10().cast<float>();
  return out;
}

MelSpectrogram random_slice(const MelSpectrogram& m, double duration_s,
                            Rng& rng) {
  if (duration_s <= 0.0) throw Error("random_slice: duration must be positive");
  if (m.frame_period <= 0.0) throw Error("random_slice: invalid frame period");
  const Index len = static_cast<Index>(duration_s / m.frame_period);
  if (len < 1) throw Error("random_slice: duration shorter than one frame");

  MelSpectrogram out;
  out.frame_period = m.frame_period;
  const Index n = m.n_frames();
  if (n == len) {
    out.frames = m.frames;
  } else if (n > len) {
    const Index start =
        static_cast<Index>(randint(rng, static_cast<std::uint64_t>(n - len + 1)));
    out.frames = m.frames.middleRows(start, len);
  } else {
    out.frames.resize(len, m.n_mels());
    for (Index t = 0; t < len; ++t) {
      out.frames.row(t) = m.frames.row(t % n);
    }
  }
  return out;
}

Vecd spectral_envelope(const Veccd& frame, int n_fft, int lifter_q) {
  if (frame.size() != n_fft / 2 + 1) {
    throw Error("spectral_envelope: frame size must be n_fft/2 + 1");
  }
  Eigen::FFT<double> fft;
  const Vecd smooth = smooth_log_spectrum(fft, frame, n_fft, lifter_q);
  return smooth.head(frame.size()).array().exp();
}

Waveform formant_shift(const Waveform& w, double rho, const StftConfig& cfg) {
  if (!(rho >= 1.0 / kMaxShiftFactor && rho <= kMaxShiftFactor)) {
    throw Error("formant_shift: rho out of range [1/1.4, 1.4]");
  }
  ComplexSpectrogram s = stft(w, cfg);
  const Index n_bins = s.n_bins();
  Eigen::FFT<double> fft;
  Vecd env(n_bins), warped(n_bins);
  for (Index t = 0; t < s.n_frames(); ++t) {
    const Veccd row = s.frames.row(t).transpose();
    env = smooth_log_spectrum(fft, row, cfg.n_fft, 30)
              .head(n_bins)
              .array()
              .exp();
    for (Index k = 0; k < n_bins; ++k) {
      // E'(k) samples the source envelope at k/rho, clamped at the edges.
      const double src = k / rho;
      if (src <= 0.0) {
        warped[k] = env[0];
      } else if (src >= static_cast<double>(n_bins - 1)) {
        warped[k] = env[n_bins - 1];
      } else {
        const Index k0 = static_cast<Index>(src);
        const double frac = src - k0;
        warped[k] = env[k0] * (1.0 - frac) + env[k0 + 1] * frac;
      }
    }
    // new magnitude = E' * R with R = |S|/E, i.e. scale S by E'/E; the
    // residual keeps harmonics and phase untouched.
    for (Index k = 0; k < n_bins; ++k) {
      s.frames(t, k) *= warped[k] / env[k];
    }
  }
  return istft(s, static_cast<int>(w.samples.size()));
}

double sample_shift_factor(Rng& rng) {
  return std::pow(kMaxShiftFactor, uniform(rng, -1.0, 1.0));
}

namespace {
constexpr std::uint16_t kMelFormatVersion = 1;
}  // namespace

void save_mel(const MelSpectrogram& m, const std::string& path) {
  ByteWriter bw;
  bw.raw("STYF", 4);
  bw.u16(kMelFormatVersion);
  bw.u16(static_cast<std::uint16_t>(m.n_mels()));
  bw.u32(static_cast<std::uint32_t>(m.n_frames()));
  bw.f64(m.frame_period);
  for (Index t = 0; t < m.n_frames(); ++t) {
    for (Index j = 0; j < m.n_mels(); ++j) {
      bw.f32(m.frames(t, j));
    }
  }
  atomic_write_file(path, bw.bytes());
}

MelSpectrogram load_mel(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, "feature file " + path);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "STYF") {
    throw Error("not a feature file (bad magic): " + path);
  }
  const std::uint16_t version = r.u16();
  if (version != kMelFormatVersion) {
    throw Error("unsupported feature file version " + std::to_string(version) +
                ": " + path);
  }
  const Index n_mels = r.u16();
  const Index n_frames = r.u32();
  MelSpectrogram m;
  m.frame_period = r.f64();
  m.frames.resize(n_frames, n_mels);
  for (Index t = 0; t < n_frames; ++t) {
    for (Index j = 0; j < n_mels; ++j) {
      m.frames(t, j) = r.f32();
    }
  }
  return m;
}

}  // namespace stylekit

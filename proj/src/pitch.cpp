// src/pitch.cpp

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

#include "stylekit/pitch.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>

#include "json.hpp"
#include "stylekit/ioutil.hpp"

namespace stylekit {

namespace {

constexpr double kYinThreshold = 0.1;
constexpr double kSilenceRms = 1e-4;
constexpr double kF0ClampLo = 10.0;
constexpr double kF0ClampHi = 2000.0;

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

F0Contour estimate_f0(const Waveform& w, const F0Config& cfg) {
  if (w.sample_rate <= 0) throw Error("estimate_f0: invalid sample rate");
  if (!(cfg.fmin > 0.0 && cfg.fmin < cfg.fmax &&
        cfg.fmax <= w.sample_rate / 2.0)) {
    throw Error("estimate_f0: need 0 < fmin < fmax <= sample_rate/2");
  }

  const Index len = w.samples.size();
  const int W = cfg.frame_length;
  const Index tau_min =
      std::max<Index>(2, static_cast<Index>(w.sample_rate / cfg.fmax));
  const Index tau_max = static_cast<Index>(w.sample_rate / cfg.fmin);
  if (tau_max >= W) {
    throw Error("estimate_f0: fmin too low for the frame length");
  }

  const Index n_frames = 1 + len / cfg.hop;
  // Lagged window must fit the segment; n_fft >= seg_len keeps circular
  // correlation free of wraparound for lags up to tau_max.
  const Index seg_len = W + tau_max;
  const int n_fft = next_pow2(static_cast<int>(seg_len));

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);

  F0Contour out;
  out.frame_period = static_cast<double>(cfg.hop) / w.sample_rate;
  out.hz = Vecd::Zero(n_frames);

  Vecd seg = Vecd::Zero(n_fft);
  Vecd head = Vecd::Zero(n_fft);
  Veccd seg_f, head_f;
  Vecd corr(n_fft);
  Vecd d(tau_max + 1), dn(tau_max + 1);
  Vecd energy_prefix(seg_len + 1);

  for (Index t = 0; t < n_frames; ++t) {
    const Index start = t * cfg.hop - W / 2;
    seg.setZero();
    for (Index i = 0; i < seg_len; ++i) {
      const Index j = start + i;
      if (j >= 0 && j < len) seg[i] = w.samples[j];
    }
    head.setZero();
    head.head(W) = seg.head(W);

    // d(tau) = P(0) + P(tau) - 2*A(tau); A via one correlation in the
    // frequency domain, P via prefix sums of squared samples.
    fft.fwd(seg_f, seg);
    fft.fwd(head_f, head);
    head_f = head_f.conjugate().cwiseProduct(seg_f);
    fft.inv(corr, head_f);

    energy_prefix[0] = 0.0;
    for (Index i = 0; i < seg_len; ++i) {
      energy_prefix[i + 1] = energy_prefix[i] + seg[i] * seg[i];
    }
    const double p0 = energy_prefix[W];
    for (Index tau = 0; tau <= tau_max; ++tau) {
      const double p_tau = energy_prefix[tau + W] - energy_prefix[tau];
      d[tau] = std::max(0.0, p0 + p_tau - 2.0 * corr[tau]);
    }

    // Cumulative-mean normalization.
    dn[0] = 1.0;
    double running = 0.0;
    for (Index tau = 1; tau <= tau_max; ++tau) {
      running += d[tau];
      dn[tau] = running > 0.0 ? d[tau] * tau / running : 1.0;
    }

    // First lag under threshold, then walk to the local minimum.
    Index tau = -1;
    for (Index k = tau_min; k <= tau_max; ++k) {
      if (dn[k] < kYinThreshold) {
        tau = k;
        while (tau + 1 <= tau_max && dn[tau + 1] < dn[tau]) ++tau;
        break;
      }
    }
    if (tau < 0) continue;  // unvoiced

    double refined = static_cast<double>(tau);
    if (tau > 0 && tau < tau_max) {
      const double a = dn[tau - 1], b = dn[tau], c = dn[tau + 1];
      const double denom = a - 2.0 * b + c;
      if (std::abs(denom) > 1e-12) {
        refined += std::clamp(0.5 * (a - c) / denom, -1.0, 1.0);
      }
    }
    out.hz[t] = std::clamp(w.sample_rate / refined, cfg.fmin, cfg.fmax);
  }
  return out;
}

EnergyContour frame_energy(const Waveform& w, int frame_length, int hop) {
  if (w.sample_rate <= 0) throw Error("frame_energy: invalid sample rate");
  if (frame_length <= 0 || hop <= 0) {
    throw Error("frame_energy: frame length and hop must be positive");
  }
  const Index len = w.samples.size();
  const Index n_frames = 1 + len / hop;
  EnergyContour out;
  out.frame_period = static_cast<double>(hop) / w.sample_rate;
  out.rms = Vecd::Zero(n_frames);
  for (Index t = 0; t < n_frames; ++t) {
    const Index lo = std::max<Index>(0, t * hop - frame_length / 2);
    const Index hi = std::min<Index>(len, t * hop + (frame_length + 1) / 2);
    if (hi <= lo) continue;
    double acc = 0.0;
    for (Index i = lo; i < hi; ++i) acc += w.samples[i] * w.samples[i];
    out.rms[t] = std::sqrt(acc / static_cast<double>(hi - lo));
  }
  return out;
}

SpeakerStats compute_speaker_stats(const std::vector<F0Contour>& contours,
                                   const std::vector<EnergyContour>& energies,
                                   const std::string& speaker_id) {
  std::vector<double> voiced;
  for (const auto& c : contours) {
    for (Index t = 0; t < c.hz.size(); ++t) {
      if (c.hz[t] > 0.0) voiced.push_back(c.hz[t]);
    }
  }
  if (voiced.empty()) {
    throw Error("compute_speaker_stats: no voiced frames for speaker " +
                speaker_id);
  }
  std::vector<double> loud;
  for (const auto& e : energies) {
    for (Index t = 0; t < e.rms.size(); ++t) {
      if (e.rms[t] > kSilenceRms) loud.push_back(e.rms[t]);
    }
  }

  auto mean_std = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return std::pair<double, double>(mean, std::sqrt(var));
  };

  SpeakerStats s;
  s.speaker_id = speaker_id;
  s.f0_median = median_of(voiced);
  std::tie(s.f0_mean, s.f0_std) = mean_std(voiced);
  if (!loud.empty()) {
    std::tie(s.energy_mean, s.energy_std) = mean_std(loud);
  }
  s.n_voiced_frames = static_cast<std::int64_t>(voiced.size());
  return s;
}

SemitoneShift semitone_shift(const SpeakerStats& source,
                             const SpeakerStats& target) {
  if (source.f0_median <= 0.0 || target.f0_median <= 0.0) {
    throw Error("semitone_shift: medians must be positive");
  }
  const double st = 12.0 * std::log2(target.f0_median / source.f0_median);
  const long s = std::lround(st);  // rounds half away from zero
  if (std::abs(s) > 36) {
    throw Error("semitone_shift: |" + std::to_string(s) +
                "| semitones exceeds the sanity bound of 36");
  }
  return SemitoneShift{static_cast<int>(s)};
}

F0Contour apply_semitone_shift(const F0Contour& f0, SemitoneShift shift,
                               int* clamped_count) {
  const double factor = std::pow(2.0, shift.s / 12.0);
  F0Contour out;
  out.frame_period = f0.frame_period;
  out.hz = Vecd::Zero(f0.hz.size());
  int clamped = 0;
  for (Index t = 0; t < f0.hz.size(); ++t) {
    if (f0.hz[t] <= 0.0) continue;
    double v = f0.hz[t] * factor;
    if (v < kF0ClampLo || v > kF0ClampHi) {
      v = std::clamp(v, kF0ClampLo, kF0ClampHi);
      ++clamped;
    }
    out.hz[t] = v;
  }
  if (clamped_count != nullptr) *clamped_count = clamped;
  return out;
}

namespace {

NormalizedContour normalize_masked(const Vecd& values, const Mask& mask,
                                   double mean, double sd) {
  NormalizedContour out;
  out.mask = mask;
  out.values = Vecd::Zero(values.size());
  if (sd <= 0.0) {
    out.degenerate = true;
    return out;
  }
  for (Index t = 0; t < values.size(); ++t) {
    if (mask[t]) out.values[t] = (values[t] - mean) / sd;
  }
  return out;
}

}  // namespace

NormalizedContour normalize_f0_to_speaker(const F0Contour& f0,
                                          const SpeakerStats& stats) {
  return normalize_masked(f0.hz, f0.hz.array() > 0.0, stats.f0_mean,
                          stats.f0_std);
}

NormalizedContour normalize_energy_to_speaker(const EnergyContour& energy,
                                              const SpeakerStats& stats) {
  return normalize_masked(energy.rms, energy.rms.array() > kSilenceRms,
                          stats.energy_mean, stats.energy_std);
}

void save_speaker_stats(const std::map<std::string, SpeakerStats>& stats,
                        const std::string& path) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [id, s] : stats) {
    doc[id] = {{"f0_median", s.f0_median},
               {"f0_mean", s.f0_mean},
               {"f0_std", s.f0_std},
               {"energy_mean", s.energy_mean},
               {"energy_std", s.energy_std},
               {"n_voiced_frames", s.n_voiced_frames}};
  }
  atomic_write_file(path, doc.dump(2) + "\n");
}

std::map<std::string, SpeakerStats> load_speaker_stats(
    const std::string& path) {
  const auto bytes = read_file_bytes(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid speaker stats JSON " + path + ": " + e.what());
  }
  std::map<std::string, SpeakerStats> out;
  for (const auto& [id, v] : doc.items()) {
    SpeakerStats s;
    s.speaker_id = id;
    s.f0_median = v.at("f0_median").get<double>();
    s.f0_mean = v.at("f0_mean").get<double>();
    s.f0_std = v.at("f0_std").get<double>();
    s.energy_mean = v.at("energy_mean").get<double>();
    s.energy_std = v.at("energy_std").get<double>();
    s.n_voiced_frames = v.at("n_voiced_frames").get<std::int64_t>();
    out[id] = s;
  }
  return out;
}

}  // namespace stylekit

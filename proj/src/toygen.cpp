// src/toygen.cpp

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

#include "stylekit/toygen.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

#include "stylekit/ioutil.hpp"
#include "stylekit/manifest.hpp"

namespace stylekit {

namespace {

// Instantaneous F0 multiplier (in log2 space the contours are symmetric
// around zero, so the median multiplier over the utterance is 1).
double contour_factor(const ToyStyle& style, double t, double duration) {
  const double tau = duration > 0.0 ? t / duration : 0.0;
  const double d = style.depth_semitones;
  switch (style.contour) {
    case ToyStyle::Contour::kFlat:
      return 1.0;
    case ToyStyle::Contour::kRising:
      return std::exp2(d * (tau - 0.5) / 12.0);
    case ToyStyle::Contour::kFalling:
      return std::exp2(d * (0.5 - tau) / 12.0);
    case ToyStyle::Contour::kOscillating:
      return std::exp2(0.5 * d * std::sin(2.0 * kPi * style.osc_rate_hz * t) /
                       12.0);
  }
  return 1.0;
}

double energy_factor(const ToyStyle& style, double t, double duration) {
  const double tau = duration > 0.0 ? t / duration : 0.0;
  switch (style.energy) {
    case ToyStyle::EnergyShape::kFlat:
      return 1.0;
    case ToyStyle::EnergyShape::kCrescendo:
      return 0.35 + 0.65 * tau;
    case ToyStyle::EnergyShape::kDecrescendo:
      return 1.0 - 0.65 * tau;
    case ToyStyle::EnergyShape::kPulsed:
      return 0.65 + 0.35 * std::sin(2.0 * kPi * 2.0 * t);
  }
  return 1.0;
}

// Two-pole resonator y[n] = g x[n] + 2 r cos(theta) y[n-1] - r^2 y[n-2],
// gain-normalized so the response at the center frequency is ~1.
void apply_resonator(Vecd& x, double center_hz, double bandwidth_hz, int sr) {
  const double r = std::exp(-kPi * bandwidth_hz / sr);
  const double theta = 2.0 * kPi * center_hz / sr;
  const double a1 = 2.0 * r * std::cos(theta);
  const double a2 = -r * r;
  const double g =
      (1.0 - r) * std::sqrt(1.0 + r * r - 2.0 * r * std::cos(2.0 * theta));
  double y1 = 0.0, y2 = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double y = g * x[i] + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    x[i] = y;
  }
}

}  // namespace

Waveform synth_utterance(const ToySpeaker& speaker, const ToyStyle& style,
                         double duration, int sample_rate, Rng& rng) {
  if (duration <= 0.0) throw Error("synth_utterance: duration must be > 0");
  if (sample_rate <= 0) throw Error("synth_utterance: bad sample rate");
  if (speaker.base_f0 <= 0.0)
    throw Error("synth_utterance: speaker base_f0 must be > 0");
  const Index n = static_cast<Index>(std::llround(duration * sample_rate));
  if (n <= 0) throw Error("synth_utterance: duration too short");

  // Glottal source: one unit impulse per pitch period, period lengths set by
  // the style contour with per-period jitter.
  Vecd x = Vecd::Zero(n);
  double phase = uniform01(rng);  // random onset inside the first period
  double jitter_mult = 1.0 + style.jitter * (2.0 * uniform01(rng) - 1.0);
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double f0 =
        speaker.base_f0 * contour_factor(style, t, duration) * jitter_mult;
    phase += f0 / sample_rate;
    if (phase >= 1.0) {
      phase -= 1.0;
      x[i] = 1.0;
      jitter_mult = 1.0 + style.jitter * (2.0 * uniform01(rng) - 1.0);
    }
  }

  // Vocal tract: cascaded formant resonators.
  apply_resonator(x, speaker.f1, speaker.bw1, sample_rate);
  apply_resonator(x, speaker.f2, speaker.bw2, sample_rate);
  apply_resonator(x, speaker.f3, speaker.bw3, sample_rate);

  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    x[i] *= energy_factor(style, t, duration);
  }

  // A -40 dB uniform noise floor keeps log-mel features away from the clamp.
  const double peak = x.cwiseAbs().maxCoeff();
  if (peak <= 0.0) throw Error("synth_utterance: silent render");
  const double noise_amp = 0.01 * peak;
  for (Index i = 0; i < n; ++i) {
    x[i] += noise_amp * (2.0 * uniform01(rng) - 1.0);
  }
  x *= 0.8 / x.cwiseAbs().maxCoeff();

  Waveform w;
  w.samples = std::move(x);
  w.sample_rate = sample_rate;
  return w;
}

ToySpeaker interpolate_speaker(const ToySpeaker& source,
                               const ToySpeaker& target, double quality) {
  if (quality < 0.0 || quality > 1.0)
    throw Error("interpolate_speaker: quality must be in [0, 1]");
  ToySpeaker s = source;
  s.speaker_id = target.speaker_id;
  s.f1 += quality * (target.f1 - source.f1);
  s.f2 += quality * (target.f2 - source.f2);
  s.f3 += quality * (target.f3 - source.f3);
  s.bw1 += quality * (target.bw1 - source.bw1);
  s.bw2 += quality * (target.bw2 - source.bw2);
  s.bw3 += quality * (target.bw3 - source.bw3);
  s.base_f0 = std::pow(source.base_f0, 1.0 - quality) *
              std::pow(target.base_f0, quality);
  return s;
}

ToySpec default_toy_spec() {
  ToySpec spec;
  spec.speakers = {
      {"spk1", 730.0, 1090.0, 2440.0, 132.0},
      {"spk2", 270.0, 2290.0, 3010.0, 220.0},
      {"spk3", 440.0, 1020.0, 2240.0, 175.0},
  };
  ToyStyle neutral;
  neutral.label = "neutral";
  neutral.contour = ToyStyle::Contour::kFlat;
  neutral.energy = ToyStyle::EnergyShape::kFlat;
  neutral.jitter = 0.005;
  ToyStyle lively;
  lively.label = "lively";
  lively.contour = ToyStyle::Contour::kOscillating;
  lively.depth_semitones = 4.0;
  lively.osc_rate_hz = 3.0;
  lively.energy = ToyStyle::EnergyShape::kPulsed;
  lively.jitter = 0.01;
  ToyStyle welcoming;
  welcoming.label = "welcoming";
  welcoming.contour = ToyStyle::Contour::kRising;
  welcoming.depth_semitones = 6.0;
  welcoming.energy = ToyStyle::EnergyShape::kCrescendo;
  welcoming.jitter = 0.005;
  ToyStyle harsh;
  harsh.label = "harsh";
  harsh.contour = ToyStyle::Contour::kFalling;
  harsh.depth_semitones = 6.0;
  harsh.energy = ToyStyle::EnergyShape::kDecrescendo;
  harsh.jitter = 0.03;
  spec.styles = {neutral, lively, welcoming, harsh};

  spec.pairs = {{"spk1", "neutral"},   {"spk1", "lively"}, {"spk1", "welcoming"},
                {"spk1", "harsh"},     {"spk2", "neutral"}, {"spk3", "neutral"}};
  for (const std::string& target : {"spk2", "spk3"}) {
    for (const std::string& style : {"lively", "welcoming", "harsh"}) {
      spec.conversions.push_back({"spk1", target, style, 1.0});
    }
  }
  return spec;
}

std::string generate_dataset(const ToySpec& spec, const std::string& out_dir) {
  if (spec.utterances_per_pair <= 0)
    throw Error("generate_dataset: utterances_per_pair must be > 0");
  std::map<std::string, ToySpeaker> speakers;
  for (const auto& s : spec.speakers) {
    if (!speakers.emplace(s.speaker_id, s).second)
      throw Error("generate_dataset: duplicate speaker " + s.speaker_id);
  }
  std::map<std::string, ToyStyle> styles;
  for (const auto& s : spec.styles) {
    if (!styles.emplace(s.label, s).second)
      throw Error("generate_dataset: duplicate style " + s.label);
  }
  const auto speaker_of = [&](const std::string& id) -> const ToySpeaker& {
    auto it = speakers.find(id);
    if (it == speakers.end())
      throw Error("generate_dataset: unknown speaker " + id);
    return it->second;
  };
  const auto style_of = [&](const std::string& label) -> const ToyStyle& {
    auto it = styles.find(label);
    if (it == styles.end())
      throw Error("generate_dataset: unknown style " + label);
    return it->second;
  };

  if (spec.duration <= 1.6) {
    std::cerr << "warning: utterance duration " << spec.duration
              << " s leaves no room for random training slices\n";
  }

  const std::filesystem::path root(out_dir);
  std::filesystem::create_directories(root / "audio");

  std::vector<ManifestEntry> entries;
  char idx_buf[16];
  for (const auto& [speaker_id, style_label] : spec.pairs) {
    const ToySpeaker& speaker = speaker_of(speaker_id);
    const ToyStyle& style = style_of(style_label);
    for (int idx = 0; idx < spec.utterances_per_pair; ++idx) {
      Rng rng(spec.seed ^ fnv1a64(speaker_id + "|" + style_label + "|" +
                                  std::to_string(idx)));
      const Waveform w =
          synth_utterance(speaker, style, spec.duration, spec.sample_rate, rng);
      std::snprintf(idx_buf, sizeof(idx_buf), "%03d", idx);
      const std::string name =
          speaker_id + "_" + style_label + "_" + idx_buf + ".wav";
      write_wav(w, (root / "audio" / name).string());
      entries.push_back({"audio/" + name, speaker_id, style_label, false});
    }
  }
  for (const auto& conv : spec.conversions) {
    const ToySpeaker voice = interpolate_speaker(
        speaker_of(conv.source_speaker), speaker_of(conv.target_speaker),
        conv.quality);
    const ToyStyle& style = style_of(conv.style);
    for (int idx = 0; idx < spec.utterances_per_pair; ++idx) {
      Rng rng(spec.seed ^
              fnv1a64("synth|" + conv.source_speaker + "|" +
                      conv.target_speaker + "|" + conv.style + "|" +
                      std::to_string(idx)));
      const Waveform w =
          synth_utterance(voice, style, spec.duration, spec.sample_rate, rng);
      std::snprintf(idx_buf, sizeof(idx_buf), "%03d", idx);
      const std::string name = conv.target_speaker + "_" + conv.style + "_" +
                               idx_buf + "_synth.wav";
      write_wav(w, (root / "audio" / name).string());
      entries.push_back(
          {"audio/" + name, conv.target_speaker, conv.style, true});
    }
  }

  const std::string manifest_path = (root / "manifest.jsonl").string();
  save_manifest(entries, manifest_path);
  return manifest_path;
}

}  // namespace stylekit

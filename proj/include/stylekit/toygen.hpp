// include/stylekit/toygen.hpp

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

#ifndef STYLEKIT_TOYGEN_HPP
#define STYLEKIT_TOYGEN_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stylekit/audio_io.hpp"
#include "stylekit/common.hpp"

namespace stylekit {

// Source-filter voice: an impulse train through three cascaded two-pole
// resonators. Formant center frequencies define the timbre.
struct ToySpeaker {
  std::string speaker_id;
  double f1 = 0.0, f2 = 0.0, f3 = 0.0;  // formant centers, Hz
  double base_f0 = 0.0;                 // Hz
  double bw1 = 80.0, bw2 = 120.0, bw3 = 160.0;  // formant bandwidths, Hz
};

// A speaking style is a pitch-contour shape plus an energy envelope plus a
// per-period pitch jitter amount. Contours are median-neutral in log-pitch
// so the speaker's pitch statistics stay anchored at base_f0.
struct ToyStyle {
  enum class Contour { kFlat, kRising, kFalling, kOscillating };
  enum class EnergyShape { kFlat, kCrescendo, kDecrescendo, kPulsed };

  std::string label;
  Contour contour = Contour::kFlat;
  double depth_semitones = 0.0;  // peak-to-peak contour span
  double osc_rate_hz = 0.0;      // kOscillating only
  EnergyShape energy = EnergyShape::kFlat;
  double jitter = 0.0;  // relative per-period F0 perturbation
};

// A simulated cross-speaker conversion: the style's prosody rendered with a
// voice interpolated between source and target timbre. quality = 1 is a
// perfect conversion (pure target voice), quality = 0 reproduces the source.
struct ToyConversion {
  std::string source_speaker;
  std::string target_speaker;
  std::string style;
  double quality = 1.0;
};

struct ToySpec {
  std::vector<ToySpeaker> speakers;
  std::vector<ToyStyle> styles;
  // Ground-truth recordings: (speaker_id, style label) pairs.
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<ToyConversion> conversions;
  int utterances_per_pair = 50;
  double duration = 2.0;  // seconds
  int sample_rate = 22050;
  std::uint64_t seed = 0;
};

// 3 speakers, 4 styles. Speaker 1 records every style; speakers 2 and 3
// record only "neutral" and receive simulated conversions of the three
// expressive styles from speaker 1.
ToySpec default_toy_spec();

// Renders one utterance. Consumes rng draws for the initial phase, the
// per-period jitter and the noise floor, so distinct seeds give distinct
// takes of the same (speaker, style).
Waveform synth_utterance(const ToySpeaker& speaker, const ToyStyle& style,
                         double duration, int sample_rate, Rng& rng);

// Voice between source and target: formants interpolate linearly, base F0
// geometrically.
ToySpeaker interpolate_speaker(const ToySpeaker& source,
                               const ToySpeaker& target, double quality);

// Writes every wav under <out_dir>/audio plus <out_dir>/manifest.jsonl and
// returns the manifest path. Deterministic for a given spec: each utterance
// gets its own seed derived from spec.seed and its identity.
std::string generate_dataset(const ToySpec& spec, const std::string& out_dir);

}  // namespace stylekit

#endif  // STYLEKIT_TOYGEN_HPP

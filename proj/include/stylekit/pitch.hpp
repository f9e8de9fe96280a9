// include/stylekit/pitch.hpp

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

#ifndef STYLEKIT_PITCH_HPP
#define STYLEKIT_PITCH_HPP

#include <map>
#include <string>
#include <vector>

#include "stylekit/audio_io.hpp"
#include "stylekit/common.hpp"

namespace stylekit {

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Per-frame pitch in Hz; 0 marks an unvoiced frame. Voiced values stay
// within the detector's [fmin, fmax].
struct F0Contour {
  Vecd hz;
  double frame_period = 0.0;

  Index n_frames() const { return hz.size(); }
};

// Per-frame RMS energy, nonnegative.
struct EnergyContour {
  Vecd rms;
  double frame_period = 0.0;

  Index n_frames() const { return rms.size(); }
};

struct F0Config {
  double fmin = 50.0;
  double fmax = 600.0;
  int frame_length = 1024;
  int hop = 256;
};

// Population statistics over one speaker's corpus: F0 over voiced frames,
// energy over non-silent frames (RMS > 1e-4).
struct SpeakerStats {
  std::string speaker_id;
  double f0_median = 0.0;
  double f0_mean = 0.0;
  double f0_std = 0.0;
  double energy_mean = 0.0;
  double energy_std = 0.0;
  std::int64_t n_voiced_frames = 0;
};

struct SemitoneShift {
  int s = 0;
};

struct NormalizedContour {
  Vecd values;  // z-scores; masked-out frames are 0
  Mask mask;    // true where the frame participated
  bool degenerate = false;  // std was <= 0, output forced to zero
};

// YIN pitch detector: cumulative-mean-normalized difference function with
// absolute threshold 0.1 and parabolic lag interpolation. Frames are
// centered at t*hop (edges zero-padded); the frame count matches the mel
// frontend, 1 + floor(len/hop).
F0Contour estimate_f0(const Waveform& w, const F0Config& cfg = F0Config{});

// RMS over the samples of the analysis window that fall inside the signal,
// so a constant signal of amplitude a gives exactly a in every frame.
EnergyContour frame_energy(const Waveform& w, int frame_length = 1024,
                           int hop = 256);

// Aggregates one speaker's contours. Throws if no frame is voiced.
SpeakerStats compute_speaker_stats(const std::vector<F0Contour>& contours,
                                   const std::vector<EnergyContour>& energies,
                                   const std::string& speaker_id);

// Whole-semitone transposition matching medians:
// s = round(12 * log2(target_median / source_median)), half away from zero.
SemitoneShift semitone_shift(const SpeakerStats& source,
                             const SpeakerStats& target);

// Scales voiced frames by 2^(s/12). Results outside [10, 2000] Hz are
// clamped; *clamped_count (if given) receives how many frames clamped.
F0Contour apply_semitone_shift(const F0Contour& f0, SemitoneShift shift,
                               int* clamped_count = nullptr);

// (x - mean)/std on voiced frames; unvoiced map to 0 with mask false.
NormalizedContour normalize_f0_to_speaker(const F0Contour& f0,
                                          const SpeakerStats& stats);

// Same for energy over non-silent frames (RMS > 1e-4).
NormalizedContour normalize_energy_to_speaker(const EnergyContour& energy,
                                              const SpeakerStats& stats);

// JSON document keyed by speaker_id.
void save_speaker_stats(const std::map<std::string, SpeakerStats>& stats,
                        const std::string& path);
std::map<std::string, SpeakerStats> load_speaker_stats(const std::string& path);

}  // namespace stylekit

#endif  // STYLEKIT_PITCH_HPP

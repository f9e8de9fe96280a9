// include/stylekit/audio_io.hpp

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

#ifndef STYLEKIT_AUDIO_IO_HPP
#define STYLEKIT_AUDIO_IO_HPP

#include <string>

#include "stylekit/common.hpp"

namespace stylekit {

// Mono audio. Samples are nominally in [-1, 1]; sample_rate in Hz.
struct Waveform {
  Vecd samples;
  int sample_rate = 0;

  Index size() const { return samples.size(); }
  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
};

// Reads a RIFF/WAVE file with 16-bit, 24-bit integer or 32-bit float PCM.
// Multi-channel input is averaged to mono; integer samples are scaled by
// 2^(bits-1). Errors: "cannot open" (missing file), "malformed wav"
// (bad RIFF structure), "unsupported wav" (codec/bit depth).
Waveform read_wav(const std::string& path);

// Writes 16-bit PCM mono. Samples are clamped to [-1, 1] and rounded, so a
// read_wav round trip is exact to one quantization step (1/32768).
// Non-finite samples are rejected before anything is written.
void write_wav(const Waveform& w, const std::string& path);

// Kaiser-windowed sinc resampler (64 taps at unity ratio, beta = 8). The
// anti-alias cutoff scales with the ratio when downsampling. Output length
// is round(n * target_rate / source_rate).
Waveform resample(const Waveform& w, int target_rate);

}  // namespace stylekit

#endif  // STYLEKIT_AUDIO_IO_HPP

// include/stylekit/dsp.hpp

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

#ifndef STYLEKIT_DSP_HPP
#define STYLEKIT_DSP_HPP

#include <string>

#include "stylekit/audio_io.hpp"
#include "stylekit/common.hpp"

namespace stylekit {

// Hann analysis window. hop = win_length/4 gives constant overlap-add, which
// the istft round trip relies on.
struct StftConfig {
  int n_fft = 1024;
  int hop = 256;
  int win_length = 1024;
};

// Rows are frames, columns the n_fft/2 + 1 non-redundant bins.
struct ComplexSpectrogram {
  Matcd frames;
  StftConfig config;
  int sample_rate = 0;

  Index n_frames() const { return frames.rows(); }
  Index n_bins() const { return frames.cols(); }
};

// Triangular filters with peaks normalized to 1, centers uniform on the
// mel scale mel(f) = 2595 * log10(1 + f/700).
struct MelFilterbank {
  Matd weights;  // n_mels x (n_fft/2 + 1)
  Vecd center_hz;
  double fmin = 0.0;
  double fmax = 0.0;

  Index n_mels() const { return weights.rows(); }
};

// Rows are frames, columns log10 mel amplitudes floored at 1e-5.
struct MelSpectrogram {
  Matf frames;
  double frame_period = 0.0;  // seconds per frame

  Index n_frames() const { return frames.rows(); }
  Index n_mels() const { return frames.cols(); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Reflect-pads win_length/2 samples at both ends; frame t covers padded
// samples [t*hop, t*hop + win_length). Frame count is 1 + floor(len/hop).
ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg);

// Weighted overlap-add with window-square normalization. target_len < 0
// returns (n_frames - 1) * hop samples; otherwise exactly target_len, which
// must not exceed the covered region.
Waveform istft(const ComplexSpectrogram& s, int target_len = -1);

MelFilterbank mel_filterbank(int n_mels, int n_fft, int sample_rate,
                             double fmin, double fmax);

MelSpectrogram mel_spectrogram(const Waveform& w, const StftConfig& cfg,
                               const MelFilterbank& fb);

// Contiguous random slice of floor(duration_s / frame_period) frames. Inputs
// shorter than the slice are loop-padded; inputs of exactly the slice length
// pass through without consuming rng state.
MelSpectrogram random_slice(const MelSpectrogram& m, double duration_s,
                            Rng& rng);

// Cepstrally smoothed magnitude envelope of one spectrum row: real cepstrum
// of log magnitude, liftered to quefrency order lifter_q, exponentiated.
// Strictly positive everywhere.
Vecd spectral_envelope(const Veccd& frame, int n_fft, int lifter_q = 30);

// Warps the spectral envelope of every frame by rho while keeping the
// harmonic residual and phase, so formants move and F0 stays put. Output
// length equals input length.
Waveform formant_shift(const Waveform& w, double rho, const StftConfig& cfg);

constexpr double kMaxShiftFactor = 1.4;

// Log-uniform in [1/1.4, 1.4]: rho = 1.4^u, u ~ U[-1, 1].
double sample_shift_factor(Rng& rng);

// Feature cache format, magic "STYF": version u16, n_mels u16, n_frames u32,
// frame_period f64, then row-major f32 values. Little-endian.
void save_mel(const MelSpectrogram& m, const std::string& path);
MelSpectrogram load_mel(const std::string& path);

}  // namespace stylekit

#endif  // STYLEKIT_DSP_HPP

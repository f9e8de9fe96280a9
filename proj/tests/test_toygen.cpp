// tests/test_toygen.cpp

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "stylekit/audio_io.hpp"
#include "stylekit/common.hpp"
#include "stylekit/manifest.hpp"
#include "stylekit/pitch.hpp"
#include "stylekit/toygen.hpp"

using namespace stylekit;

namespace {

std::string tmp_dir(const std::string& name) {
  const auto dir =
      std::filesystem::temp_directory_path() / "stylekit_test_toygen" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

ToySpeaker test_speaker() {
  ToySpeaker s;
  s.speaker_id = "spk";
  s.f1 = 730.0;
  s.f2 = 1090.0;
  s.f3 = 2440.0;
  s.base_f0 = 132.0;
  return s;
}

ToyStyle flat_style() {
  ToyStyle st;
  st.label = "neutral";
  return st;
}

// Median F0 of the voiced frames of a waveform, via the pitch tracker.
double measured_median_f0(const Waveform& w) {
  const F0Contour track = estimate_f0(w);
  std::vector<double> voiced;
  for (Index i = 0; i < track.hz.size(); ++i)
    if (track.hz[i] > 0.0) voiced.push_back(track.hz[i]);
  REQUIRE(!voiced.empty());
  std::sort(voiced.begin(), voiced.end());
  return voiced[voiced.size() / 2];
}

double segment_rms(const Waveform& w, double from_frac, double to_frac) {
  const Index n = w.samples.size();
  const Index a = static_cast<Index>(from_frac * static_cast<double>(n));
  const Index b = static_cast<Index>(to_frac * static_cast<double>(n));
  return std::sqrt(w.samples.segment(a, b - a).squaredNorm() /
                   static_cast<double>(b - a));
}

}  // namespace

TEST_CASE("the default corpus is three speakers, four styles, 600 takes") {
  const ToySpec spec = default_toy_spec();
  CHECK(spec.speakers.size() == 3);
  CHECK(spec.styles.size() == 4);
  CHECK(spec.utterances_per_pair == 50);
  CHECK(spec.duration == 2.0);
  CHECK(spec.sample_rate == 22050);

  // Speaker 1 records all four styles; speakers 2 and 3 only neutral.
  CHECK(spec.pairs.size() == 6);
  std::set<std::string> style_labels;
  for (const auto& st : spec.styles) style_labels.insert(st.label);
  CHECK(style_labels.count("neutral") == 1);
  int spk1_pairs = 0, neutral_pairs = 0;
  for (const auto& [spk, style] : spec.pairs) {
    if (spk == spec.speakers[0].speaker_id) ++spk1_pairs;
    if (style == "neutral") ++neutral_pairs;
  }
  CHECK(spk1_pairs == 4);
  CHECK(neutral_pairs == 3);

  // Conversions cover each expressive style for each other speaker, at
  // perfect quality.
  CHECK(spec.conversions.size() == 6);
  for (const auto& c : spec.conversions) {
    CHECK(c.source_speaker == spec.speakers[0].speaker_id);
    CHECK(c.target_speaker != c.source_speaker);
    CHECK(c.style != "neutral");
    CHECK(c.quality == 1.0);
  }

  const std::size_t total =
      (spec.pairs.size() + spec.conversions.size()) *
      static_cast<std::size_t>(spec.utterances_per_pair);
  CHECK(total == 600);

  // Distinct timbres and pitch ranges per speaker.
  std::set<double> f1s, f0s;
  for (const auto& s : spec.speakers) {
    f1s.insert(s.f1);
    f0s.insert(s.base_f0);
  }
  CHECK(f1s.size() == 3);
  CHECK(f0s.size() == 3);
}

TEST_CASE("synthesis is deterministic per seed and varies across seeds") {
  const ToySpeaker spk = test_speaker();
  const ToyStyle st = flat_style();
  Rng r1(5), r2(5), r3(6);
  const Waveform a = synth_utterance(spk, st, 1.0, 22050, r1);
  const Waveform b = synth_utterance(spk, st, 1.0, 22050, r2);
  const Waveform c = synth_utterance(spk, st, 1.0, 22050, r3);
  CHECK(a.sample_rate == 22050);
  CHECK(a.samples.size() == 22050);
  CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((a.samples - c.samples).cwiseAbs().maxCoeff() > 0.0f);
}

TEST_CASE("takes are peak-normalized just under full scale") {
  Rng rng(9);
  const Waveform w =
      synth_utterance(test_speaker(), flat_style(), 1.0, 22050, rng);
  CHECK(w.samples.cwiseAbs().maxCoeff() == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("a flat style holds the speaker's base pitch") {
  Rng rng(11);
  const Waveform w =
      synth_utterance(test_speaker(), flat_style(), 1.5, 22050, rng);
  CHECK(measured_median_f0(w) == doctest::Approx(132.0).epsilon(0.02));
}

TEST_CASE("contours move pitch in their nominal direction, median intact") {
  ToySpeaker spk = test_speaker();
  ToyStyle st = flat_style();
  st.depth_semitones = 6.0;

  auto f0_thirds = [&](const Waveform& w) {
    const F0Contour track = estimate_f0(w);
    std::vector<double> voiced;
    for (Index i = 0; i < track.hz.size(); ++i)
      if (track.hz[i] > 0.0) voiced.push_back(track.hz[i]);
    REQUIRE(voiced.size() > 9);
    const std::size_t third = voiced.size() / 3;
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < third; ++i) first += voiced[i];
    for (std::size_t i = voiced.size() - third; i < voiced.size(); ++i)
      last += voiced[i];
    return std::pair{first / static_cast<double>(third),
                     last / static_cast<double>(third)};
  };

  SUBCASE("rising ends about half an octave above its start") {
    st.contour = ToyStyle::Contour::kRising;
    Rng rng(3);
    const Waveform w = synth_utterance(spk, st, 1.5, 22050, rng);
    const auto [first, last] = f0_thirds(w);
    CHECK(last / first > 1.2);
    CHECK(measured_median_f0(w) == doctest::Approx(132.0).epsilon(0.06));
  }
  SUBCASE("falling mirrors rising") {
    st.contour = ToyStyle::Contour::kFalling;
    Rng rng(3);
    const Waveform w = synth_utterance(spk, st, 1.5, 22050, rng);
    const auto [first, last] = f0_thirds(w);
    CHECK(first / last > 1.2);
    CHECK(measured_median_f0(w) == doctest::Approx(132.0).epsilon(0.06));
  }
  SUBCASE("oscillation swings symmetrically about the base pitch") {
    st.contour = ToyStyle::Contour::kOscillating;
    st.depth_semitones = 4.0;
    st.osc_rate_hz = 3.0;
    Rng rng(3);
    const Waveform w = synth_utterance(spk, st, 2.0, 22050, rng);
    // The pitch tracker's voicing gate keeps mostly the vibrato's stationary
    // points, yielding two clusters at the crest and trough pitches. Their
    // quartiles must bracket the base pitch symmetrically in log-frequency.
    const F0Contour track = estimate_f0(w);
    std::vector<double> voiced;
    for (Index i = 0; i < track.hz.size(); ++i)
      if (track.hz[i] > 0.0) voiced.push_back(track.hz[i]);
    REQUIRE(voiced.size() > 20);
    std::sort(voiced.begin(), voiced.end());
    const double lo_cluster = voiced[voiced.size() / 4];
    const double hi_cluster = voiced[3 * voiced.size() / 4];
    // Roughly four semitones of peak-to-peak swing around the base.
    CHECK(hi_cluster / lo_cluster > 1.15);
    CHECK(std::sqrt(lo_cluster * hi_cluster) ==
          doctest::Approx(132.0).epsilon(0.03));
  }
}

TEST_CASE("energy envelopes shape the take's loudness over time") {
  ToySpeaker spk = test_speaker();
  ToyStyle st = flat_style();

  SUBCASE("crescendo grows toward the end") {
    st.energy = ToyStyle::EnergyShape::kCrescendo;
    Rng rng(7);
    const Waveform w = synth_utterance(spk, st, 1.5, 22050, rng);
    CHECK(segment_rms(w, 0.7, 1.0) / segment_rms(w, 0.0, 0.3) > 1.8);
  }
  SUBCASE("decrescendo fades") {
    st.energy = ToyStyle::EnergyShape::kDecrescendo;
    Rng rng(7);
    const Waveform w = synth_utterance(spk, st, 1.5, 22050, rng);
    CHECK(segment_rms(w, 0.0, 0.3) / segment_rms(w, 0.7, 1.0) > 1.8);
  }
  SUBCASE("pulsing modulates at twice per second") {
    st.energy = ToyStyle::EnergyShape::kPulsed;
    Rng rng(7);
    const Waveform w = synth_utterance(spk, st, 1.5, 22050, rng);
    // 2 Hz modulation: 0.25 s spacing between a crest and the next trough.
    // Compare RMS over windows centered on a crest and on a trough.
    const double crest = segment_rms(w, 0.20, 0.30);
    const double trough = segment_rms(w, 0.45, 0.55);
    CHECK(std::max(crest, trough) / std::min(crest, trough) > 1.3);
  }
}

TEST_CASE("the first formant dominates the low spectrum") {
  Rng rng(15);
  const Waveform w =
      synth_utterance(test_speaker(), flat_style(), 1.5, 22050, rng);
  // Average magnitude spectrum over 4096-sample chunks.
  const Index n = 4096;
  Eigen::ArrayXd mag = Eigen::ArrayXd::Zero(n / 2 + 1);
  Eigen::FFT<double> fft;
  int chunks = 0;
  for (Index start = 0; start + n <= w.samples.size(); start += n, ++chunks) {
    std::vector<double> buf(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = w.samples[start + i];
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, buf);
    for (Index k = 0; k <= n / 2; ++k) mag[k] += std::abs(spec[static_cast<std::size_t>(k)]);
  }
  REQUIRE(chunks > 0);
  // Strongest bin below 2 kHz sits within one harmonic of f1 = 730 Hz.
  const double bin_hz = 22050.0 / static_cast<double>(n);
  Index lo = static_cast<Index>(200.0 / bin_hz);
  Index hi = static_cast<Index>(2000.0 / bin_hz);
  Index peak = lo;
  for (Index k = lo; k <= hi; ++k)
    if (mag[k] > mag[peak]) peak = k;
  const double peak_hz = static_cast<double>(peak) * bin_hz;
  CHECK(std::abs(peak_hz - 730.0) < 132.0 + bin_hz);
}

TEST_CASE("voice interpolation is linear in formants, geometric in pitch") {
  ToySpeaker src = test_speaker();
  ToySpeaker tgt;
  tgt.speaker_id = "other";
  tgt.f1 = 270.0;
  tgt.f2 = 2290.0;
  tgt.f3 = 3010.0;
  tgt.base_f0 = 220.0;
  tgt.bw1 = 100.0;

  SUBCASE("endpoints reproduce the voices") {
    const ToySpeaker at0 = interpolate_speaker(src, tgt, 0.0);
    CHECK(at0.f1 == src.f1);
    CHECK(at0.f2 == src.f2);
    CHECK(at0.base_f0 == src.base_f0);
    const ToySpeaker at1 = interpolate_speaker(src, tgt, 1.0);
    CHECK(at1.f1 == tgt.f1);
    CHECK(at1.base_f0 == tgt.base_f0);
    CHECK(at1.bw1 == tgt.bw1);
  }
  SUBCASE("midpoint") {
    const ToySpeaker mid = interpolate_speaker(src, tgt, 0.5);
    CHECK(mid.f1 == doctest::Approx(0.5 * (730.0 + 270.0)).epsilon(1e-12));
    CHECK(mid.f2 == doctest::Approx(0.5 * (1090.0 + 2290.0)).epsilon(1e-12));
    CHECK(mid.base_f0 ==
          doctest::Approx(std::sqrt(132.0 * 220.0)).epsilon(1e-12));
    CHECK(mid.bw1 == doctest::Approx(0.5 * (80.0 + 100.0)).epsilon(1e-12));
  }
  SUBCASE("the converted voice carries the target's identity") {
    CHECK(interpolate_speaker(src, tgt, 1.0).speaker_id == "other");
    CHECK(interpolate_speaker(src, tgt, 0.3).speaker_id == "other");
  }
  SUBCASE("quality outside [0, 1] is rejected") {
    CHECK_THROWS_AS(interpolate_speaker(src, tgt, -0.1), std::runtime_error);
    CHECK_THROWS_AS(interpolate_speaker(src, tgt, 1.1), std::runtime_error);
  }
}

TEST_CASE("synthesis validates its inputs") {
  Rng rng(1);
  const ToySpeaker spk = test_speaker();
  const ToyStyle st = flat_style();
  CHECK_THROWS_AS(synth_utterance(spk, st, 0.0, 22050, rng),
                  std::runtime_error);
  CHECK_THROWS_AS(synth_utterance(spk, st, 1.0, 0, rng), std::runtime_error);
  ToySpeaker silent = spk;
  silent.base_f0 = 0.0;
  CHECK_THROWS_AS(synth_utterance(silent, st, 1.0, 22050, rng),
                  std::runtime_error);
}

TEST_CASE("generate_dataset writes audio and a faithful manifest") {
  ToySpec spec = default_toy_spec();
  spec.utterances_per_pair = 2;
  spec.duration = 1.8;
  spec.seed = 4;
  const std::string dir = tmp_dir("small");
  const std::string manifest_path = generate_dataset(spec, dir);

  const auto entries = load_manifest(manifest_path);
  REQUIRE(entries.size() == (6 + 6) * 2);

  Index n_synth = 0;
  std::set<std::string> paths;
  for (const auto& e : entries) {
    CHECK(!e.audio_path.empty());
    CHECK(paths.insert(e.audio_path).second);  // unique
    const std::string resolved = resolve_audio_path(manifest_path, e.audio_path);
    CHECK(std::filesystem::exists(resolved));
    const Waveform w = read_wav(resolved);
    CHECK(w.sample_rate == spec.sample_rate);
    CHECK(w.samples.size() ==
          static_cast<Index>(spec.duration * spec.sample_rate));
    if (e.synthetic) ++n_synth;
  }
  CHECK(n_synth == 12);

  // Synthetic rows carry the conversion target's speaker id and an
  // expressive style.
  for (const auto& e : entries) {
    if (!e.synthetic) continue;
    CHECK(e.speaker_id != spec.speakers[0].speaker_id);
    CHECK(e.style != "neutral");
  }

  SUBCASE("the same spec regenerates byte-identical audio") {
    const std::string dir2 = tmp_dir("small_again");
    const std::string manifest2 = generate_dataset(spec, dir2);
    const auto entries2 = load_manifest(manifest2);
    REQUIRE(entries2.size() == entries.size());
    const Waveform w1 =
        read_wav(resolve_audio_path(manifest_path, entries[0].audio_path));
    const Waveform w2 =
        read_wav(resolve_audio_path(manifest2, entries2[0].audio_path));
    CHECK((w1.samples - w2.samples).cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("takes of one pair differ from each other") {
    const Waveform w1 =
        read_wav(resolve_audio_path(manifest_path, entries[0].audio_path));
    const Waveform w2 =
        read_wav(resolve_audio_path(manifest_path, entries[1].audio_path));
    CHECK((w1.samples - w2.samples).cwiseAbs().maxCoeff() > 0.0f);
  }
}

TEST_CASE("generate_dataset rejects inconsistent specs") {
  ToySpec spec = default_toy_spec();
  spec.utterances_per_pair = 1;
  spec.duration = 1.8;

  SUBCASE("duplicate speaker ids") {
    spec.speakers.push_back(spec.speakers[0]);
    CHECK_THROWS_AS(generate_dataset(spec, tmp_dir("dup_spk")),
                    std::runtime_error);
  }
  SUBCASE("duplicate style labels") {
    spec.styles.push_back(spec.styles[0]);
    CHECK_THROWS_AS(generate_dataset(spec, tmp_dir("dup_style")),
                    std::runtime_error);
  }
  SUBCASE("pair with unknown speaker") {
    spec.pairs.emplace_back("ghost", "neutral");
    CHECK_THROWS_AS(generate_dataset(spec, tmp_dir("ghost_spk")),
                    std::runtime_error);
  }
  SUBCASE("pair with unknown style") {
    spec.pairs.emplace_back(spec.speakers[0].speaker_id, "bogus");
    CHECK_THROWS_AS(generate_dataset(spec, tmp_dir("ghost_style")),
                    std::runtime_error);
  }
  SUBCASE("conversion with unknown participants") {
    spec.conversions.push_back({"ghost", spec.speakers[1].speaker_id,
                                spec.styles[1].label, 1.0});
    CHECK_THROWS_AS(generate_dataset(spec, tmp_dir("ghost_conv")),
                    std::runtime_error);
  }
  SUBCASE("no utterances requested") {
    spec.utterances_per_pair = 0;
    CHECK_THROWS_AS(generate_dataset(spec, tmp_dir("zero_upp")),
                    std::runtime_error);
  }
}

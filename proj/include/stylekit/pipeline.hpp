// include/stylekit/pipeline.hpp

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

#ifndef STYLEKIT_PIPELINE_HPP
#define STYLEKIT_PIPELINE_HPP

#include <cstdint>
#include <string>

#include "stylekit/common.hpp"
#include "stylekit/dsp.hpp"
#include "stylekit/encoder.hpp"
#include "stylekit/metric.hpp"
#include "stylekit/pitch.hpp"
#include "stylekit/toygen.hpp"

namespace stylekit {

// synth_none trains on ground-truth recordings only; synth_both adds the
// simulated cross-speaker conversions to the training pool.
enum class Arm { kSynthNone, kSynthBoth };

Arm parse_arm(const std::string& name);
std::string arm_name(Arm arm);

struct MelConfig {
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
};

struct SplitConfig {
  double validation_fraction = 0.1;
};

struct EvalConfig {
  std::string neutral_label = "neutral";
  bool include_synthetic_in_centroids = false;
  double probe_holdout = 0.5;
};

struct ToygenConfig {
  int utterances_per_pair = 50;
  double duration = 2.0;
};

// One JSON document with per-section defaults; an absent config file runs
// the whole gen-toy -> extract -> train -> embed -> evaluate chain as-is.
// The top-level seed feeds corpus generation, the train/validation split
// and training; unknown keys are rejected.
struct PipelineConfig {
  std::uint64_t seed = 0;
  int sample_rate = 22050;
  Arm arm = Arm::kSynthNone;
  StftConfig stft;
  MelConfig mel;
  F0Config pitch;
  EncoderConfig encoder;
  TrainConfig train;
  Index n_variants = 4;  // precomputed formant-shift variants per utterance
  SplitConfig split;
  EvalConfig eval;
  ToygenConfig toygen;
};

PipelineConfig parse_pipeline_config(const std::string& json_text);
// Empty path = all defaults.
PipelineConfig load_pipeline_config(const std::string& path);
std::string serialize_pipeline_config(const PipelineConfig& cfg);

// Cache file stem for one manifest entry: audio basename plus a hash of its
// manifest-relative path, so distinct directories cannot collide.
std::string cache_stem(const std::string& audio_rel_path);

// gen-toy: renders the corpus under out_dir, prints a summary table and
// returns the manifest path.
std::string cmd_gen_toy(const PipelineConfig& cfg, const std::string& out_dir);

// extract: per-file mel + formant-shift variants + F0/energy contours, plus
// speaker_stats.json, into cache_dir. Content-hash index makes reruns skip
// up-to-date files; returns how many files were (re)computed. Per-file
// failures are collected and reported together.
int cmd_extract(const PipelineConfig& cfg, const std::string& manifest_path,
                const std::string& cache_dir, int jobs = 1);

// The training pool cmd_train uses: stratified train/validation split on
// the full manifest, then the arm filter, then features from the cache.
TrainDataset load_train_dataset(const PipelineConfig& cfg,
                                const std::string& manifest_path,
                                const std::string& cache_dir);

// train: Stage-1 run writing encoder.stye (+ .train.json optimizer state),
// loss.csv and run_config.json under out_dir. resume_path continues from a
// checkpoint and reproduces the uninterrupted trajectory.
void cmd_train(const PipelineConfig& cfg, const std::string& manifest_path,
               const std::string& cache_dir, const std::string& out_dir,
               const std::string& resume_path = "");

// embed: deterministic center-slice embedding of every manifest entry, in
// manifest order, into a "STYB" file.
void cmd_embed(const PipelineConfig& cfg, const std::string& manifest_path,
               const std::string& cache_dir, const std::string& checkpoint,
               const std::string& out_path, int jobs = 1);

// evaluate: style centroids (ground-truth training rows by default),
// validation style accuracy, leakage probe, per-speaker SECS matrix and
// synthetic-vs-centroid similarities. Writes evaluation.json and
// centroids.json under out_dir and returns the evaluation document.
std::string cmd_evaluate(const PipelineConfig& cfg,
                         const std::string& embeddings_path,
                         const std::string& out_dir);

// project: PCA to out_csv with header x,y,style,speaker,synthetic;
// explained variance fractions go to stderr.
void cmd_project(const PipelineConfig& cfg, const std::string& embeddings_path,
                 const std::string& out_csv);

// Command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace stylekit

#endif  // STYLEKIT_PIPELINE_HPP

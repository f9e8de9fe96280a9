// include/stylekit/metric.hpp

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

#ifndef STYLEKIT_METRIC_HPP
#define STYLEKIT_METRIC_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stylekit/common.hpp"
#include "stylekit/dsp.hpp"
#include "stylekit/encoder.hpp"

namespace stylekit {

// Learnable similarity scale and bias of the angular prototypical loss.
// w is clamped to >= 1e-6 after every optimizer step, not inside the loss.
struct LossParams {
  double w = 10.0;
  double b = -5.0;
};

constexpr double kMinLossScale = 1e-6;

template <typename S>
struct LossResult {
  double loss = 0.0;
  Mat<S> grad_emb;  // dim x (C*M), same column order as the input
  double grad_w = 0.0;
  double grad_b = 0.0;
};

// Angular prototypical loss over emb columns ordered class-major
// (column j*m + i is utterance i of class j). Every utterance is a query;
// its own-class prototype is the leave-one-out mean, other prototypes are
// full means. Similarity w*cos + b feeds a softmax cross-entropy, averaged
// over queries. Gradients are exact, including through the prototypes.
template <typename S>
LossResult<S> angular_proto_loss(const Mat<S>& emb, Index n_classes, Index m,
                                 const LossParams& lp);

struct RAdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct RAdamState {
  Vec<S> m, v;  // sized on the first step
  std::int64_t t = 0;
  double beta1_pow = 1.0;  // beta1^t, maintained multiplicatively
  double beta2_pow = 1.0;
};

// Rectified Adam. With rho_t <= 4 the step is lr * mhat and v is never
// divided by; past the rectification threshold the variance-adapted step
// applies. A non-finite gradient rejects the step without touching state.
template <typename S>
void radam_step(Vec<S>& params, const Vec<S>& grads, RAdamState<S>& state,
                const RAdamConfig& cfg);

// One training item: identity features plus precomputed formant-shifted
// variants of the same utterance.
struct TrainItem {
  MelSpectrogram base;
  std::vector<MelSpectrogram> variants;
  std::string style;
  std::string speaker_id;
  bool synthetic = false;
};

struct TrainDataset {
  std::vector<TrainItem> items;
  std::vector<std::string> styles;           // distinct, sorted
  std::vector<std::vector<Index>> by_style;  // item indices per style
};

// Groups items by style. Throws if any item has an empty style name.
TrainDataset build_dataset(std::vector<TrainItem> items);

struct StyleBatch {
  std::vector<Matf> slices;         // C*M items, class-major order
  std::vector<Index> class_of;      // 0..C-1 per slice
  std::vector<std::string> styles;  // the C style names used
  std::vector<Index> item_of;       // source dataset item per slice
  std::vector<bool> perturbed;      // formant-shifted variant used
};

struct TrainConfig {
  Index styles_per_batch = 4;  // C
  Index utts_per_style = 10;   // M, leave-one-out prototypes need >= 2
  double slice_duration = 1.6;
  double perturb_prob = 0.5;
  Index steps = 2000;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  Index log_interval = 10;
  Index checkpoint_interval = 0;  // 0: checkpoint only at the end
};

// Uniform with-replacement draws of M utterances for each of C styles
// (styles themselves drawn without replacement when the dataset has more
// than C), each sliced and with probability perturb_prob swapped for one of
// its precomputed formant-shifted variants.
StyleBatch sample_batch(const TrainDataset& ds, const TrainConfig& cfg,
                        Rng& rng);

struct HistoryRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double w = 0.0;
  double b = 0.0;
};

// Complete resumable training state. rng_state is the textual mt19937_64
// stream state.
struct TrainState {
  Vecf params;
  LossParams lp;
  RAdamState<float> enc_opt;
  RAdamState<double> lp_opt;
  std::int64_t step = 0;
  std::string rng_state;
};

struct TrainResult {
  Vecf params;
  LossParams lp;
  std::vector<HistoryRow> history;
};

using CheckpointCallback = std::function<void(const TrainState&)>;

// Stage-1 loop: sample_batch -> batched forward -> loss -> backward ->
// RAdam on encoder and loss params -> clamp w. Bit-reproducible for a seed.
TrainResult train(const TrainDataset& ds, const EncoderConfig& enc_cfg,
                  const TrainConfig& cfg,
                  const CheckpointCallback& on_checkpoint = nullptr);

// Continues from a saved state; the step counter in state says how many
// steps already ran. Produces the same trajectory the uninterrupted run had.
TrainResult train_from(const TrainDataset& ds, const EncoderConfig& enc_cfg,
                       const TrainConfig& cfg, TrainState state,
                       const CheckpointCallback& on_checkpoint = nullptr);

// Checkpoint = encoder "STYE" file at path plus "<path>.train.json" holding
// loss params, both optimizer states (moments base64 at their native f32 /
// f64 width), step and the rng
// stream state.
void save_train_state(const TrainState& state, const EncoderConfig& enc_cfg,
                      const std::string& path);
std::pair<TrainState, EncoderConfig> load_train_state(const std::string& path);

void save_history_csv(const std::vector<HistoryRow>& history,
                      const std::string& path);

}  // namespace stylekit

#endif  // STYLEKIT_METRIC_HPP

// include/stylekit/encoder.hpp

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

#ifndef STYLEKIT_ENCODER_HPP
#define STYLEKIT_ENCODER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "stylekit/common.hpp"

namespace stylekit {

// Reference-encoder style network: a stack of 3x3 stride-2 ReLU convolutions
// over (time x mel), the surviving frequency x channel axes flattened per
// time step into a single-layer GRU, and the final hidden state projected,
// tanh-squashed and L2-normalized into the style embedding. Batch
// normalization is deliberately omitted.
struct EncoderConfig {
  std::vector<int> conv_channels{32, 32, 64, 64, 128, 128};
  int hidden = 128;
  int embedding_dim = 128;
  int n_mels = 80;

  bool operator==(const EncoderConfig&) const = default;
};

// One named tensor inside the flat parameter vector.
struct TensorSpec {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  Index offset = 0;

  Index size() const { return rows * cols; }
};

// Flat-vector parameter layout derived from a config. Tensor order is the
// serialization order; values within a tensor are column-major.
class ParamLayout {
 public:
  explicit ParamLayout(const EncoderConfig& cfg);

  Index total_params() const { return total_; }
  const std::vector<TensorSpec>& tensors() const { return tensors_; }
  const TensorSpec& find(const std::string& name) const;

  // Frequency extent after the conv stack; GRU input is channels * this.
  Index conv_out_freq() const { return conv_out_freq_; }
  Index gru_input() const { return gru_input_; }

  template <typename S>
  Eigen::Map<Mat<S>> view(Vec<S>& flat, const TensorSpec& t) const {
    return Eigen::Map<Mat<S>>(flat.data() + t.offset, t.rows, t.cols);
  }
  template <typename S>
  Eigen::Map<const Mat<S>> view(const Vec<S>& flat, const TensorSpec& t) const {
    return Eigen::Map<const Mat<S>>(flat.data() + t.offset, t.rows, t.cols);
  }

 private:
  std::vector<TensorSpec> tensors_;
  Index total_ = 0;
  Index conv_out_freq_ = 0;
  Index gru_input_ = 0;
};

// Spatial extent after one stride-2 pad-1 3x3 conv.
inline Index conv_halve(Index d) { return (d + 1) / 2; }

// Everything backward needs, plus reusable buffers so repeated forward
// passes do not reallocate. Feature maps are stored channels x positions
// with column index ((b * height + y) * width + x).
template <typename S>
struct ForwardCache {
  Index batch = 0;
  std::vector<Index> h_dims, w_dims;   // spatial dims per level, input first
  std::vector<Mat<S>> x;               // post-ReLU maps; x[0] is the input
  std::vector<Mat<S>> k;               // im2col matrices per conv layer
  std::vector<Mat<S>> u;               // GRU inputs per step, gru_input x B
  std::vector<Mat<S>> r, z, n, hn_lin, h_prev;  // GRU internals per step
  Mat<S> g;       // final hidden state, hidden x B
  Mat<S> a;       // tanh of the projection, dim x B
  Vec<S> norms;   // per-item L2 norm of a
  Mat<S> emb;     // normalized embeddings, dim x B
};

// He-uniform conv/linear weights, +-1/sqrt(hidden) recurrent weights, zero
// biases. Draws happen in double and are cast, so float and double params
// from one seed agree to float precision.
template <typename S>
Vec<S> init_params(const EncoderConfig& cfg, std::uint64_t seed);

// Batched forward over B mel slices (rows = frames, cols = mels; all items
// the same shape). Returns dim x B embeddings, unit columns.
template <typename S>
Mat<S> encoder_forward(const EncoderConfig& cfg, const Vec<S>& params,
                       const std::vector<Mat<S>>& mels, ForwardCache<S>& cache);

// Exact gradient of sum_b grad_emb(:,b) . emb(:,b) w.r.t. the flat params.
template <typename S>
Vec<S> encoder_backward(const EncoderConfig& cfg, const Vec<S>& params,
                        const ForwardCache<S>& cache, const Mat<S>& grad_emb);

// Checkpoint format, magic "STYE": version u16, conv layer count u16 and
// channels u16 each, hidden u16, embedding dim u16, n_mels u16, param count
// u64, then f32 params in layout order. Little-endian.
struct EncoderCheckpoint {
  EncoderConfig config;
  Vecf params;
};

void save_encoder(const EncoderCheckpoint& ckpt, const std::string& path);
EncoderCheckpoint load_encoder(const std::string& path);

// Distinct error when a checkpoint's architecture differs from what the
// caller was built for.
void check_config_match(const EncoderConfig& expected,
                        const EncoderConfig& actual);

}  // namespace stylekit

#endif  // STYLEKIT_ENCODER_HPP

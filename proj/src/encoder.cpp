// src/encoder.cpp

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

#include "stylekit/encoder.hpp"

#include <cmath>
#include <cstring>

#include "stylekit/ioutil.hpp"

namespace stylekit {

namespace {

void check_encoder_config(const EncoderConfig& cfg) {
  if (cfg.conv_channels.empty()) throw Error("encoder: empty conv channel list");
  for (int c : cfg.conv_channels) {
    if (c <= 0) throw Error("encoder: conv channels must be positive");
  }
  if (cfg.hidden <= 0 || cfg.embedding_dim <= 0 || cfg.n_mels <= 0) {
    throw Error("encoder: dims must be positive");
  }
}

template <typename S>
Mat<S> sigmoid(const Mat<S>& x) {
  return ((-x.array()).exp() + S(1)).inverse().matrix();
}

}  // namespace

ParamLayout::ParamLayout(const EncoderConfig& cfg) {
  check_encoder_config(cfg);
  auto add = [this](const std::string& name, Index rows, Index cols) {
    tensors_.push_back({name, rows, cols, total_});
    total_ += rows * cols;
  };

  Index c_in = 1;
  conv_out_freq_ = cfg.n_mels;
  for (std::size_t l = 0; l < cfg.conv_channels.size(); ++l) {
    const Index c_out = cfg.conv_channels[l];
    add("conv" + std::to_string(l + 1) + ".weight", c_out, 9 * c_in);
    add("conv" + std::to_string(l + 1) + ".bias", c_out, 1);
    c_in = c_out;
    conv_out_freq_ = conv_halve(conv_out_freq_);
  }
  gru_input_ = c_in * conv_out_freq_;

  const Index h = cfg.hidden, in = gru_input_;
  add("gru.w_ir", h, in);
  add("gru.w_iz", h, in);
  add("gru.w_in", h, in);
  add("gru.w_hr", h, h);
  add("gru.w_hz", h, h);
  add("gru.w_hn", h, h);
  add("gru.b_ir", h, 1);
  add("gru.b_iz", h, 1);
  add("gru.b_in", h, 1);
  add("gru.b_hr", h, 1);
  add("gru.b_hz", h, 1);
  add("gru.b_hn", h, 1);
  add("out.weight", cfg.embedding_dim, h);
  add("out.bias", cfg.embedding_dim, 1);
}

const TensorSpec& ParamLayout::find(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw Error("encoder: unknown tensor " + name);
}

template <typename S>
Vec<S> init_params(const EncoderConfig& cfg, std::uint64_t seed) {
  const ParamLayout layout(cfg);
  Vec<S> flat(layout.total_params());
  Rng rng(seed);
  for (const auto& t : layout.tensors()) {
    const bool bias = t.cols == 1;
    double limit;
    if (bias) {
      limit = 0.0;  // biases start at zero and consume no rng draws
    } else if (t.name.rfind("gru.w_h", 0) == 0) {
      limit = 1.0 / std::sqrt(static_cast<double>(t.cols));
    } else {
      limit = std::sqrt(6.0 / static_cast<double>(t.cols));  // He uniform
    }
    for (Index i = 0; i < t.size(); ++i) {
      flat[t.offset + i] =
          bias ? S(0) : static_cast<S>(uniform(rng, -limit, limit));
    }
  }
  return flat;
}

namespace {

// Gathers the 3x3 stride-2 pad-1 receptive fields of x into k: column
// ((b*h_out + y)*w_out + x') holds the 9 c_in-blocks in (dy,dx) order.
template <typename S>
void im2col(const Mat<S>& x, Index batch, Index h_in, Index w_in, Mat<S>& k) {
  const Index c_in = x.rows();
  const Index h_out = conv_halve(h_in), w_out = conv_halve(w_in);
  k.resize(9 * c_in, batch * h_out * w_out);
  for (Index b = 0; b < batch; ++b) {
    for (Index y = 0; y < h_out; ++y) {
      for (Index xo = 0; xo < w_out; ++xo) {
        const Index col = (b * h_out + y) * w_out + xo;
        for (Index dy = 0; dy < 3; ++dy) {
          const Index iy = 2 * y + dy - 1;
          for (Index dx = 0; dx < 3; ++dx) {
            const Index ix = 2 * xo + dx - 1;
            auto dst = k.col(col).segment((dy * 3 + dx) * c_in, c_in);
            if (iy >= 0 && iy < h_in && ix >= 0 && ix < w_in) {
              dst = x.col((b * h_in + iy) * w_in + ix);
            } else {
              dst.setZero();
            }
          }
        }
      }
    }
  }
}

// Scatter-adds dk back onto the input map; exact adjoint of im2col.
template <typename S>
void col2im(const Mat<S>& dk, Index batch, Index h_in, Index w_in, Mat<S>& dx) {
  const Index c_in = dk.rows() / 9;
  const Index h_out = conv_halve(h_in), w_out = conv_halve(w_in);
  dx.setZero();
  for (Index b = 0; b < batch; ++b) {
    for (Index y = 0; y < h_out; ++y) {
      for (Index xo = 0; xo < w_out; ++xo) {
        const Index col = (b * h_out + y) * w_out + xo;
        for (Index dy = 0; dy < 3; ++dy) {
          const Index iy = 2 * y + dy - 1;
          if (iy < 0 || iy >= h_in) continue;
          for (Index dx_ = 0; dx_ < 3; ++dx_) {
            const Index ix = 2 * xo + dx_ - 1;
            if (ix < 0 || ix >= w_in) continue;
            dx.col((b * h_in + iy) * w_in + ix) +=
                dk.col(col).segment((dy * 3 + dx_) * c_in, c_in);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename S>
Mat<S> encoder_forward(const EncoderConfig& cfg, const Vec<S>& params,
                       const std::vector<Mat<S>>& mels,
                       ForwardCache<S>& cache) {
  const ParamLayout layout(cfg);
  if (params.size() != layout.total_params()) {
    throw Error("encoder: parameter vector size mismatch");
  }
  if (mels.empty()) throw Error("encoder: empty batch");
  const Index batch = static_cast<Index>(mels.size());
  const Index time_in = mels[0].rows();
  if (time_in < 1 || mels[0].cols() != cfg.n_mels) {
    throw Error("encoder: input must be frames x n_mels with >= 1 frame");
  }
  for (const auto& m : mels) {
    if (m.rows() != time_in || m.cols() != cfg.n_mels) {
      throw Error("encoder: batch items must share one shape");
    }
    if (!m.allFinite()) throw Error("encoder: non-finite input");
  }

  const Index n_layers = static_cast<Index>(cfg.conv_channels.size());
  cache.batch = batch;
  cache.h_dims.assign(1, time_in);
  cache.w_dims.assign(1, cfg.n_mels);
  for (Index l = 0; l < n_layers; ++l) {
    cache.h_dims.push_back(conv_halve(cache.h_dims.back()));
    cache.w_dims.push_back(conv_halve(cache.w_dims.back()));
  }
  cache.x.resize(n_layers + 1);
  cache.k.resize(n_layers);

  // Input map: one channel, column ((b*time + t)*mels + f).
  cache.x[0].resize(1, batch * time_in * cfg.n_mels);
  for (Index b = 0; b < batch; ++b) {
    for (Index t = 0; t < time_in; ++t) {
      for (Index f = 0; f < cfg.n_mels; ++f) {
        cache.x[0](0, (b * time_in + t) * cfg.n_mels + f) = mels[b](t, f);
      }
    }
  }

  for (Index l = 0; l < n_layers; ++l) {
    im2col(cache.x[l], batch, cache.h_dims[l], cache.w_dims[l], cache.k[l]);
    const auto w = layout.view(params, layout.tensors()[2 * l]);
    const auto bias = layout.view(params, layout.tensors()[2 * l + 1]);
    cache.x[l + 1].noalias() = w * cache.k[l];
    cache.x[l + 1].colwise() += bias.col(0);
    cache.x[l + 1] = cache.x[l + 1].cwiseMax(S(0));
  }

  // Flatten (freq, channel) per time step: u row f*c_last + c.
  const Index t_out = cache.h_dims[n_layers];
  const Index f_out = cache.w_dims[n_layers];
  const Index c_last = cfg.conv_channels.back();
  const Index gru_in = layout.gru_input();
  const Mat<S>& top = cache.x[n_layers];
  cache.u.assign(t_out, Mat<S>(gru_in, batch));
  for (Index t = 0; t < t_out; ++t) {
    for (Index b = 0; b < batch; ++b) {
      for (Index f = 0; f < f_out; ++f) {
        cache.u[t].col(b).segment(f * c_last, c_last) =
            top.col((b * t_out + t) * f_out + f);
      }
    }
  }

  const auto w_ir = layout.view(params, layout.find("gru.w_ir"));
  const auto w_iz = layout.view(params, layout.find("gru.w_iz"));
  const auto w_in = layout.view(params, layout.find("gru.w_in"));
  const auto w_hr = layout.view(params, layout.find("gru.w_hr"));
  const auto w_hz = layout.view(params, layout.find("gru.w_hz"));
  const auto w_hn = layout.view(params, layout.find("gru.w_hn"));
  const auto b_ir = layout.view(params, layout.find("gru.b_ir"));
  const auto b_iz = layout.view(params, layout.find("gru.b_iz"));
  const auto b_in = layout.view(params, layout.find("gru.b_in"));
  const auto b_hr = layout.view(params, layout.find("gru.b_hr"));
  const auto b_hz = layout.view(params, layout.find("gru.b_hz"));
  const auto b_hn = layout.view(params, layout.find("gru.b_hn"));

  const Index h = cfg.hidden;
  cache.r.assign(t_out, Mat<S>());
  cache.z.assign(t_out, Mat<S>());
  cache.n.assign(t_out, Mat<S>());
  cache.hn_lin.assign(t_out, Mat<S>());
  cache.h_prev.assign(t_out, Mat<S>());
  Mat<S> hidden = Mat<S>::Zero(h, batch);
  Mat<S> pre(h, batch);
  for (Index t = 0; t < t_out; ++t) {
    cache.h_prev[t] = hidden;
    pre.noalias() = w_ir * cache.u[t];
    pre.noalias() += w_hr * hidden;
    pre.colwise() += (b_ir.col(0) + b_hr.col(0)).eval();
    cache.r[t] = sigmoid(pre);
    pre.noalias() = w_iz * cache.u[t];
    pre.noalias() += w_hz * hidden;
    pre.colwise() += (b_iz.col(0) + b_hz.col(0)).eval();
    cache.z[t] = sigmoid(pre);
    cache.hn_lin[t].noalias() = w_hn * hidden;
    cache.hn_lin[t].colwise() += b_hn.col(0);
    pre.noalias() = w_in * cache.u[t];
    pre.colwise() += b_in.col(0);
    pre.array() += cache.r[t].array() * cache.hn_lin[t].array();
    cache.n[t] = pre.array().tanh().matrix();
    hidden.array() = (S(1) - cache.z[t].array()) * cache.n[t].array() +
                     cache.z[t].array() * hidden.array();
  }
  cache.g = hidden;

  const auto w_out = layout.view(params, layout.find("out.weight"));
  const auto b_out = layout.view(params, layout.find("out.bias"));
  Mat<S> proj(cfg.embedding_dim, batch);
  proj.noalias() = w_out * cache.g;
  proj.colwise() += b_out.col(0);
  cache.a = proj.array().tanh().matrix();

  cache.norms.resize(batch);
  cache.emb.resize(cfg.embedding_dim, batch);
  for (Index b = 0; b < batch; ++b) {
    const S norm = cache.a.col(b).norm();
    if (norm < S(1e-12)) {
      throw Error("encoder: degenerate zero-norm embedding");
    }
    cache.norms[b] = norm;
    cache.emb.col(b) = cache.a.col(b) / norm;
  }
  return cache.emb;
}

template <typename S>
Vec<S> encoder_backward(const EncoderConfig& cfg, const Vec<S>& params,
                        const ForwardCache<S>& cache, const Mat<S>& grad_emb) {
  const ParamLayout layout(cfg);
  if (params.size() != layout.total_params()) {
    throw Error("encoder backward: parameter vector size mismatch");
  }
  const Index batch = cache.batch;
  if (grad_emb.rows() != cfg.embedding_dim || grad_emb.cols() != batch) {
    throw Error("encoder backward: gradient shape mismatch");
  }

  Vec<S> grad = Vec<S>::Zero(layout.total_params());

  // Through L2 normalize: da = (de - emb (emb.de)) / norm, per column.
  Mat<S> da(cfg.embedding_dim, batch);
  for (Index b = 0; b < batch; ++b) {
    const S dot = cache.emb.col(b).dot(grad_emb.col(b));
    da.col(b) =
        (grad_emb.col(b) - cache.emb.col(b) * dot) / cache.norms[b];
  }
  // Through tanh.
  Mat<S> dproj =
      (da.array() * (S(1) - cache.a.array().square())).matrix();

  const auto w_out = layout.view(params, layout.find("out.weight"));
  layout.view(grad, layout.find("out.weight")).noalias() =
      dproj * cache.g.transpose();
  layout.view(grad, layout.find("out.bias")).col(0) = dproj.rowwise().sum();
  Mat<S> dh(cfg.hidden, batch);
  dh.noalias() = w_out.transpose() * dproj;

  const auto w_ir = layout.view(params, layout.find("gru.w_ir"));
  const auto w_iz = layout.view(params, layout.find("gru.w_iz"));
  const auto w_in = layout.view(params, layout.find("gru.w_in"));
  const auto w_hr = layout.view(params, layout.find("gru.w_hr"));
  const auto w_hz = layout.view(params, layout.find("gru.w_hz"));
  const auto w_hn = layout.view(params, layout.find("gru.w_hn"));
  auto g_w_ir = layout.view(grad, layout.find("gru.w_ir"));
  auto g_w_iz = layout.view(grad, layout.find("gru.w_iz"));
  auto g_w_in = layout.view(grad, layout.find("gru.w_in"));
  auto g_w_hr = layout.view(grad, layout.find("gru.w_hr"));
  auto g_w_hz = layout.view(grad, layout.find("gru.w_hz"));
  auto g_w_hn = layout.view(grad, layout.find("gru.w_hn"));
  auto g_b_ir = layout.view(grad, layout.find("gru.b_ir"));
  auto g_b_iz = layout.view(grad, layout.find("gru.b_iz"));
  auto g_b_in = layout.view(grad, layout.find("gru.b_in"));
  auto g_b_hr = layout.view(grad, layout.find("gru.b_hr"));
  auto g_b_hz = layout.view(grad, layout.find("gru.b_hz"));
  auto g_b_hn = layout.view(grad, layout.find("gru.b_hn"));

  const Index t_out = static_cast<Index>(cache.u.size());
  const Index n_layers = static_cast<Index>(cfg.conv_channels.size());
  std::vector<Mat<S>> du(t_out);
  for (Index t = t_out - 1; t >= 0; --t) {
    const Mat<S>& r = cache.r[t];
    const Mat<S>& z = cache.z[t];
    const Mat<S>& n = cache.n[t];
    const Mat<S>& hp = cache.h_prev[t];

    Mat<S> dz = (dh.array() * (hp.array() - n.array())).matrix();
    Mat<S> dn_pre = (dh.array() * (S(1) - z.array()) *
                     (S(1) - n.array().square()))
                        .matrix();
    Mat<S> dhp = (dh.array() * z.array()).matrix();

    Mat<S> dr = (dn_pre.array() * cache.hn_lin[t].array()).matrix();
    Mat<S> dhn_lin = (dn_pre.array() * r.array()).matrix();
    Mat<S> dz_pre =
        (dz.array() * z.array() * (S(1) - z.array())).matrix();
    Mat<S> dr_pre =
        (dr.array() * r.array() * (S(1) - r.array())).matrix();

    g_w_in.noalias() += dn_pre * cache.u[t].transpose();
    g_b_in.col(0) += dn_pre.rowwise().sum();
    g_w_hn.noalias() += dhn_lin * hp.transpose();
    g_b_hn.col(0) += dhn_lin.rowwise().sum();
    g_w_iz.noalias() += dz_pre * cache.u[t].transpose();
    g_b_iz.col(0) += dz_pre.rowwise().sum();
    g_w_hz.noalias() += dz_pre * hp.transpose();
    g_b_hz.col(0) += dz_pre.rowwise().sum();
    g_w_ir.noalias() += dr_pre * cache.u[t].transpose();
    g_b_ir.col(0) += dr_pre.rowwise().sum();
    g_w_hr.noalias() += dr_pre * hp.transpose();
    g_b_hr.col(0) += dr_pre.rowwise().sum();

    du[t].resize(layout.gru_input(), batch);
    du[t].noalias() = w_in.transpose() * dn_pre;
    du[t].noalias() += w_iz.transpose() * dz_pre;
    du[t].noalias() += w_ir.transpose() * dr_pre;

    dh = dhp;
    dh.noalias() += w_hn.transpose() * dhn_lin;
    dh.noalias() += w_hz.transpose() * dz_pre;
    dh.noalias() += w_hr.transpose() * dr_pre;
  }

  // Scatter GRU input grads back to the top feature map.
  const Index f_out = cache.w_dims[n_layers];
  const Index c_last = cfg.conv_channels.back();
  Mat<S> dx = Mat<S>::Zero(c_last, batch * t_out * f_out);
  for (Index t = 0; t < t_out; ++t) {
    for (Index b = 0; b < batch; ++b) {
      for (Index f = 0; f < f_out; ++f) {
        dx.col((b * t_out + t) * f_out + f) =
            du[t].col(b).segment(f * c_last, c_last);
      }
    }
  }

  Mat<S> dy, dk, dx_prev;
  for (Index l = n_layers - 1; l >= 0; --l) {
    const auto w = layout.view(params, layout.tensors()[2 * l]);
    dy = (cache.x[l + 1].array() > S(0)).select(dx, Mat<S>::Zero(dx.rows(), dx.cols()));
    layout.view(grad, layout.tensors()[2 * l]).noalias() =
        dy * cache.k[l].transpose();
    layout.view(grad, layout.tensors()[2 * l + 1]).col(0) =
        dy.rowwise().sum();
    if (l > 0) {
      dk.resize(w.cols(), dy.cols());
      dk.noalias() = w.transpose() * dy;
      dx_prev.resize(cfg.conv_channels[l - 1],
                     batch * cache.h_dims[l] * cache.w_dims[l]);
      col2im(dk, batch, cache.h_dims[l], cache.w_dims[l], dx_prev);
      dx = dx_prev;
    }
  }
  return grad;
}

namespace {
constexpr std::uint16_t kEncoderFormatVersion = 1;
}  // namespace

void save_encoder(const EncoderCheckpoint& ckpt, const std::string& path) {
  const ParamLayout layout(ckpt.config);
  if (ckpt.params.size() != layout.total_params()) {
    throw Error("save_encoder: parameter vector does not match config");
  }
  ByteWriter bw;
  bw.raw("STYE", 4);
  bw.u16(kEncoderFormatVersion);
  bw.u16(static_cast<std::uint16_t>(ckpt.config.conv_channels.size()));
  for (int c : ckpt.config.conv_channels) {
    bw.u16(static_cast<std::uint16_t>(c));
  }
  bw.u16(static_cast<std::uint16_t>(ckpt.config.hidden));
  bw.u16(static_cast<std::uint16_t>(ckpt.config.embedding_dim));
  bw.u16(static_cast<std::uint16_t>(ckpt.config.n_mels));
  bw.u64(static_cast<std::uint64_t>(ckpt.params.size()));
  for (Index i = 0; i < ckpt.params.size(); ++i) {
    bw.f32(ckpt.params[i]);
  }
  atomic_write_file(path, bw.bytes());
}

EncoderCheckpoint load_encoder(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, "checkpoint " + path);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "STYE") {
    throw Error("not an encoder checkpoint (bad magic): " + path);
  }
  const std::uint16_t version = r.u16();
  if (version != kEncoderFormatVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version) +
                ": " + path);
  }
  EncoderCheckpoint ckpt;
  const std::uint16_t n_layers = r.u16();
  ckpt.config.conv_channels.resize(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    ckpt.config.conv_channels[l] = r.u16();
  }
  ckpt.config.hidden = r.u16();
  ckpt.config.embedding_dim = r.u16();
  ckpt.config.n_mels = r.u16();
  const std::uint64_t count = r.u64();
  const ParamLayout layout(ckpt.config);
  if (count != static_cast<std::uint64_t>(layout.total_params())) {
    throw Error("malformed checkpoint (parameter count mismatch): " + path);
  }
  ckpt.params.resize(static_cast<Index>(count));
  for (Index i = 0; i < ckpt.params.size(); ++i) {
    ckpt.params[i] = r.f32();
  }
  return ckpt;
}

void check_config_match(const EncoderConfig& expected,
                        const EncoderConfig& actual) {
  if (!(expected == actual)) {
    throw Error("checkpoint config mismatch");
  }
}

template Vecf init_params<float>(const EncoderConfig&, std::uint64_t);
template Vecd init_params<double>(const EncoderConfig&, std::uint64_t);
template Matf encoder_forward<float>(const EncoderConfig&, const Vecf&,
                                     const std::vector<Matf>&,
                                     ForwardCache<float>&);
template Matd encoder_forward<double>(const EncoderConfig&, const Vecd&,
                                      const std::vector<Matd>&,
                                      ForwardCache<double>&);
template Vecf encoder_backward<float>(const EncoderConfig&, const Vecf&,
                                      const ForwardCache<float>&, const Matf&);
template Vecd encoder_backward<double>(const EncoderConfig&, const Vecd&,
                                       const ForwardCache<double>&,
                                       const Matd&);

}  // namespace stylekit

// src/metric.cpp

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

#include "stylekit/metric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>
#include <sstream>

#include "json.hpp"
#include "stylekit/ioutil.hpp"

namespace stylekit {

template <typename S>
LossResult<S> angular_proto_loss(const Mat<S>& emb, Index n_classes, Index m,
                                 const LossParams& lp) {
  if (n_classes < 2 || m < 2) {
    throw Error("angular_proto_loss: need >= 2 classes and >= 2 per class");
  }
  if (emb.cols() != n_classes * m) {
    throw Error("angular_proto_loss: embedding count mismatch");
  }
  if (!emb.allFinite()) throw Error("angular_proto_loss: non-finite embedding");

  const Index dim = emb.rows();
  const Index n = emb.cols();
  const S w = static_cast<S>(lp.w);
  const S tiny = static_cast<S>(1e-12);

  Mat<S> sums(dim, n_classes);
  for (Index j = 0; j < n_classes; ++j) {
    sums.col(j) = emb.middleCols(j * m, m).rowwise().sum();
  }

  LossResult<S> out;
  out.grad_emb = Mat<S>::Zero(dim, n);
  double loss = 0.0, grad_w = 0.0, grad_b = 0.0;

  Vec<S> cosines(n_classes);
  Vec<S> logits(n_classes);
  Vec<S> proto(dim), dq(dim), dp(dim);
  Mat<S> protos(dim, n_classes);
  Vec<S> proto_norms(n_classes);
  for (Index j = 0; j < n_classes; ++j) {
    for (Index i = 0; i < m; ++i) {
      const Index q = j * m + i;
      const S qn = emb.col(q).norm();
      if (qn < tiny) {
        throw Error("angular_proto_loss: degenerate zero embedding");
      }
      for (Index k = 0; k < n_classes; ++k) {
        if (k == j) {
          protos.col(k) = (sums.col(j) - emb.col(q)) / static_cast<S>(m - 1);
        } else {
          protos.col(k) = sums.col(k) / static_cast<S>(m);
        }
        const S pn = protos.col(k).norm();
        if (pn < tiny) {
          throw Error("angular_proto_loss: degenerate zero prototype");
        }
        proto_norms[k] = pn;
        cosines[k] = emb.col(q).dot(protos.col(k)) / (qn * pn);
        logits[k] = w * cosines[k] + static_cast<S>(lp.b);
      }

      const S peak = logits.maxCoeff();
      const S lse =
          peak + std::log((logits.array() - peak).exp().sum());
      loss += static_cast<double>(lse - logits[j]);

      for (Index k = 0; k < n_classes; ++k) {
        // d loss / d logit_k, already carrying the 1/N query mean.
        const S dlogit = (std::exp(logits[k] - lse) -
                          (k == j ? S(1) : S(0))) /
                         static_cast<S>(n);
        grad_w += static_cast<double>(dlogit * cosines[k]);
        grad_b += static_cast<double>(dlogit);
        const S dcos = dlogit * w;
        const S pn = proto_norms[k];
        dq = protos.col(k) / (qn * pn) - emb.col(q) * (cosines[k] / (qn * qn));
        dp = emb.col(q) / (qn * pn) - protos.col(k) * (cosines[k] / (pn * pn));
        out.grad_emb.col(q) += dcos * dq;
        if (k == j) {
          const S share = dcos / static_cast<S>(m - 1);
          for (Index i2 = 0; i2 < m; ++i2) {
            if (i2 == i) continue;
            out.grad_emb.col(j * m + i2) += share * dp;
          }
        } else {
          const S share = dcos / static_cast<S>(m);
          for (Index i2 = 0; i2 < m; ++i2) {
            out.grad_emb.col(k * m + i2) += share * dp;
          }
        }
      }
    }
  }
  out.loss = loss / static_cast<double>(n);
  out.grad_w = grad_w;
  out.grad_b = grad_b;
  return out;
}

template <typename S>
void radam_step(Vec<S>& params, const Vec<S>& grads, RAdamState<S>& state,
                const RAdamConfig& cfg) {
  if (params.size() != grads.size()) {
    throw Error("radam_step: gradient size mismatch");
  }
  if (!grads.allFinite()) {
    throw Error("radam_step: non-finite gradient, step rejected");
  }
  if (state.t == 0) {
    state.m = Vec<S>::Zero(params.size());
    state.v = Vec<S>::Zero(params.size());
  } else if (state.m.size() != params.size()) {
    throw Error("radam_step: optimizer state size mismatch");
  }

  state.t += 1;
  state.beta1_pow *= cfg.beta1;
  state.beta2_pow *= cfg.beta2;
  const S b1 = static_cast<S>(cfg.beta1);
  const S b2 = static_cast<S>(cfg.beta2);
  state.m = b1 * state.m + (S(1) - b1) * grads;
  state.v.array() =
      b2 * state.v.array() + (S(1) - b2) * grads.array().square();

  // Bias-corrected first moment; the denominator is built from the same
  // cast values as the update above so t=1 cancels exactly.
  const S bc1 = S(1) - static_cast<S>(state.beta1_pow);
  const double rho_inf = 2.0 / (1.0 - cfg.beta2) - 1.0;
  const double rho_t =
      rho_inf - 2.0 * static_cast<double>(state.t) * state.beta2_pow /
                    (1.0 - state.beta2_pow);

  if (rho_t > 4.0) {
    const double r =
        std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                  ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
    const S bc2 = S(1) - static_cast<S>(state.beta2_pow);
    const S scale = static_cast<S>(cfg.lr * r);
    params.array() -=
        scale * (state.m.array() / bc1) /
        ((state.v.array() / bc2).sqrt() + static_cast<S>(cfg.eps));
  } else {
    params.array() -= static_cast<S>(cfg.lr) * state.m.array() / bc1;
  }
}

TrainDataset build_dataset(std::vector<TrainItem> items) {
  TrainDataset ds;
  std::set<std::string> names;
  for (const auto& it : items) {
    if (it.style.empty()) throw Error("build_dataset: item with empty style");
    if (it.base.n_frames() == 0) {
      throw Error("build_dataset: item with empty features");
    }
    names.insert(it.style);
  }
  ds.items = std::move(items);
  ds.styles.assign(names.begin(), names.end());
  ds.by_style.resize(ds.styles.size());
  for (Index i = 0; i < static_cast<Index>(ds.items.size()); ++i) {
    const auto pos = std::lower_bound(ds.styles.begin(), ds.styles.end(),
                                      ds.items[i].style) -
                     ds.styles.begin();
    ds.by_style[pos].push_back(i);
  }
  return ds;
}

StyleBatch sample_batch(const TrainDataset& ds, const TrainConfig& cfg,
                        Rng& rng) {
  const Index c = cfg.styles_per_batch, m = cfg.utts_per_style;
  if (c < 2 || m < 2) {
    throw Error("sample_batch: need styles_per_batch >= 2 and utts >= 2");
  }
  const Index n_styles = static_cast<Index>(ds.styles.size());
  if (n_styles < c) {
    throw Error("sample_batch: dataset has fewer styles than styles_per_batch");
  }

  // Styles without replacement via partial Fisher-Yates.
  std::vector<Index> order(n_styles);
  for (Index i = 0; i < n_styles; ++i) order[i] = i;
  if (n_styles > c) {
    for (Index i = 0; i < c; ++i) {
      const Index j =
          i + static_cast<Index>(randint(rng, n_styles - i));
      std::swap(order[i], order[j]);
    }
  }

  StyleBatch batch;
  batch.slices.reserve(c * m);
  for (Index ci = 0; ci < c; ++ci) {
    const Index si = order[ci];
    const auto& files = ds.by_style[si];
    if (files.empty()) {
      throw Error("sample_batch: style with zero files: " + ds.styles[si]);
    }
    batch.styles.push_back(ds.styles[si]);
    for (Index i = 0; i < m; ++i) {
      const Index item_idx =
          files[static_cast<std::size_t>(randint(rng, files.size()))];
      const TrainItem& item = ds.items[item_idx];
      const bool want = uniform01(rng) < cfg.perturb_prob;
      const bool perturb = want && !item.variants.empty();
      const MelSpectrogram* mel = &item.base;
      if (perturb) {
        mel = &item.variants[static_cast<std::size_t>(
            randint(rng, item.variants.size()))];
      }
      MelSpectrogram slice = random_slice(*mel, cfg.slice_duration, rng);
      batch.slices.push_back(std::move(slice.frames));
      batch.class_of.push_back(ci);
      batch.item_of.push_back(item_idx);
      batch.perturbed.push_back(perturb);
    }
  }
  return batch;
}

namespace {

std::string serialize_rng(const Rng& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

Rng deserialize_rng(const std::string& text) {
  Rng rng;
  std::istringstream ss(text);
  ss >> rng;
  if (ss.fail()) throw Error("invalid rng state in checkpoint");
  return rng;
}

void rebuild_beta_pows(double beta1, double beta2, std::int64_t t,
                       double* pow1, double* pow2) {
  *pow1 = 1.0;
  *pow2 = 1.0;
  for (std::int64_t i = 0; i < t; ++i) {
    *pow1 *= beta1;
    *pow2 *= beta2;
  }
}

// Moments are encoded at the state's native scalar width so a state read
// back from disk continues the run bit-identically.
template <typename S>
nlohmann::json opt_state_to_json(const RAdamState<S>& st) {
  return {{"t", st.t},
          {"m", base64_encode(st.m.data(), st.m.size() * sizeof(S))},
          {"v", base64_encode(st.v.data(), st.v.size() * sizeof(S))}};
}

template <typename S>
RAdamState<S> opt_state_from_json(const nlohmann::json& j) {
  RAdamState<S> st;
  st.t = j.at("t").get<std::int64_t>();
  const auto mb = base64_decode(j.at("m").get<std::string>());
  const auto vb = base64_decode(j.at("v").get<std::string>());
  if (mb.size() % sizeof(S) != 0 || vb.size() != mb.size()) {
    throw Error("invalid optimizer state in checkpoint");
  }
  const Index n = static_cast<Index>(mb.size() / sizeof(S));
  st.m.resize(n);
  st.v.resize(n);
  S f;
  for (Index i = 0; i < n; ++i) {
    std::memcpy(&f, mb.data() + i * sizeof(S), sizeof(S));
    st.m[i] = f;
    std::memcpy(&f, vb.data() + i * sizeof(S), sizeof(S));
    st.v[i] = f;
  }
  return st;
}

}  // namespace

TrainResult train_from(const TrainDataset& ds, const EncoderConfig& enc_cfg,
                       const TrainConfig& cfg, TrainState state,
                       const CheckpointCallback& on_checkpoint) {
  const ParamLayout layout(enc_cfg);
  if (state.params.size() != layout.total_params()) {
    throw Error("train: checkpoint does not match encoder config");
  }
  if (cfg.lr <= 0.0) throw Error("train: lr must be positive");
  if (static_cast<Index>(ds.styles.size()) < 2) {
    throw Error("train: dataset needs >= 2 styles");
  }

  // Beta powers are derived from t, not trusted from the checkpoint.
  rebuild_beta_pows(cfg.beta1, cfg.beta2, state.enc_opt.t,
                    &state.enc_opt.beta1_pow, &state.enc_opt.beta2_pow);
  rebuild_beta_pows(cfg.beta1, cfg.beta2, state.lp_opt.t,
                    &state.lp_opt.beta1_pow, &state.lp_opt.beta2_pow);

  Rng rng = deserialize_rng(state.rng_state);
  const RAdamConfig opt{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  ForwardCache<float> cache;
  TrainResult result;

  for (std::int64_t step = state.step + 1; step <= cfg.steps; ++step) {
    StyleBatch batch = sample_batch(ds, cfg, rng);
    const Matf emb = encoder_forward<float>(enc_cfg, state.params,
                                            batch.slices, cache);
    LossResult<float> loss_res = angular_proto_loss<float>(
        emb, cfg.styles_per_batch, cfg.utts_per_style, state.lp);
    const Vecf grads =
        encoder_backward<float>(enc_cfg, state.params, cache, loss_res.grad_emb);
    radam_step(state.params, grads, state.enc_opt, opt);

    Vecd lp_vec(2), lp_grad(2);
    lp_vec << state.lp.w, state.lp.b;
    lp_grad << loss_res.grad_w, loss_res.grad_b;
    radam_step(lp_vec, lp_grad, state.lp_opt, opt);
    state.lp.w = std::max(lp_vec[0], kMinLossScale);
    state.lp.b = lp_vec[1];
    state.step = step;

    if (cfg.log_interval > 0 &&
        (step % cfg.log_interval == 0 || step == cfg.steps)) {
      result.history.push_back({step, loss_res.loss, state.lp.w, state.lp.b});
    }
    if (on_checkpoint && cfg.checkpoint_interval > 0 &&
        step % cfg.checkpoint_interval == 0 && step < cfg.steps) {
      state.rng_state = serialize_rng(rng);
      on_checkpoint(state);
    }
  }

  state.rng_state = serialize_rng(rng);
  if (on_checkpoint) on_checkpoint(state);
  result.params = std::move(state.params);
  result.lp = state.lp;
  return result;
}

TrainResult train(const TrainDataset& ds, const EncoderConfig& enc_cfg,
                  const TrainConfig& cfg,
                  const CheckpointCallback& on_checkpoint) {
  TrainState state;
  state.params = init_params<float>(enc_cfg, cfg.seed);
  state.lp = LossParams{};
  state.step = 0;
  // The sampling stream is decoupled from the init stream.
  Rng rng(cfg.seed ^ 0x6a09e667f3bcc908ull);
  state.rng_state = serialize_rng(rng);
  return train_from(ds, enc_cfg, cfg, std::move(state), on_checkpoint);
}

void save_train_state(const TrainState& state, const EncoderConfig& enc_cfg,
                      const std::string& path) {
  save_encoder({enc_cfg, state.params}, path);
  nlohmann::json doc = {
      {"step", state.step},
      {"loss_params", {{"w", state.lp.w}, {"b", state.lp.b}}},
      {"enc_opt", opt_state_to_json(state.enc_opt)},
      {"lp_opt", opt_state_to_json(state.lp_opt)},
      {"rng", state.rng_state},
  };
  atomic_write_file(path + ".train.json", doc.dump(2) + "\n");
}

std::pair<TrainState, EncoderConfig> load_train_state(const std::string& path) {
  EncoderCheckpoint ckpt = load_encoder(path);
  const auto bytes = read_file_bytes(path + ".train.json");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid train sidecar " + path + ".train.json: " + e.what());
  }
  TrainState state;
  state.params = std::move(ckpt.params);
  state.step = doc.at("step").get<std::int64_t>();
  state.lp.w = doc.at("loss_params").at("w").get<double>();
  state.lp.b = doc.at("loss_params").at("b").get<double>();
  state.enc_opt = opt_state_from_json<float>(doc.at("enc_opt"));
  state.lp_opt = opt_state_from_json<double>(doc.at("lp_opt"));
  state.rng_state = doc.at("rng").get<std::string>();
  return {std::move(state), ckpt.config};
}

void save_history_csv(const std::vector<HistoryRow>& history,
                      const std::string& path) {
  std::string text = "step,loss,w,b\n";
  char line[128];
  for (const auto& row : history) {
    std::snprintf(line, sizeof(line), "%lld,%.10g,%.10g,%.10g\n",
                  static_cast<long long>(row.step), row.loss, row.w, row.b);
    text += line;
  }
  atomic_write_file(path, text);
}

template LossResult<float> angular_proto_loss<float>(const Matf&, Index, Index,
                                                     const LossParams&);
template LossResult<double> angular_proto_loss<double>(const Matd&, Index,
                                                       Index,
                                                       const LossParams&);
template void radam_step<float>(Vecf&, const Vecf&, RAdamState<float>&,
                                const RAdamConfig&);
template void radam_step<double>(Vecd&, const Vecd&, RAdamState<double>&,
                                 const RAdamConfig&);

}  // namespace stylekit

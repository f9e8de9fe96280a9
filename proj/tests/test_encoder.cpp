// tests/test_encoder.cpp

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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "stylekit/common.hpp"
#include "stylekit/encoder.hpp"
#include "stylekit/ioutil.hpp"

using namespace stylekit;

namespace {

std::string tmp_path(const std::string& name) {
  const auto dir =
      std::filesystem::temp_directory_path() / "stylekit_test_encoder";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.conv_channels = {4, 4};
  cfg.hidden = 8;
  cfg.embedding_dim = 8;
  cfg.n_mels = 10;
  return cfg;
}

template <typename S>
std::vector<Mat<S>> random_batch(Index frames, Index mels, Index batch,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<Mat<S>> out(static_cast<std::size_t>(batch));
  for (auto& m : out) {
    m.resize(frames, mels);
    for (Index j = 0; j < mels; ++j)
      for (Index i = 0; i < frames; ++i) m(i, j) = static_cast<S>(dist(rng));
  }
  return out;
}

// Scalar objective sum_b g(:,b) . emb(:,b) used by every gradient check;
// its parameter gradient is exactly what encoder_backward returns.
double objective(const EncoderConfig& cfg, const Vecd& params,
                 const std::vector<Matd>& mels, const Matd& g) {
  ForwardCache<double> cache;
  const Matd emb = encoder_forward<double>(cfg, params, mels, cache);
  return (emb.array() * g.array()).sum();
}

}  // namespace

TEST_CASE("forward produces unit-norm embeddings of the configured shape") {
  const EncoderConfig cfg = tiny_config();
  const ParamLayout layout(cfg);
  const Vecd params = init_params<double>(cfg, 7);
  const auto mels = random_batch<double>(12, cfg.n_mels, 3, 21);

  ForwardCache<double> cache;
  const Matd emb = encoder_forward<double>(cfg, params, mels, cache);

  CHECK(emb.rows() == cfg.embedding_dim);
  CHECK(emb.cols() == 3);
  for (Index b = 0; b < emb.cols(); ++b)
    CHECK(emb.col(b).norm() == doctest::Approx(1.0).epsilon(1e-12));
  // tanh squashes the pre-normalization activations into (-1, 1).
  CHECK((cache.a.array().abs() < 1.0).all());
}

TEST_CASE("conv stack geometry halves time and frequency per layer") {
  const EncoderConfig cfg = tiny_config();
  const ParamLayout layout(cfg);
  // 10 mels -> 5 -> 3 frequency bins after two stride-2 layers.
  CHECK(layout.conv_out_freq() == 3);
  CHECK(layout.gru_input() == 4 * 3);
  CHECK(conv_halve(80) == 40);
  CHECK(conv_halve(5) == 3);
  CHECK(conv_halve(1) == 1);

  const EncoderConfig full;  // defaults: 6 layers, 80 mels
  const ParamLayout full_layout(full);
  CHECK(full_layout.conv_out_freq() == 2);  // 80/2^6 rounded up at each step
  CHECK(full_layout.gru_input() == 128 * 2);
}

TEST_CASE("forward is deterministic and independent across batch items") {
  const EncoderConfig cfg = tiny_config();
  const Vecd params = init_params<double>(cfg, 3);
  const auto mels = random_batch<double>(12, cfg.n_mels, 3, 5);

  ForwardCache<double> c1, c2;
  const Matd e1 = encoder_forward<double>(cfg, params, mels, c1);
  const Matd e2 = encoder_forward<double>(cfg, params, mels, c2);
  CHECK((e1 - e2).cwiseAbs().maxCoeff() == 0.0);

  // Each column must match the single-item forward of that slice alone.
  for (std::size_t b = 0; b < mels.size(); ++b) {
    ForwardCache<double> cs;
    const Matd single = encoder_forward<double>(
        cfg, params, std::vector<Matd>{mels[b]}, cs);
    CHECK((single.col(0) - e1.col(static_cast<Index>(b))).norm() < 1e-12);
  }
}

TEST_CASE("cache buffers are reusable across differently sized batches") {
  const EncoderConfig cfg = tiny_config();
  const Vecd params = init_params<double>(cfg, 11);
  ForwardCache<double> cache;

  const auto big = random_batch<double>(16, cfg.n_mels, 4, 1);
  encoder_forward<double>(cfg, params, big, cache);

  const auto small = random_batch<double>(12, cfg.n_mels, 2, 2);
  const Matd via_reuse = encoder_forward<double>(cfg, params, small, cache);
  ForwardCache<double> fresh;
  const Matd via_fresh = encoder_forward<double>(cfg, params, small, fresh);
  CHECK((via_reuse - via_fresh).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
  const EncoderConfig cfg = tiny_config();
  const ParamLayout layout(cfg);
  Vecd params = init_params<double>(cfg, 17);
  const auto mels = random_batch<double>(12, cfg.n_mels, 2, 99);

  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matd g(cfg.embedding_dim, 2);
  for (Index j = 0; j < g.cols(); ++j)
    for (Index i = 0; i < g.rows(); ++i) g(i, j) = dist(rng);

  ForwardCache<double> cache;
  encoder_forward<double>(cfg, params, mels, cache);
  const Vecd analytic = encoder_backward<double>(cfg, params, cache, g);
  REQUIRE(analytic.size() == layout.total_params());

  const double eps = 1e-4;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& t : layout.tensors()) {
    for (Index i = 0; i < t.size(); ++i) {
      const Index p = t.offset + i;
      const double saved = params[p];
      params[p] = saved + eps;
      const double plus = objective(cfg, params, mels, g);
      params[p] = saved - eps;
      const double minus = objective(cfg, params, mels, g);
      params[p] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[p]),
                                     1e-8});
      const double rel = std::abs(analytic[p] - numeric) / denom;
      if (rel > worst) {
        worst = rel;
        worst_name = t.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  INFO("worst tensor entry: ", worst_name);
  CHECK(worst < 1e-3);
  // Double precision should do far better than the acceptance bound.
  CHECK(worst < 1e-6);
}

TEST_CASE("backward of a zero upstream gradient is exactly zero") {
  const EncoderConfig cfg = tiny_config();
  const Vecd params = init_params<double>(cfg, 29);
  const auto mels = random_batch<double>(12, cfg.n_mels, 2, 4);
  ForwardCache<double> cache;
  encoder_forward<double>(cfg, params, mels, cache);
  const Matd zero = Matd::Zero(cfg.embedding_dim, 2);
  const Vecd grad = encoder_backward<double>(cfg, params, cache, zero);
  CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a dead ReLU channel receives no weight gradient") {
  const EncoderConfig cfg = tiny_config();
  const ParamLayout layout(cfg);
  Vecd params = init_params<double>(cfg, 31);
  // Drive one second-layer channel's pre-activation hopelessly negative so
  // the ReLU zeroes it for every position: its incoming weights and bias can
  // then no longer influence the output.
  const auto& w2 = layout.find("conv2.weight");
  const auto& b2 = layout.find("conv2.bias");
  const Index dead = 1;
  params[b2.offset + dead] = -1e6;

  const auto mels = random_batch<double>(12, cfg.n_mels, 2, 6);
  ForwardCache<double> cache;
  encoder_forward<double>(cfg, params, mels, cache);
  Matd g = Matd::Constant(cfg.embedding_dim, 2, 0.3);
  const Vecd grad = encoder_backward<double>(cfg, params, cache, g);

  const auto grad_w2 = layout.view(grad, w2);
  CHECK(grad_w2.row(dead).cwiseAbs().maxCoeff() == 0.0);
  CHECK(grad[b2.offset + dead] == 0.0);
  // A live sibling channel still learns.
  CHECK(grad_w2.row(0).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("small input perturbations produce small embedding changes") {
  const EncoderConfig cfg = tiny_config();
  const Vecd params = init_params<double>(cfg, 41);
  auto mels = random_batch<double>(12, cfg.n_mels, 1, 8);
  ForwardCache<double> cache;
  const Matd base = encoder_forward<double>(cfg, params, mels, cache);

  mels[0].array() += 1e-6;
  ForwardCache<double> cache2;
  const Matd moved = encoder_forward<double>(cfg, params, mels, cache2);
  CHECK((moved - base).norm() < 1e-2);
  CHECK((moved - base).norm() > 0.0);
}

TEST_CASE("init draws He-uniform weights and zero biases, keyed by seed") {
  const EncoderConfig cfg = tiny_config();
  const ParamLayout layout(cfg);
  const Vecd a = init_params<double>(cfg, 12345);
  const Vecd b = init_params<double>(cfg, 12345);
  const Vecd c = init_params<double>(cfg, 54321);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);

  for (const auto& t : layout.tensors()) {
    const auto view = layout.view(a, t);
    if (t.name.find(".bias") != std::string::npos ||
        t.name.rfind("gru.b_", 0) == 0) {
      CHECK(view.cwiseAbs().maxCoeff() == 0.0);
      continue;
    }
    double bound = 0.0;
    if (t.name.rfind("gru.w_h", 0) == 0) {
      bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    } else {
      bound = std::sqrt(6.0 / static_cast<double>(t.cols));
    }
    INFO("tensor: ", t.name);
    CHECK(view.cwiseAbs().maxCoeff() <= bound);
    // Non-degenerate: the draws actually fill a good part of the range.
    CHECK(view.cwiseAbs().maxCoeff() > 0.5 * bound);
  }
}

TEST_CASE("float parameters are the cast of the double draws") {
  const EncoderConfig cfg = tiny_config();
  const Vecd d = init_params<double>(cfg, 777);
  const Vecf f = init_params<float>(cfg, 777);
  REQUIRE(d.size() == f.size());
  for (Index i = 0; i < d.size(); ++i)
    CHECK(f[i] == static_cast<float>(d[i]));
}

TEST_CASE("float and double forwards agree to float precision") {
  const EncoderConfig cfg = tiny_config();
  const Vecd pd = init_params<double>(cfg, 13);
  const Vecf pf = init_params<float>(cfg, 13);
  const auto md = random_batch<double>(12, cfg.n_mels, 2, 15);
  std::vector<Matf> mf;
  for (const auto& m : md) mf.push_back(m.cast<float>());

  ForwardCache<double> cd;
  ForwardCache<float> cf;
  const Matd ed = encoder_forward<double>(cfg, pd, md, cd);
  const Matf ef = encoder_forward<float>(cfg, pf, mf, cf);
  CHECK((ed.cast<float>() - ef).cwiseAbs().maxCoeff() < 1e-4f);
}

TEST_CASE("checkpoints round-trip parameters and config exactly") {
  EncoderConfig cfg = tiny_config();
  EncoderCheckpoint ckpt;
  ckpt.config = cfg;
  ckpt.params = init_params<float>(cfg, 2026);
  const auto path = tmp_path("roundtrip.stye");
  save_encoder(ckpt, path);

  const EncoderCheckpoint back = load_encoder(path);
  CHECK(back.config == cfg);
  REQUIRE(back.params.size() == ckpt.params.size());
  CHECK((back.params - ckpt.params).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("checkpoint loader rejects malformed files") {
  SUBCASE("wrong magic") {
    const auto path = tmp_path("wrong_magic.stye");
    atomic_write_file(path, std::string("NOPE") + std::string(64, '\0'));
    CHECK_THROWS_WITH_AS(load_encoder(path),
                         doctest::Contains("magic"), std::runtime_error);
  }
  SUBCASE("truncated params") {
    EncoderCheckpoint ckpt;
    ckpt.config = tiny_config();
    ckpt.params = init_params<float>(ckpt.config, 1);
    const auto path = tmp_path("truncated.stye");
    save_encoder(ckpt, path);
    auto bytes = read_file_bytes(path);
    bytes.resize(bytes.size() - 8);
    atomic_write_file(path, bytes);
    CHECK_THROWS_AS(load_encoder(path), std::runtime_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_encoder(tmp_path("absent.stye")),
                    std::runtime_error);
  }
}

TEST_CASE("config mismatch is reported as a distinct error") {
  const EncoderConfig expected = tiny_config();
  EncoderConfig actual = expected;
  CHECK_NOTHROW(check_config_match(expected, actual));
  actual.hidden = 16;
  CHECK_THROWS_WITH_AS(check_config_match(expected, actual),
                       doctest::Contains("config mismatch"),
                       std::runtime_error);
  actual = expected;
  actual.conv_channels = {4, 8};
  CHECK_THROWS_AS(check_config_match(expected, actual), std::runtime_error);
  actual = expected;
  actual.n_mels = 12;
  CHECK_THROWS_AS(check_config_match(expected, actual), std::runtime_error);
}

TEST_CASE("forward validates input shapes") {
  const EncoderConfig cfg = tiny_config();
  const Vecd params = init_params<double>(cfg, 1);
  ForwardCache<double> cache;

  SUBCASE("empty batch") {
    CHECK_THROWS_AS(
        encoder_forward<double>(cfg, params, std::vector<Matd>{}, cache),
        std::runtime_error);
  }
  SUBCASE("wrong mel count") {
    auto mels = random_batch<double>(12, cfg.n_mels + 1, 1, 3);
    CHECK_THROWS_AS(encoder_forward<double>(cfg, params, mels, cache),
                    std::runtime_error);
  }
  SUBCASE("mismatched frame counts within a batch") {
    auto mels = random_batch<double>(12, cfg.n_mels, 2, 3);
    mels[1].conservativeResize(14, Eigen::NoChange);
    CHECK_THROWS_AS(encoder_forward<double>(cfg, params, mels, cache),
                    std::runtime_error);
  }
  SUBCASE("wrong parameter vector length") {
    Vecd bad = params.head(params.size() - 1);
    auto mels = random_batch<double>(12, cfg.n_mels, 1, 3);
    CHECK_THROWS_AS(encoder_forward<double>(cfg, bad, mels, cache),
                    std::runtime_error);
  }
}

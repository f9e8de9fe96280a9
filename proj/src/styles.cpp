// src/styles.cpp

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

#include "stylekit/styles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "json.hpp"
#include "stylekit/ioutil.hpp"

namespace stylekit {

namespace {

std::vector<std::string> sorted_unique(const std::vector<std::string>& v) {
  std::set<std::string> s(v.begin(), v.end());
  return {s.begin(), s.end()};
}

Index label_index(const std::vector<std::string>& labels,
                  const std::string& label) {
  const auto it = std::lower_bound(labels.begin(), labels.end(), label);
  return static_cast<Index>(it - labels.begin());
}

}  // namespace

CentroidSet compute_centroids(const Matd& emb,
                              const std::vector<std::string>& labels) {
  if (emb.cols() != static_cast<Index>(labels.size()) || emb.cols() == 0) {
    throw Error("compute_centroids: label/embedding count mismatch or empty");
  }
  CentroidSet out;
  out.labels = sorted_unique(labels);
  out.centroids = Matd::Zero(emb.rows(), static_cast<Index>(out.labels.size()));
  out.counts.assign(out.labels.size(), 0);
  for (Index i = 0; i < emb.cols(); ++i) {
    const Index j = label_index(out.labels, labels[i]);
    out.centroids.col(j) += emb.col(i);
    out.counts[j] += 1;
  }
  for (Index j = 0; j < out.n_labels(); ++j) {
    out.centroids.col(j) /= static_cast<double>(out.counts[j]);
    const double norm = out.centroids.col(j).norm();
    if (norm < 1e-12) {
      throw Error("compute_centroids: zero-norm centroid for label " +
                  out.labels[j]);
    }
    out.centroids.col(j) /= norm;
  }
  return out;
}

std::pair<std::string, Vecd> classify_nearest_centroid(const Vecd& e,
                                                       const CentroidSet& c) {
  if (c.n_labels() == 0) {
    throw Error("classify_nearest_centroid: empty centroid set");
  }
  if (e.size() != c.centroids.rows()) {
    throw Error("classify_nearest_centroid: dimension mismatch");
  }
  const double qn = e.norm();
  if (qn < 1e-12) throw Error("classify_nearest_centroid: zero query vector");
  Vecd scores(c.n_labels());
  for (Index j = 0; j < c.n_labels(); ++j) {
    scores[j] = e.dot(c.centroids.col(j)) / qn;  // centroids are unit norm
  }
  Index best = 0;
  for (Index j = 1; j < c.n_labels(); ++j) {
    if (scores[j] > scores[best]) best = j;  // strict: ties keep first label
  }
  return {c.labels[best], scores};
}

double secs(const Vecd& a, const Vecd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) throw Error("secs: zero vector");
  return a.dot(b) / (na * nb);
}

std::vector<bool> stratified_holdout(const std::vector<std::string>& keys,
                                     double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw Error("stratified_holdout: fraction must be in [0, 1)");
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    groups[keys[i]].push_back(i);
  }
  std::vector<bool> held(keys.size(), false);
  for (auto& [key, idx] : groups) {
    const std::size_t n = idx.size();
    if (n < 2 || fraction == 0.0) continue;
    std::size_t take = static_cast<std::size_t>(
        std::lround(fraction * static_cast<double>(n)));
    take = std::clamp<std::size_t>(take, 1, n - 1);
    Rng rng(seed ^ fnv1a64(key));
    for (std::size_t i = 0; i + 1 < n; ++i) {  // Fisher-Yates
      const std::size_t j = i + static_cast<std::size_t>(randint(rng, n - i));
      std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < take; ++i) held[idx[i]] = true;
  }
  return held;
}

LeakageReport leakage_probe(const Matd& emb,
                            const std::vector<std::string>& styles,
                            const std::vector<std::string>& speakers,
                            double held_out_fraction, std::uint64_t seed) {
  const Index n = emb.cols();
  if (n != static_cast<Index>(styles.size()) ||
      n != static_cast<Index>(speakers.size())) {
    throw Error("leakage_probe: label count mismatch");
  }
  LeakageReport rep;
  rep.style_labels = sorted_unique(styles);
  rep.speaker_labels = sorted_unique(speakers);
  if (rep.style_labels.size() < 2) {
    throw Error("leakage_probe: need >= 2 styles");
  }
  if (rep.speaker_labels.size() < 2) {
    throw Error("leakage_probe: need >= 2 speakers");
  }

  // Split stratified by the (style, speaker) pair so both labelings are
  // represented on both sides.
  std::vector<std::string> pair_keys(n);
  for (Index i = 0; i < n; ++i) {
    pair_keys[i] = styles[i] + "\t" + speakers[i];
  }
  const std::vector<bool> held =
      stratified_holdout(pair_keys, held_out_fraction, seed);

  std::vector<Index> train_idx, test_idx;
  for (Index i = 0; i < n; ++i) {
    (held[i] ? test_idx : train_idx).push_back(i);
  }
  if (train_idx.empty() || test_idx.empty()) {
    throw Error("leakage_probe: split left one side empty");
  }
  auto has_all = [&](const std::vector<std::string>& labels,
                     const std::vector<Index>& side) {
    std::set<std::string> seen;
    for (Index i : side) seen.insert(labels[i]);
    return seen.size() ==
           std::set<std::string>(labels.begin(), labels.end()).size();
  };
  if (!has_all(styles, train_idx) || !has_all(styles, test_idx) ||
      !has_all(speakers, train_idx) || !has_all(speakers, test_idx)) {
    throw Error("leakage_probe: a label is missing from one split side");
  }

  Matd train_emb(emb.rows(), static_cast<Index>(train_idx.size()));
  std::vector<std::string> train_styles, train_speakers;
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    train_emb.col(static_cast<Index>(i)) = emb.col(train_idx[i]);
    train_styles.push_back(styles[train_idx[i]]);
    train_speakers.push_back(speakers[train_idx[i]]);
  }
  const CentroidSet style_c = compute_centroids(train_emb, train_styles);
  const CentroidSet speaker_c = compute_centroids(train_emb, train_speakers);

  const Index ns = static_cast<Index>(rep.style_labels.size());
  const Index np = static_cast<Index>(rep.speaker_labels.size());
  rep.style_confusion = Eigen::MatrixXi::Zero(ns, ns);
  rep.speaker_confusion = Eigen::MatrixXi::Zero(np, np);
  Index style_hits = 0, speaker_hits = 0;
  for (Index i : test_idx) {
    const auto [ps, _s] = classify_nearest_centroid(emb.col(i), style_c);
    const auto [pp, _p] = classify_nearest_centroid(emb.col(i), speaker_c);
    const Index ts = label_index(rep.style_labels, styles[i]);
    const Index tp = label_index(rep.speaker_labels, speakers[i]);
    rep.style_confusion(ts, label_index(rep.style_labels, ps)) += 1;
    rep.speaker_confusion(tp, label_index(rep.speaker_labels, pp)) += 1;
    if (ps == styles[i]) ++style_hits;
    if (pp == speakers[i]) ++speaker_hits;
  }
  rep.style_accuracy =
      static_cast<double>(style_hits) / static_cast<double>(test_idx.size());
  rep.speaker_accuracy =
      static_cast<double>(speaker_hits) / static_cast<double>(test_idx.size());
  return rep;
}

Projection2D pca_project(const Matd& emb) {
  if (emb.cols() < 3 || emb.rows() < 2) {
    throw Error("pca_project: need >= 3 embeddings of dim >= 2");
  }
  const Vecd mean = emb.rowwise().mean();
  const Matd centered = emb.colwise() - mean;
  const Matd cov =
      centered * centered.transpose() / static_cast<double>(emb.cols());
  const double total = cov.trace();
  if (total < 1e-20) throw Error("pca_project: zero-variance data");

  Eigen::SelfAdjointEigenSolver<Matd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw Error("pca_project: eigendecomposition failed");
  }
  // Eigenvalues come sorted ascending; take the top two.
  const Index last = cov.rows() - 1;
  Vecd v1 = solver.eigenvectors().col(last);
  Vecd v2 = solver.eigenvectors().col(last - 1);
  auto canonicalize = [](Vecd& v) {
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
  };
  canonicalize(v1);
  canonicalize(v2);

  Projection2D out;
  out.coords.resize(emb.cols(), 2);
  out.coords.col(0) = centered.transpose() * v1;
  out.coords.col(1) = centered.transpose() * v2;
  out.explained_1 = std::max(0.0, solver.eigenvalues()[last]) / total;
  out.explained_2 = std::max(0.0, solver.eigenvalues()[last - 1]) / total;
  return out;
}

namespace {
constexpr std::uint16_t kEmbeddingFormatVersion = 1;
}  // namespace

void save_embeddings(const EmbeddingSet& set, const std::string& path) {
  if (set.count() == 0) throw Error("save_embeddings: empty set");
  if (set.style.size() != static_cast<std::size_t>(set.count()) ||
      set.speaker.size() != static_cast<std::size_t>(set.count()) ||
      set.synthetic.size() != static_cast<std::size_t>(set.count())) {
    throw Error("save_embeddings: metadata count mismatch");
  }
  const auto style_labels = sorted_unique(set.style);
  const auto speaker_labels = sorted_unique(set.speaker);

  ByteWriter bw;
  bw.raw("STYB", 4);
  bw.u16(kEmbeddingFormatVersion);
  bw.u16(static_cast<std::uint16_t>(set.dim()));
  bw.u32(static_cast<std::uint32_t>(set.count()));
  for (Index i = 0; i < set.count(); ++i) {
    for (Index d = 0; d < set.dim(); ++d) {
      bw.f32(set.embeddings(d, i));
    }
    bw.u16(static_cast<std::uint16_t>(label_index(style_labels, set.style[i])));
    bw.u16(static_cast<std::uint16_t>(
        label_index(speaker_labels, set.speaker[i])));
    bw.u8(set.synthetic[i] ? 1 : 0);
  }
  atomic_write_file(path, bw.bytes());

  nlohmann::json sidecar = {{"styles", style_labels},
                            {"speakers", speaker_labels}};
  atomic_write_file(path + ".labels.json", sidecar.dump(2) + "\n");
}

EmbeddingSet load_embeddings(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, "embeddings file " + path);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "STYB") {
    throw Error("not an embeddings file (bad magic): " + path);
  }
  const std::uint16_t version = r.u16();
  if (version != kEmbeddingFormatVersion) {
    throw Error("unsupported embeddings version " + std::to_string(version) +
                ": " + path);
  }
  const Index dim = r.u16();
  const Index count = r.u32();

  const auto side_bytes = read_file_bytes(path + ".labels.json");
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(side_bytes.begin(), side_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid labels sidecar for " + path + ": " + e.what());
  }
  const auto style_labels =
      sidecar.at("styles").get<std::vector<std::string>>();
  const auto speaker_labels =
      sidecar.at("speakers").get<std::vector<std::string>>();

  EmbeddingSet set;
  set.embeddings.resize(dim, count);
  set.style.resize(count);
  set.speaker.resize(count);
  set.synthetic.resize(count);
  for (Index i = 0; i < count; ++i) {
    for (Index d = 0; d < dim; ++d) {
      set.embeddings(d, i) = r.f32();
    }
    const std::uint16_t si = r.u16();
    const std::uint16_t pi = r.u16();
    if (si >= style_labels.size() || pi >= speaker_labels.size()) {
      throw Error("embeddings file refers to unknown label id: " + path);
    }
    set.style[i] = style_labels[si];
    set.speaker[i] = speaker_labels[pi];
    set.synthetic[i] = r.u8() != 0;
  }
  return set;
}

}  // namespace stylekit

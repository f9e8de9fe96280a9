// include/stylekit/styles.hpp

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

#ifndef STYLEKIT_STYLES_HPP
#define STYLEKIT_STYLES_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stylekit/common.hpp"

namespace stylekit {

// Embeddings with per-column provenance. Columns are utterances.
struct EmbeddingSet {
  Matf embeddings;  // dim x count
  std::vector<std::string> style;
  std::vector<std::string> speaker;
  std::vector<bool> synthetic;

  Index count() const { return embeddings.cols(); }
  Index dim() const { return embeddings.rows(); }
};

// Per-label mean embeddings, L2-normalized, labels sorted.
struct CentroidSet {
  std::vector<std::string> labels;
  Matd centroids;  // dim x n_labels, unit columns
  std::vector<Index> counts;

  Index n_labels() const { return centroids.cols(); }
};

CentroidSet compute_centroids(const Matd& emb,
                              const std::vector<std::string>& labels);

// Argmax of cosine similarity; ties go to the lexicographically first label
// (labels are stored sorted). Scores returned per label in label order.
std::pair<std::string, Vecd> classify_nearest_centroid(const Vecd& e,
                                                       const CentroidSet& c);

// Speaker-embedding cosine similarity. Errors on a zero vector.
double secs(const Vecd& a, const Vecd& b);

struct LeakageReport {
  double style_accuracy = 0.0;
  double speaker_accuracy = 0.0;
  std::vector<std::string> style_labels, speaker_labels;
  // Rows are true labels, columns predictions, over the held-out split.
  Eigen::MatrixXi style_confusion, speaker_confusion;
};

// Deterministic per-key holdout: indices sharing a key are shuffled with a
// key-derived seed and round(fraction * n) of them (clamped to [1, n-1]
// when n >= 2, 0 when n == 1) marked held-out (true).
std::vector<bool> stratified_holdout(const std::vector<std::string>& keys,
                                     double fraction, std::uint64_t seed);

// Fits style and speaker centroids on one side of a stratified split and
// reports nearest-centroid accuracy for both labelings on the other side.
// High speaker accuracy means the embeddings leak speaker identity.
LeakageReport leakage_probe(const Matd& emb,
                            const std::vector<std::string>& styles,
                            const std::vector<std::string>& speakers,
                            double held_out_fraction, std::uint64_t seed);

struct Projection2D {
  Matd coords;  // count x 2
  double explained_1 = 0.0;  // variance fractions, component 1 >= 2
  double explained_2 = 0.0;
};

// Mean-centered top-2 PCA. Component signs are canonicalized so the
// largest-magnitude loading is positive.
Projection2D pca_project(const Matd& emb);

// Embeddings file, magic "STYB": version u16, dim u16, count u32, then per
// record dim f32 values + style id u16 + speaker id u16 + synthetic u8.
// Ids index the sorted label lists in the "<path>.labels.json" sidecar.
void save_embeddings(const EmbeddingSet& set, const std::string& path);
EmbeddingSet load_embeddings(const std::string& path);

}  // namespace stylekit

#endif  // STYLEKIT_STYLES_HPP

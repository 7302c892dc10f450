// Copyright 2026 The EGT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EGT_HEADS_HPP_
#define EGT_HEADS_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "egt/lrp.hpp"
#include "egt/model.hpp"
#include "egt/network.hpp"
#include "egt/tensor.hpp"

namespace egt::heads {

// Class-averaged support embeddings, one per episode class.
struct ClassPrototypes {
  std::vector<Tensor> prototypes;

  std::size_t size() const { return prototypes.size(); }
  const Tensor& operator[](std::size_t k) const { return prototypes[k]; }
};

// support: [S, ...] embeddings; labels: episode-local class per row, in
// [0, way). Every class needs at least one row.
ClassPrototypes make_prototypes(const Tensor& support,
                                std::span<const int> labels, std::size_t way);

struct HeadOutput {
  std::vector<double> scores;
  std::vector<double> probabilities;
  std::vector<double> relevance_init;
};

// Norms below this are raised to it, so an all-zero embedding scores 0.
inline constexpr double kCosineNormFloor = 1e-8;

// Cosine similarity of the query with every prototype,
// <q, p> / (max(|q|, floor) max(|p|, floor)).
std::vector<double> cosine_scores(const Tensor& query,
                                  const ClassPrototypes& protos);

// softmax(beta * scores), shifted by the maximum score.
std::vector<double> scaled_softmax(std::span<const double> scores, double beta);

// R_c = log(P_c / (1 - P_c) * (K - 1)). P is clamped to
// [DBL_MIN, 1 - 1e-7] so saturated heads give finite relevance. Values within
// one rounding of 1/K give exactly 0.
std::vector<double> relevance_init_nonparametric(std::span<const double> probs);

// Logits are the output relevance of a parametric classifier.
std::vector<double> relevance_init_parametric(std::span<const double> logits);

HeadOutput cosine_head(const Tensor& query, const ClassPrototypes& protos,
                       double beta);

// Channel concatenation of (prototype, query) pairs for every query row and
// class: row q * K + k holds [protos[k]; queries[q]].
Tensor make_pairs(const Tensor& queries, const ClassPrototypes& protos);

struct RelationPass {
  Tensor pairs;  // [K, 2C, h, w]
  ForwardTrace trace;
  std::vector<double> logits;
};

RelationPass relation_head(const Tensor& query, const ClassPrototypes& protos,
                           const Network& relation_net);

HeadOutput relation_output(const RelationPass& pass);

// Epsilon rule over the target-class dot product <q, p_hat>, the prototype
// direction acting as fixed weights. Result has the query's shape.
Tensor explain_cosine(const Tensor& query, const ClassPrototypes& protos,
                      std::size_t target, double target_relevance,
                      double epsilon);

// Relevance of the whole (prototype, query) pair of the target class.
Tensor explain_relation_pair(const Network& relation_net,
                             const RelationPass& pass, std::size_t target,
                             double target_relevance, const lrp::LrpConfig& cfg,
                             bool allow_zero_epsilon = false);

// Relevance of the classifier input f_p (the query feature) for one target
// class. For the relation head `pass` must be the recorded relation pass of
// this query; the query half of the target pair is returned.
Tensor lrp_through_head(const FewShotModel& model, const Tensor& query,
                        const ClassPrototypes& protos,
                        std::span<const double> relevance_init,
                        std::size_t target, const lrp::LrpConfig& cfg,
                        const RelationPass* pass = nullptr);

std::size_t argmax(std::span<const double> values);

}  // namespace egt::heads

#endif  // EGT_HEADS_HPP_

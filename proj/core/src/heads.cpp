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

#include "egt/heads.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <string>

#include "egt/errors.hpp"

namespace egt::heads {
namespace {

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

}  // namespace

ClassPrototypes make_prototypes(const Tensor& support,
                                std::span<const int> labels, std::size_t way) {
  if (support.rank() < 2 || support.dim(0) != labels.size()) {
    throw ContractError("prototypes: " + std::to_string(labels.size()) +
                        " labels for support " + shape_to_string(support.shape()));
  }
  const Shape feat(support.shape().begin() + 1, support.shape().end());
  const std::size_t n = shape_numel(feat);
  ClassPrototypes out;
  out.prototypes.assign(way, Tensor(feat));
  std::vector<std::size_t> counts(way, 0);
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (labels[s] < 0 || static_cast<std::size_t>(labels[s]) >= way) {
      throw ContractError("prototypes: label " + std::to_string(labels[s]) +
                          " outside [0, " + std::to_string(way) + ")");
    }
    Tensor& p = out.prototypes[static_cast<std::size_t>(labels[s])];
    const double* row = support.data() + s * n;
    for (std::size_t i = 0; i < n; ++i) p[i] += row[i];
    ++counts[static_cast<std::size_t>(labels[s])];
  }
  for (std::size_t k = 0; k < way; ++k) {
    if (counts[k] == 0) {
      throw ContractError("prototypes: class " + std::to_string(k) +
                          " has no support rows");
    }
    const double inv = 1.0 / static_cast<double>(counts[k]);
    for (double& v : out.prototypes[k].values()) v *= inv;
  }
  return out;
}

std::vector<double> cosine_scores(const Tensor& query,
                                  const ClassPrototypes& protos) {
  const double qn = std::max(norm(query), kCosineNormFloor);
  std::vector<double> scores(protos.size());
  for (std::size_t k = 0; k < protos.size(); ++k) {
    if (protos[k].size() != query.size()) {
      throw ContractError("cosine head: prototype " + std::to_string(k) +
                          " has dimension " + std::to_string(protos[k].size()) +
                          ", query " + std::to_string(query.size()));
    }
    const double pn = std::max(norm(protos[k]), kCosineNormFloor);
    scores[k] = dot(query, protos[k]) / (qn * pn);
  }
  return scores;
}

std::vector<double> scaled_softmax(std::span<const double> scores, double beta) {
  if (scores.empty()) return {};
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    p[k] = std::exp(beta * (scores[k] - top));
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> relevance_init_nonparametric(std::span<const double> probs) {
  const double k = static_cast<double>(probs.size());
  std::vector<double> r(probs.size());
  for (std::size_t c = 0; c < probs.size(); ++c) {
    const double p = std::clamp(probs[c], DBL_MIN, 1.0 - 1e-7);
    // k p - 1 with a single rounding; its sign is exact.
    const double x = std::fma(k, p, -1.0);
    if (std::abs(x) <= DBL_EPSILON) {
      r[c] = 0.0;  // p is 1/K up to rounding
    } else if (x > -0.5) {
      r[c] = std::log1p(x / (1.0 - p));
    } else {
      r[c] = std::log(p / (1.0 - p) * (k - 1.0));
    }
  }
  return r;
}

std::vector<double> relevance_init_parametric(std::span<const double> logits) {
  return {logits.begin(), logits.end()};
}

HeadOutput cosine_head(const Tensor& query, const ClassPrototypes& protos,
                       double beta) {
  HeadOutput out;
  out.scores = cosine_scores(query, protos);
  out.probabilities = scaled_softmax(out.scores, beta);
  out.relevance_init = relevance_init_nonparametric(out.probabilities);
  return out;
}

Tensor make_pairs(const Tensor& queries, const ClassPrototypes& protos) {
  if (protos.size() == 0) throw ContractError("relation head: no prototypes");
  const Shape& feat = protos[0].shape();
  if (feat.size() != 3 || queries.rank() != 4 ||
      Shape(queries.shape().begin() + 1, queries.shape().end()) != feat) {
    throw ContractError("relation head: queries " +
                        shape_to_string(queries.shape()) +
                        " do not match prototypes " + shape_to_string(feat));
  }
  const std::size_t nq = queries.dim(0);
  const std::size_t k = protos.size();
  const std::size_t n = shape_numel(feat);
  Tensor pairs({nq * k, 2 * feat[0], feat[1], feat[2]});
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t c = 0; c < k; ++c) {
      if (protos[c].shape() != feat) {
        throw ContractError("relation head: prototype shapes differ");
      }
      double* dst = pairs.data() + (q * k + c) * 2 * n;
      std::copy(protos[c].data(), protos[c].data() + n, dst);
      std::copy(queries.data() + q * n, queries.data() + (q + 1) * n, dst + n);
    }
  }
  return pairs;
}

RelationPass relation_head(const Tensor& query, const ClassPrototypes& protos,
                           const Network& relation_net) {
  Shape qs{1};
  qs.insert(qs.end(), query.shape().begin(), query.shape().end());
  RelationPass pass;
  pass.pairs = make_pairs(query.reshaped(qs), protos);
  ForwardResult fr = forward(relation_net, pass.pairs, /*record=*/true);
  pass.trace = std::move(*fr.trace);
  pass.logits.assign(fr.output.vec().begin(), fr.output.vec().end());
  return pass;
}

HeadOutput relation_output(const RelationPass& pass) {
  HeadOutput out;
  out.scores = pass.logits;
  out.probabilities = scaled_softmax(pass.logits, 1.0);
  out.relevance_init = relevance_init_parametric(pass.logits);
  return out;
}

Tensor explain_cosine(const Tensor& query, const ClassPrototypes& protos,
                      std::size_t target, double target_relevance,
                      double epsilon) {
  if (target >= protos.size()) throw ContractError("explain: target class out of range");
  const Tensor& p = protos[target];
  require_same_shape(query, p, "cosine explanation");
  const double pn = std::max(norm(p), kCosineNormFloor);
  double z = 0.0;
  for (std::size_t i = 0; i < query.size(); ++i) z += query[i] * (p[i] / pn);
  const double den = z + epsilon * (z >= 0.0 ? 1.0 : -1.0);
  Tensor rel(query.shape());
  if (den == 0.0) return rel;
  const double scale = target_relevance / den;
  for (std::size_t i = 0; i < query.size(); ++i) {
    rel[i] = scale * (query[i] * (p[i] / pn));
  }
  return rel;
}

Tensor explain_relation_pair(const Network& relation_net,
                             const RelationPass& pass, std::size_t target,
                             double target_relevance, const lrp::LrpConfig& cfg,
                             bool allow_zero_epsilon) {
  const std::size_t k = pass.logits.size();
  if (target >= k) throw ContractError("explain: target class out of range");
  Tensor out_rel({k, 1});
  out_rel[target] = target_relevance;
  const lrp::RelevanceTrace rt =
      lrp::lrp_backward(relation_net, pass.trace, out_rel, cfg, allow_zero_epsilon);
  return rt.input_relevance().slice(target);
}

Tensor lrp_through_head(const FewShotModel& model, const Tensor& query,
                        const ClassPrototypes& protos,
                        std::span<const double> relevance_init,
                        std::size_t target, const lrp::LrpConfig& cfg,
                        const RelationPass* pass) {
  validate_head_kind(model.head);
  if (relevance_init.size() != protos.size() || target >= protos.size()) {
    throw ContractError("explain: relevance init must hold one value per class");
  }
  if (model.head == HeadKind::kCosine) {
    cfg.validate();
    return explain_cosine(query, protos, target, relevance_init[target],
                          cfg.epsilon);
  }
  RelationPass local;
  if (pass == nullptr) {
    local = relation_head(query, protos, model.relation);
    pass = &local;
  }
  const Tensor pair = explain_relation_pair(model.relation, *pass, target,
                                            relevance_init[target], cfg);
  const std::size_t n = query.size();
  return Tensor(query.shape(),
                AlignedVector(pair.vec().begin() + static_cast<long>(n),
                                    pair.vec().end()));
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(
      std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace egt::heads

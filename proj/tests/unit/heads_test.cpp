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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "egt/errors.hpp"
#include "egt/heads.hpp"
#include "oracles.hpp"

namespace egt::heads {
namespace {

ClassPrototypes protos_of(std::vector<Tensor> ps) { return ClassPrototypes{std::move(ps)}; }

TEST(Prototypes, ClassMeans) {
  const Tensor support({4, 2}, std::vector<double>{1, 2, 3, 4, 10, 20, 5, 6});
  const std::vector<int> labels{0, 0, 1, 0};
  const ClassPrototypes p = make_prototypes(support, labels, 2);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0], Tensor::from({3, 4}));
  EXPECT_EQ(p[1], Tensor::from({10, 20}));
  EXPECT_THROW(make_prototypes(support, labels, 3), ContractError);
}

TEST(CosineScores, Examples) {
  const Tensor q = Tensor::from({1, 0});
  const auto s = cosine_scores(q, protos_of({Tensor::from({1, 0}), Tensor::from({0, 3}),
                                             Tensor::from({1, 1})}));
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_DOUBLE_EQ(s[1], 0.0);
  EXPECT_NEAR(s[2], 1.0 / std::sqrt(2.0), 1e-15);
  // All-zero embeddings score 0 instead of dividing by zero.
  EXPECT_EQ(cosine_scores(Tensor({2}), protos_of({Tensor::from({1, 0})})), std::vector<double>{0.0});
  EXPECT_EQ(cosine_scores(q, protos_of({Tensor({2})})), std::vector<double>{0.0});
  // Norms under the floor are raised to it.
  const auto tiny = cosine_scores(Tensor::from({1e-10, 0}), protos_of({Tensor::from({2, 0})}));
  EXPECT_NEAR(tiny[0], 1e-10 * 2 / (kCosineNormFloor * 2), 1e-15);
  EXPECT_THROW(cosine_scores(q, protos_of({Tensor({3})})), ContractError);
}

TEST(ScaledSoftmax, Examples) {
  for (double p : scaled_softmax(std::vector<double>(5, 0.3), 7.0)) EXPECT_DOUBLE_EQ(p, 0.2);
  const auto p = scaled_softmax(std::vector<double>{1, 0}, 1.0);
  EXPECT_NEAR(p[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(p[0], 0.7311, 1e-4);
  EXPECT_NEAR(p[1], 0.2689, 1e-4);
  EXPECT_EQ(ModelSpec{}.beta, 7.0);
}

TEST(ScaledSoftmax, NormalizedAndShiftInvariant) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(2 + rng.uniform_index(8));
    for (double& v : s) v = rng.uniform(-1, 1);
    const auto p = scaled_softmax(s, 7.0);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
    std::vector<double> shifted = s;
    const double c = rng.uniform(-100, 100);
    for (double& v : shifted) v += c;
    const auto q = scaled_softmax(shifted, 7.0);
    for (std::size_t k = 0; k < p.size(); ++k) {
      EXPECT_GT(p[k], 0.0);
      EXPECT_LT(p[k], 1.0);
      EXPECT_NEAR(p[k], q[k], 1e-12);
    }
  }
}

TEST(RelevanceInit, NonParametricExamples) {
  const auto r = relevance_init_nonparametric(std::vector<double>{0.2, 0.5, 0.9, 0.2, 0.2});
  EXPECT_EQ(r[0], 0.0);
  EXPECT_NEAR(r[1], std::log(4.0), 1e-12);
  EXPECT_NEAR(r[2], std::log(36.0), 1e-12);
  EXPECT_NEAR(r[2], 3.5835, 1e-4);
  const auto sat = relevance_init_nonparametric(std::vector<double>{1.0, 0.0});
  EXPECT_TRUE(std::isfinite(sat[0]));
  EXPECT_TRUE(std::isfinite(sat[1]));
}

TEST(RelevanceInit, UniformIsExactlyZero) {
  for (std::size_t k = 2; k <= 64; ++k) {
    for (double r : relevance_init_nonparametric(std::vector<double>(k, 1.0 / static_cast<double>(k)))) {
      EXPECT_EQ(r, 0.0) << k;
    }
    const auto soft = scaled_softmax(std::vector<double>(k, 0.3), 7.0);
    for (double r : relevance_init_nonparametric(soft)) EXPECT_EQ(r, 0.0) << k;
  }
}

TEST(RelevanceInit, SignAndMonotonicity) {
  Rng rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 2 + rng.uniform_index(9);
    std::vector<double> p(k);
    for (double& v : p) v = rng.uniform(1e-6, 1.0 - 1e-6);
    const auto r = relevance_init_nonparametric(p);
    for (std::size_t c = 0; c < k; ++c) {
      EXPECT_EQ(r[c] > 0.0, p[c] > 1.0 / static_cast<double>(k)) << p[c];
    }
  }
  double prev = -INFINITY;
  for (double p = 0.001; p < 1.0; p += 0.001) {
    const double r = relevance_init_nonparametric(std::vector<double>{p, 0, 0, 0, 0})[0];
    EXPECT_GT(r, prev);
    prev = r;
  }
}

TEST(RelevanceInit, ParametricIsIdentity) {
  const std::vector<double> logits{2, -1, 0.5};
  EXPECT_EQ(relevance_init_parametric(logits), logits);
  EXPECT_EQ(relevance_init_parametric(std::vector<double>(4, 0.0)), std::vector<double>(4, 0.0));
  const std::vector<double> peak{5, 0, 0, 0, 0};
  EXPECT_EQ(relevance_init_parametric(peak), peak);
}

Network zero_relation_net(const Shape& feat, double bias) {
  const std::size_t in = 2 * feat[0] * feat[1] * feat[2];
  return Network({2 * feat[0], feat[1], feat[2]},
                 {LayerSpec::flatten(), LayerSpec::linear(Tensor({1, in}), Tensor({1}, bias))});
}

TEST(RelationHead, ZeroWeightsGiveBias) {
  Rng rng(3);
  const Shape feat{2, 2, 2};
  const ClassPrototypes p = protos_of({oracle::random_tensor(feat, rng), oracle::random_tensor(feat, rng)});
  const RelationPass pass = relation_head(oracle::random_tensor(feat, rng), p, zero_relation_net(feat, 0.75));
  EXPECT_EQ(pass.logits, std::vector<double>(2, 0.75));
}

TEST(RelationHead, SymmetricAndPermutationEquivariant) {
  Rng rng(4);
  const Shape feat{4, 2, 2};
  const Network net = make_relation_net(feat, 8, rng);
  const Tensor q = oracle::random_tensor(feat, rng, 0, 1);
  const RelationPass same = relation_head(q, protos_of({q, q, q}), net);
  EXPECT_EQ(same.logits[0], same.logits[1]);
  EXPECT_EQ(same.logits[0], same.logits[2]);

  std::vector<Tensor> ps;
  for (int k = 0; k < 4; ++k) ps.push_back(oracle::random_tensor(feat, rng, 0, 1));
  const RelationPass a = relation_head(q, protos_of(ps), net);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<Tensor> permuted;
  for (std::size_t i : perm) permuted.push_back(ps[i]);
  const RelationPass b = relation_head(q, protos_of(permuted), net);
  for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(b.logits[i], a.logits[perm[i]]);
}

// Golden values recorded from the first verified run.
TEST(RelationHead, PinnedLogits) {
  Rng rng(2024);
  const Shape feat{2, 2, 2};
  const Network net = make_relation_net(feat, 4, rng);
  const Tensor q = oracle::random_tensor(feat, rng, 0, 1);
  const ClassPrototypes p = protos_of({oracle::random_tensor(feat, rng, 0, 1),
                                       oracle::random_tensor(feat, rng, 0, 1)});
  const RelationPass pass = relation_head(q, p, net);
  ASSERT_EQ(pass.logits.size(), 2u);
  EXPECT_NEAR(pass.logits[0], -0.8197711946841354, 1e-12);
  EXPECT_NEAR(pass.logits[1], -0.51199547807808843, 1e-12);
}

TEST(RelationHead, PairLayout) {
  const Tensor q({1, 1, 1, 1}, 9.0);
  const Tensor pairs = make_pairs(q, protos_of({Tensor({1, 1, 1}, 1.0), Tensor({1, 1, 1}, 2.0)}));
  EXPECT_EQ(pairs.shape(), (Shape{2, 2, 1, 1}));
  EXPECT_EQ(pairs, Tensor({2, 2, 1, 1}, std::vector<double>{1, 9, 2, 9}));
  EXPECT_THROW(make_pairs(Tensor({1, 2, 1, 1}), protos_of({Tensor({1, 1, 1})})), ContractError);
}

TEST(Explain, CosineParallelQueryIsProportionalToProduct) {
  const Tensor p = Tensor::from({1, 2, 3});
  const Tensor q = Tensor::from({2, 4, 6});
  const ClassPrototypes protos = protos_of({p, Tensor::from({-1, 0, 1})});
  FewShotModel model;
  const HeadOutput ho = cosine_head(q, protos, 7.0);
  const Tensor r = lrp_through_head(model, q, protos, ho.relevance_init, 0, lrp::LrpConfig{});
  const double pn = std::sqrt(14.0);
  const double ratio = r[0] / (q[0] * p[0] / pn);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(r[i], ratio * q[i] * p[i] / pn, 1e-12);
    EXPECT_GT(r[i], 0.0);
  }
  EXPECT_EQ(r.shape(), q.shape());
}

TEST(Explain, ZeroInitGivesZero) {
  Rng rng(5);
  const Shape feat{2, 2, 2};
  FewShotModel model;
  model.head = HeadKind::kRelation;
  model.relation = make_relation_net(feat, 4, rng);
  const Tensor q = oracle::random_tensor(feat, rng, 0, 1);
  const ClassPrototypes protos = protos_of({oracle::random_tensor(feat, rng, 0, 1),
                                            oracle::random_tensor(feat, rng, 0, 1)});
  const std::vector<double> zeros(2, 0.0);
  EXPECT_EQ(lrp_through_head(model, q, protos, zeros, 1, lrp::LrpConfig{}).max_abs(), 0.0);
  model.head = HeadKind::kCosine;
  EXPECT_EQ(lrp_through_head(model, q, protos, zeros, 1, lrp::LrpConfig{}).max_abs(), 0.0);
}

TEST(Explain, RelationBiasFreeLinearConserves) {
  Rng rng(6);
  const Shape feat{2, 2, 2};
  const Network net({4, 2, 2}, {LayerSpec::flatten(),
                                LayerSpec::linear(oracle::random_tensor({1, 16}, rng), Tensor({1}))});
  const Tensor q = oracle::random_tensor(feat, rng);
  const ClassPrototypes protos = protos_of({oracle::random_tensor(feat, rng),
                                            oracle::random_tensor(feat, rng)});
  const RelationPass pass = relation_head(q, protos, net);
  lrp::LrpConfig cfg;
  cfg.epsilon = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    const Tensor r = explain_relation_pair(net, pass, c, pass.logits[c], cfg, true);
    EXPECT_EQ(r.shape(), (Shape{4, 2, 2}));
    EXPECT_NEAR(r.sum(), pass.logits[c], 1e-12);
  }
  FewShotModel model;
  model.head = HeadKind::kRelation;
  model.relation = net;
  const Tensor half = lrp_through_head(model, q, protos, relation_output(pass).relevance_init, 1,
                                       lrp::LrpConfig{}, &pass);
  EXPECT_EQ(half.shape(), feat);
}

TEST(Explain, RejectsBadTargets) {
  FewShotModel model;
  const ClassPrototypes protos = protos_of({Tensor::from({1, 0}), Tensor::from({0, 1})});
  const std::vector<double> init{1, 0};
  EXPECT_THROW(lrp_through_head(model, Tensor::from({1, 1}), protos, init, 2, lrp::LrpConfig{}),
               ContractError);
  model.head = static_cast<HeadKind>(7);
  EXPECT_THROW(lrp_through_head(model, Tensor::from({1, 1}), protos, init, 0, lrp::LrpConfig{}),
               ConfigError);
}

TEST(Argmax, FirstMaximumWins) {
  EXPECT_EQ(argmax(std::vector<double>{1, 3, 3, 0}), 1u);
}

}  // namespace
}  // namespace egt::heads

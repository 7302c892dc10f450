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
#include <limits>

#include "egt/errors.hpp"
#include "egt/lrp.hpp"
#include "oracles.hpp"

namespace egt::lrp {
namespace {

LayerSpec dense(std::size_t out, std::size_t in, std::vector<double> w,
                std::vector<double> b = {}) {
  if (b.empty()) b.assign(out, 0.0);
  return LayerSpec::linear(Tensor({out, in}, std::move(w)), Tensor({out}, std::move(b)));
}

Tensor pre_activation(const LayerSpec& layer, const Tensor& z) {
  return forward(Network({z.size()}, {layer}), z).output;
}

TEST(EpsilonRule, HandExample) {
  const LayerSpec l = dense(1, 2, {0.5, 0.25});
  const Tensor z = Tensor::from({1, 2});
  const Tensor y = pre_activation(l, z);
  ASSERT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_EQ(lrp_epsilon(l, z, y, Tensor::from({1}), 0.0), Tensor::from({0.5, 0.5}));
}

TEST(EpsilonRule, ZeroRelevanceGivesZero) {
  Rng rng(3);
  const LayerSpec l = LayerSpec::linear(oracle::random_tensor({3, 4}, rng),
                                        oracle::random_tensor({3}, rng));
  const Tensor z = oracle::random_tensor({4}, rng);
  EXPECT_EQ(lrp_epsilon(l, z, pre_activation(l, z), Tensor({3}), 1e-3).max_abs(), 0.0);
}

TEST(EpsilonRule, SingleUnitClosedForm) {
  for (double eps : {0.0, 1e-3, 0.1, 2.0}) {
    for (double w : {0.7, -1.3}) {
      const LayerSpec l = dense(1, 1, {w});
      const Tensor z = Tensor::from({1.5});
      const double y = w * 1.5;
      const double r = lrp_epsilon(l, z, Tensor::from({y}), Tensor::from({2.0}), eps)[0];
      EXPECT_NEAR(r, 2.0 * y / (y + eps * (y >= 0 ? 1 : -1)), 1e-15) << eps << " " << w;
    }
  }
}

TEST(EpsilonRule, GrowingEpsilonShrinksRelevance) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const LayerSpec l = LayerSpec::linear(oracle::random_tensor({1, 5}, rng, 0.0, 1.0), Tensor({1}));
    const Tensor z = oracle::random_tensor({5}, rng, 0.01, 1.0);
    const Tensor y = pre_activation(l, z);
    double prev = INFINITY;
    for (double eps : {0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0}) {
      const Tensor r = lrp_epsilon(l, z, y, Tensor::from({1.0}), eps);
      EXPECT_LE(r.max_abs(), prev);
      prev = r.max_abs();
    }
  }
}

TEST(EpsilonRule, MatchesBruteForce) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t in = 1 + rng.uniform_index(6), out = 1 + rng.uniform_index(6);
    const LayerSpec l = LayerSpec::linear(oracle::random_tensor({out, in}, rng),
                                          oracle::random_tensor({out}, rng));
    const Tensor z = oracle::random_tensor({in}, rng);
    const Tensor r_out = oracle::random_tensor({out}, rng);
    const Tensor got = lrp_epsilon(l, z, pre_activation(l, z), r_out, 0.01);
    const auto want = oracle::epsilon_rule(l.weight, l.bias.vec(), z.vec(), r_out.vec(), 0.01);
    for (std::size_t i = 0; i < in; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(AlphaRule, EqualsEpsilonZeroWithoutNegativeContributions) {
  Rng rng(4);
  const LayerSpec l = LayerSpec::linear(oracle::random_tensor({3, 4}, rng, 0.1, 1.0), Tensor({3}));
  const Tensor z = oracle::random_tensor({4}, rng, 0.1, 1.0);
  const Tensor y = pre_activation(l, z);
  const Tensor r = oracle::random_tensor({3}, rng);
  const Tensor a = lrp_alpha(l, z, y, r, 1.0);
  const Tensor e = lrp_epsilon(l, z, y, r, 0.0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a[i], e[i], 1e-14);
}

TEST(AlphaRule, AlphaOneKeepsRelevanceNonNegative) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const LayerSpec l = LayerSpec::linear(oracle::random_tensor({4, 5}, rng),
                                          oracle::random_tensor({4}, rng));
    const Tensor z = oracle::random_tensor({5}, rng);
    const Tensor r = lrp_alpha(l, z, pre_activation(l, z), oracle::random_tensor({4}, rng, 0, 1), 1.0);
    for (double v : r.values()) EXPECT_GE(v, 0.0);
  }
}

TEST(AlphaRule, ZeroDenominatorGuard) {
  const LayerSpec l = dense(1, 2, {1, -1});
  const Tensor z = Tensor::from({1, 1});
  const Tensor y = pre_activation(l, z);
  ASSERT_EQ(y[0], 0.0);
  EXPECT_EQ(lrp_alpha(l, z, y, Tensor::from({1}), 1.0), Tensor::from({1, 0}));
  // Only the negative flow is guarded: with no negative contribution at all
  // the negative term vanishes.
  const LayerSpec pos = dense(1, 2, {1, 1});
  EXPECT_EQ(lrp_alpha(pos, Tensor::from({0, 0}), Tensor::from({0}), Tensor::from({1}), 2.0),
            Tensor::from({0, 0}));
}

TEST(AlphaRule, MatchesBruteForce) {
  Rng rng(13);
  for (double alpha : {1.0, 1.5, 2.0, 3.0}) {
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t in = 1 + rng.uniform_index(6), out = 1 + rng.uniform_index(6);
      const LayerSpec l = LayerSpec::linear(oracle::random_tensor({out, in}, rng),
                                            oracle::random_tensor({out}, rng));
      const Tensor z = oracle::random_tensor({in}, rng);
      const Tensor r_out = oracle::random_tensor({out}, rng);
      const Tensor got = lrp_alpha(l, z, pre_activation(l, z), r_out, alpha);
      const auto want = oracle::alpha_rule(l.weight, l.bias.vec(), z.vec(), r_out.vec(), alpha);
      for (std::size_t i = 0; i < in; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    }
  }
}

// Conv rules against the same rules applied to the unrolled dense layer.
TEST(ConvRules, MatchUnrolledDenseOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t ic = 1 + rng.uniform_index(3), oc = 1 + rng.uniform_index(3);
    const std::size_t k = 1 + rng.uniform_index(3);
    const std::size_t stride = 1 + rng.uniform_index(2), pad = rng.uniform_index(2);
    const Shape in{ic, k + rng.uniform_index(3), k + rng.uniform_index(3)};
    const LayerSpec conv = LayerSpec::conv2d(oracle::random_tensor({oc, ic, k, k}, rng),
                                             oracle::random_tensor({oc}, rng), stride, pad);
    const Tensor z = oracle::random_tensor(in, rng);
    const Tensor y = forward(Network(in, {conv}), z).output;
    const Tensor r = oracle::random_tensor(y.shape(), rng);
    const Tensor w = oracle::unroll_conv(conv, in);
    const auto b = oracle::unroll_conv_bias(conv, in).vec();

    const Tensor eps = lrp_epsilon(conv, z, y, r, 0.01);
    const auto eps_want = oracle::epsilon_rule(w, b, z.vec(), r.vec(), 0.01);
    const double alpha = 1.0 + rng.uniform_index(3) * 0.5;
    const Tensor al = lrp_alpha(conv, z, y, r, alpha);
    const auto al_want = oracle::alpha_rule(w, b, z.vec(), r.vec(), alpha);
    ASSERT_EQ(eps.shape(), in);
    for (std::size_t i = 0; i < z.size(); ++i) {
      EXPECT_NEAR(eps[i], eps_want[i], 1e-10) << "trial " << trial;
      EXPECT_NEAR(al[i], al_want[i], 1e-10) << "trial " << trial;
    }
  }
}

TEST(Passthrough, ReluAndFlatten) {
  const Tensor r = Tensor::from({1, 2});
  EXPECT_EQ(lrp_passthrough(LayerSpec::relu(), Tensor::from({-1, 3}), r), r);
  const Tensor z({1, 1, 2}, std::vector<double>{4, 5});
  EXPECT_EQ(lrp_passthrough(LayerSpec::flatten(), z, r), Tensor({1, 1, 2}, std::vector<double>{1, 2}));
}

TEST(Passthrough, MaxPoolWinnerTakesAll) {
  const Tensor z({1, 2, 2}, std::vector<double>{1, 5, 2, 3});
  EXPECT_EQ(lrp_passthrough(LayerSpec::maxpool2d(2, 2), z, Tensor({1, 1, 1}, 4.0)),
            Tensor({1, 2, 2}, std::vector<double>{0, 4, 0, 0}));
  const Tensor tie({1, 2, 2}, std::vector<double>{2, 2, 2, 2});
  EXPECT_EQ(lrp_passthrough(LayerSpec::maxpool2d(2, 2), tie, Tensor({1, 1, 1}, 4.0)),
            Tensor({1, 2, 2}, std::vector<double>{4, 0, 0, 0}));
}

TEST(Passthrough, AvgPoolSplits) {
  const Tensor eq({1, 2, 2}, 3.0);
  EXPECT_EQ(lrp_passthrough(LayerSpec::avgpool2d(2, 2), eq, Tensor({1, 1, 1}, 4.0)),
            Tensor({1, 2, 2}, 1.0));
  const Tensor z({1, 2, 2}, std::vector<double>{1, 3, 0, 4});
  EXPECT_EQ(lrp_passthrough(LayerSpec::avgpool2d(2, 2), z, Tensor({1, 1, 1}, 8.0)),
            Tensor({1, 2, 2}, std::vector<double>{1, 3, 0, 4}));
  const Tensor zero_sum({1, 2, 2}, std::vector<double>{1, -1, 2, -2});
  EXPECT_EQ(lrp_passthrough(LayerSpec::avgpool2d(2, 2), zero_sum, Tensor({1, 1, 1}, 4.0)),
            Tensor({1, 2, 2}, 1.0));
}

TEST(Backward, SingleLinearConserves) {
  const Network net({2}, {dense(1, 2, {0.5, 0.25})});
  const ForwardResult fr = forward(net, Tensor::from({1, 2}), true);
  LrpConfig cfg;
  cfg.epsilon = 0.0;
  const RelevanceTrace rt = lrp_backward(net, *fr.trace, Tensor::from({1}), cfg, true);
  EXPECT_DOUBLE_EQ(rt.input_relevance().sum(), 1.0);
}

TEST(Backward, ConservationOnRandomBiasFreeNets) {
  Rng rng(77);
  LrpConfig cfg;
  cfg.epsilon = 0.0;
  cfg.rule_map[LayerKind::kConv2d] = Rule::kAlpha;
  for (int trial = 0; trial < 100; ++trial) {
    const Network net = oracle::conservation_net(rng);
    const ForwardResult fr = forward(net, oracle::random_tensor(net.input_shape(), rng), true);
    const RelevanceTrace rt = lrp_backward(net, *fr.trace, fr.output, cfg, true);
    const double out = fr.output.sum();
    EXPECT_NEAR(rt.input_relevance().sum(), out, 1e-5 * std::max(1.0, std::abs(out)));
    for (std::size_t a = 0; a < rt.relevances.size(); ++a) {
      EXPECT_EQ(rt.at(a).shape(), a == 0 ? net.input_shape() : net.layer_output_shape(a - 1));
    }
  }
}

TEST(Backward, MatchesGradientTimesInputOnReluNets) {
  Rng rng(78);
  LrpConfig cfg;
  cfg.epsilon = 1e-9;
  int checked = 0;
  while (checked < 50) {
    const Network net = oracle::relu_net(rng);
    const Tensor x = oracle::random_tensor(net.input_shape(), rng);
    const ForwardResult fr = forward(net, x, true);
    if (oracle::min_abs_preactivation(net, *fr.trace) < 1e-3) continue;
    ++checked;
    Tensor onehot(fr.output.shape());
    onehot[rng.uniform_index(onehot.size())] = 1.0;
    Tensor rel_out = onehot;
    for (std::size_t i = 0; i < rel_out.size(); ++i) rel_out[i] *= fr.output[i];
    const Tensor r = lrp_backward(net, *fr.trace, rel_out, cfg).input_relevance();
    const Tensor g = backward_grad(net, fr.trace, onehot).grad_in;
    std::vector<double> gx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = g[i] * x[i];
    EXPECT_LT(oracle::max_relative_error(r.vec(), gx, 1e-8), 1e-4);
  }
}

TEST(Backward, ZeroOutputRelevanceGivesZeroTrace) {
  Rng rng(6);
  const Network net({2, 4, 4}, {LayerSpec::conv2d_init(2, 2, 3, rng, 1, 1), LayerSpec::relu(),
                                LayerSpec::maxpool2d(2, 2), LayerSpec::flatten(),
                                LayerSpec::linear_init(8, 3, rng)});
  const ForwardResult fr = forward(net, oracle::random_tensor({2, 4, 4}, rng), true);
  const RelevanceTrace rt = lrp_backward(net, *fr.trace, Tensor({3}), LrpConfig{});
  for (const Tensor& r : rt.relevances) EXPECT_EQ(r.max_abs(), 0.0);
}

TEST(Backward, AlphaOneIntermediatesNonNegative) {
  Rng rng(7);
  LrpConfig cfg;
  cfg.rule_map[LayerKind::kLinear] = Rule::kAlpha;
  for (int trial = 0; trial < 20; ++trial) {
    const Network net({2, 6, 6}, {LayerSpec::conv2d_init(2, 3, 3, rng, 1, 1), LayerSpec::relu(),
                                  LayerSpec::maxpool2d(2, 2), LayerSpec::conv2d_init(3, 2, 3, rng),
                                  LayerSpec::relu(), LayerSpec::flatten(),
                                  LayerSpec::linear_init(2, 2, rng)});
    const ForwardResult fr = forward(net, oracle::random_tensor({2, 6, 6}, rng), true);
    const RelevanceTrace rt =
        lrp_backward(net, *fr.trace, oracle::random_tensor({2}, rng, 0, 1), cfg);
    for (const Tensor& r : rt.relevances) {
      for (double v : r.values()) EXPECT_GE(v, 0.0);
    }
  }
}

TEST(Backward, BatchedMatchesPerSample) {
  Rng rng(10);
  const Network net({2, 4, 4}, {LayerSpec::conv2d_init(2, 2, 3, rng, 1, 1), LayerSpec::relu(),
                                LayerSpec::avgpool2d(2, 2), LayerSpec::flatten(),
                                LayerSpec::linear_init(8, 3, rng)});
  const Tensor x = oracle::random_tensor({3, 2, 4, 4}, rng);
  const ForwardResult fr = forward(net, x, true);
  const RelevanceTrace batch = lrp_backward(net, *fr.trace, fr.output, LrpConfig{});
  for (std::size_t b = 0; b < 3; ++b) {
    const ForwardResult one = forward(net, x.slice(b), true);
    const RelevanceTrace single = lrp_backward(net, *one.trace, one.output, LrpConfig{});
    const Tensor got = batch.input_relevance().slice(b);
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_NEAR(got[i], single.input_relevance()[i], 1e-12);
    }
  }
}

TEST(Backward, ConfigurationErrors) {
  const Network net({2}, {dense(1, 2, {1, 1}), LayerSpec::relu()});
  const ForwardResult fr = forward(net, Tensor::from({1, 2}), true);
  LrpConfig cfg;
  cfg.rule_map.erase(LayerKind::kRelu);
  EXPECT_THROW(lrp_backward(net, *fr.trace, Tensor::from({1}), cfg), ConfigError);
  cfg = LrpConfig{};
  cfg.rule_map[LayerKind::kRelu] = Rule::kEpsilon;
  EXPECT_THROW(lrp_backward(net, *fr.trace, Tensor::from({1}), cfg), ConfigError);
  cfg = LrpConfig{};
  cfg.rule_map[LayerKind::kLinear] = Rule::kPassthrough;
  EXPECT_THROW(lrp_backward(net, *fr.trace, Tensor::from({1}), cfg), ConfigError);
  cfg = LrpConfig{};
  cfg.epsilon = 0.0;
  EXPECT_THROW(lrp_backward(net, *fr.trace, Tensor::from({1}), cfg), ConfigError);
  cfg.epsilon = 1e-3;
  cfg.alpha = 0.5;
  EXPECT_THROW(lrp_backward(net, *fr.trace, Tensor::from({1}), cfg), ConfigError);
  EXPECT_THROW(lrp_backward(net, *fr.trace, Tensor::from({1, 2}), LrpConfig{}), ContractError);
}

TEST(Backward, DefaultRuleMap) {
  const auto m = default_rule_map();
  EXPECT_EQ(m.at(LayerKind::kLinear), Rule::kEpsilon);
  EXPECT_EQ(m.at(LayerKind::kConv2d), Rule::kAlpha);
  for (LayerKind k : {LayerKind::kRelu, LayerKind::kMaxPool2d, LayerKind::kAvgPool2d,
                      LayerKind::kFlatten}) {
    EXPECT_EQ(m.at(k), Rule::kPassthrough);
  }
  const LrpConfig cfg;
  EXPECT_EQ(cfg.epsilon, 0.001);
  EXPECT_EQ(cfg.alpha, 1.0);
}

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_relevance(Tensor::from({2, -4})), Tensor::from({0.5, -1}));
  EXPECT_EQ(normalize_relevance(Tensor({3})), Tensor({3}));
  EXPECT_EQ(normalize_relevance(Tensor::from({-3})), Tensor::from({-1}));
  EXPECT_THROW(normalize_relevance(Tensor::from({1, std::numeric_limits<double>::infinity()})), NumericError);
  EXPECT_THROW(normalize_relevance(Tensor::from({std::nan(""), 1})), NumericError);
}

TEST(Normalize, BoundedSignAndArgmaxPreserving) {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor r = oracle::random_tensor({1 + rng.uniform_index(20)}, rng, -50, 50);
    const Tensor n = normalize_relevance(r);
    std::size_t arg_r = 0, arg_n = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_LE(std::abs(n[i]), 1.0);
      EXPECT_EQ(std::signbit(n[i]), std::signbit(r[i]));
      if (std::abs(r[i]) > std::abs(r[arg_r])) arg_r = i;
      if (std::abs(n[i]) > std::abs(n[arg_n])) arg_n = i;
    }
    EXPECT_EQ(arg_r, arg_n);
  }
}

}  // namespace
}  // namespace egt::lrp

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

#ifndef EGT_TESTS_SUPPORT_ORACLES_HPP_
#define EGT_TESTS_SUPPORT_ORACLES_HPP_

// Reference implementations used only by the test suites. They are written
// as direct loops over the textbook definitions and share no code with the
// library kernels.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "egt/network.hpp"
#include "egt/lrp.hpp"
#include "egt/rng.hpp"
#include "egt/tensor.hpp"

namespace egt::oracle {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);

// Dense matrix [out, in] equivalent to a conv2d layer on a [C, H, W] input.
Tensor unroll_conv(const LayerSpec& conv, const Shape& input_chw);
// Bias of the unrolled layer: one entry per output cell.
Tensor unroll_conv_bias(const LayerSpec& conv, const Shape& input_chw);

// Brute-force relevance rules on a dense layer y = W z + b (vectors).
std::vector<double> epsilon_rule(const Tensor& w, std::span<const double> b,
                                 std::span<const double> z,
                                 std::span<const double> rel_out, double eps);
std::vector<double> alpha_rule(const Tensor& w, std::span<const double> b,
                               std::span<const double> z,
                               std::span<const double> rel_out, double alpha);

// Random bias-free network of at most four layers drawn from linear, relu,
// avgpool2d and flatten.
Network conservation_net(Rng& rng);

// Random bias-free linear/relu stack ending in a linear layer.
Network relu_net(Rng& rng, std::size_t max_hidden_layers = 3);

// Smallest |pre-activation| of every linear/conv layer in a recorded pass.
double min_abs_preactivation(const Network& net, const ForwardTrace& trace);

// Central differences of f at x with step h.
std::vector<double> numeric_gradient(const std::function<double(const Tensor&)>& f,
                                     const Tensor& x, double h = 1e-4);

// max over i of |a - n| / max(|a|, |n|), entries with max(|a|, |n|) < floor
// compared absolutely against `floor`.
double max_relative_error(std::span<const double> analytic,
                          std::span<const double> numeric, double floor = 1e-7);

// Network with the parameters of layer l replaced.
Network with_layer_params(const Network& net, std::size_t l, const Tensor& weight,
                          const Tensor& bias);

// Worst relative error between backward_grad and central differences (step
// 1e-4) over the input and parameter gradients of one random single-layer
// instance of `kind`, batch of two. Instances within 1e-3 of a relu or
// maxpool kink are redrawn.
double layer_gradient_check(LayerKind kind, Rng& rng);

}  // namespace egt::oracle

#endif  // EGT_TESTS_SUPPORT_ORACLES_HPP_

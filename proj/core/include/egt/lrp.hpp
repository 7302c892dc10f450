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

#ifndef EGT_LRP_HPP_
#define EGT_LRP_HPP_

#include <map>
#include <vector>

#include "egt/network.hpp"
#include "egt/tensor.hpp"

namespace egt::lrp {

enum class Rule {
  kEpsilon,      // weighted layers
  kAlpha,        // weighted layers, alpha-beta with beta = alpha - 1
  kPassthrough,  // relu, flatten, pooling
};

std::map<LayerKind, Rule> default_rule_map();

struct LrpConfig {
  double epsilon = 1e-3;
  double alpha = 1.0;
  std::map<LayerKind, Rule> rule_map = default_rule_map();

  // Throws ConfigError unless epsilon > 0 and alpha >= 1. Tests that need the
  // unstabilized rule (epsilon = 0) call the layer rules directly or set
  // allow_zero_epsilon.
  void validate(bool allow_zero_epsilon = false) const;
};

// Relevance of every activation of a recorded pass; relevances[l] has the
// shape of trace.activations[l] (without the batch axis for unbatched
// passes). relevances.back() is the output relevance the pass started from.
struct RelevanceTrace {
  std::vector<Tensor> relevances;

  const Tensor& input_relevance() const { return relevances.front(); }
  const Tensor& output_relevance() const { return relevances.back(); }
  const Tensor& at(std::size_t activation) const {
    return relevances.at(activation);
  }
};

// Single-layer rules. `input` is the recorded layer input z, `pre_activation`
// the recorded output y of the weighted layer (bias included). Tensors may be
// single samples or batches with a leading axis.
//
// epsilon: R_i = sum_j R_j z_i w_ij / (y_j + eps * sign(y_j)), sign(0) = +1.
// A zero denominator (eps = 0, y_j = 0) contributes nothing.
Tensor lrp_epsilon(const LayerSpec& layer, const Tensor& input,
                   const Tensor& pre_activation, const Tensor& rel_out,
                   double epsilon);

// alpha: R_i = sum_j R_j (alpha (z_i w_ij)+ / y_j+ - (alpha-1) (z_i w_ij)- / y_j-)
// where y_j+ and y_j- collect the positive and negative contributions
// including the matching part of the bias. Terms whose denominator is zero
// contribute nothing.
Tensor lrp_alpha(const LayerSpec& layer, const Tensor& input,
                 const Tensor& pre_activation, const Tensor& rel_out,
                 double alpha);

// relu and flatten pass relevance through; maxpool routes it to the first
// maximal input; avgpool splits it proportionally to the inputs.
Tensor lrp_passthrough(const LayerSpec& layer, const Tensor& input,
                       const Tensor& rel_out);

// Applies cfg.rule_map from the output back to the input.
RelevanceTrace lrp_backward(const Network& net, const ForwardTrace& trace,
                            const Tensor& output_relevance,
                            const LrpConfig& cfg,
                            bool allow_zero_epsilon = false);

// rel / max|rel|, or rel unchanged when it is all zeros. NumericError on inf/NaN.
Tensor normalize_relevance(const Tensor& rel);

}  // namespace egt::lrp

#endif  // EGT_LRP_HPP_

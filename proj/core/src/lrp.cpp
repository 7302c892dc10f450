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

#include "egt/lrp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "egt/errors.hpp"
#include "kernels.hpp"

namespace egt::lrp {
namespace {

std::size_t sample_rank(const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::kLinear: return 1;
    case LayerKind::kConv2d:
    case LayerKind::kMaxPool2d:
    case LayerKind::kAvgPool2d: return 3;
    default: return 0;
  }
}

// Adds a unit batch axis when `t` is a single sample.
Tensor as_batch(const Tensor& t, std::size_t rank) {
  if (rank != 0 && t.rank() == rank) {
    Shape s{1};
    s.insert(s.end(), t.shape().begin(), t.shape().end());
    return t.reshaped(std::move(s));
  }
  return t;
}

Tensor like(const Tensor& out, const Tensor& reference) {
  return out.shape() == reference.shape() ? out : out.reshaped(reference.shape());
}

Shape weighted_output_shape(const LayerSpec& layer, const Tensor& z) {
  if (layer.kind == LayerKind::kLinear) {
    if (z.rank() != 2 || z.dim(1) != layer.weight.dim(1)) return {};
    return {z.dim(0), layer.weight.dim(0)};
  }
  if (z.rank() != 4 || z.dim(1) != layer.weight.dim(1)) return {};
  const detail::Window2d g = detail::make_window(
      Shape(z.shape().begin() + 1, z.shape().end()), layer.weight.dim(2),
      layer.weight.dim(3), layer.stride, layer.padding);
  return {z.dim(0), layer.weight.dim(0), g.out_h, g.out_w};
}

void check_weighted(const LayerSpec& layer, const Tensor& z, const Tensor& y,
                    const Tensor& rel_out, const char* rule) {
  if (!layer.has_params()) {
    throw ContractError(std::string(rule) + " rule needs a linear or conv2d layer");
  }
  require_same_shape(y, rel_out, rule);
  if (weighted_output_shape(layer, z) != y.shape()) {
    throw ContractError(std::string(rule) + ": input " +
                        shape_to_string(z.shape()) +
                        " does not produce pre-activation " +
                        shape_to_string(y.shape()));
  }
}

Tensor split_positive(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor split_negative(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = v < 0.0 ? v : 0.0;
  return out;
}

bool any_nonzero(const Tensor& t) {
  for (double v : t.values()) {
    if (v != 0.0) return true;
  }
  return false;
}

// Sum of z+ (x) T(w_a, s) + z- (x) T(w_b, s).
Tensor redistribute(const LayerSpec& layer, const Tensor& z_pos,
                    const Tensor& z_neg, bool has_neg, const Tensor& w_a,
                    const Tensor& w_b, const Tensor& s) {
  Tensor back = detail::weighted_transpose(layer, s, w_a, z_pos.shape());
  Tensor out(z_pos.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z_pos[i] * back[i];
  if (has_neg) {
    back = detail::weighted_transpose(layer, s, w_b, z_pos.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += z_neg[i] * back[i];
  }
  return out;
}

Tensor safe_ratio(const Tensor& num, const Tensor& den) {
  Tensor s(num.shape());
  for (std::size_t j = 0; j < s.size(); ++j) {
    s[j] = den[j] == 0.0 ? 0.0 : num[j] / den[j];
  }
  return s;
}

}  // namespace

std::map<LayerKind, Rule> default_rule_map() {
  return {{LayerKind::kLinear, Rule::kEpsilon},
          {LayerKind::kConv2d, Rule::kAlpha},
          {LayerKind::kRelu, Rule::kPassthrough},
          {LayerKind::kMaxPool2d, Rule::kPassthrough},
          {LayerKind::kAvgPool2d, Rule::kPassthrough},
          {LayerKind::kFlatten, Rule::kPassthrough}};
}

void LrpConfig::validate(bool allow_zero_epsilon) const {
  if (allow_zero_epsilon ? !(epsilon >= 0.0) : !(epsilon > 0.0)) {
    throw ConfigError("lrp epsilon must be positive, got " +
                      std::to_string(epsilon));
  }
  if (!(alpha >= 1.0)) {
    throw ConfigError("lrp alpha must be >= 1, got " + std::to_string(alpha));
  }
}

Tensor lrp_epsilon(const LayerSpec& layer, const Tensor& input,
                   const Tensor& pre_activation, const Tensor& rel_out,
                   double epsilon) {
  const std::size_t rank = sample_rank(layer);
  const Tensor z = as_batch(input, rank);
  const std::size_t out_rank = layer.kind == LayerKind::kLinear ? 1 : 3;
  const Tensor y = as_batch(pre_activation, out_rank);
  const Tensor r = as_batch(rel_out, out_rank);
  check_weighted(layer, z, y, r, "epsilon");
  Tensor s(y.shape());
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double den = y[j] + epsilon * (y[j] >= 0.0 ? 1.0 : -1.0);
    s[j] = den == 0.0 ? 0.0 : r[j] / den;
  }
  Tensor back = detail::weighted_transpose(layer, s, layer.weight, z.shape());
  for (std::size_t i = 0; i < back.size(); ++i) back[i] *= z[i];
  return like(back, input);
}

Tensor lrp_alpha(const LayerSpec& layer, const Tensor& input,
                 const Tensor& pre_activation, const Tensor& rel_out,
                 double alpha) {
  if (!(alpha >= 1.0)) throw ConfigError("lrp alpha must be >= 1");
  const std::size_t rank = sample_rank(layer);
  const Tensor z = as_batch(input, rank);
  const std::size_t out_rank = layer.kind == LayerKind::kLinear ? 1 : 3;
  const Tensor y = as_batch(pre_activation, out_rank);
  const Tensor r = as_batch(rel_out, out_rank);
  check_weighted(layer, z, y, r, "alpha");

  const Tensor z_pos = split_positive(z);
  const Tensor z_neg = split_negative(z);
  const bool has_neg = any_nonzero(z_neg);
  const Tensor w_pos = split_positive(layer.weight);
  const Tensor w_neg = split_negative(layer.weight);
  const Tensor b_pos = split_positive(layer.bias);
  const Tensor b_neg = split_negative(layer.bias);

  // y+ = z+ w+ + z- w- + b+
  Tensor y_pos = detail::weighted_forward(layer, z_pos, w_pos, &b_pos);
  if (has_neg) {
    const Tensor t = detail::weighted_forward(layer, z_neg, w_neg, nullptr);
    for (std::size_t j = 0; j < y_pos.size(); ++j) y_pos[j] += t[j];
  }
  Tensor rel = redistribute(layer, z_pos, z_neg, has_neg, w_pos, w_neg,
                            safe_ratio(r, y_pos));
  if (alpha != 1.0) {
    for (double& v : rel.values()) v *= alpha;
  }

  const double beta = alpha - 1.0;
  if (beta != 0.0) {
    // y- = z+ w- + z- w+ + b-
    Tensor y_neg = detail::weighted_forward(layer, z_pos, w_neg, &b_neg);
    if (has_neg) {
      const Tensor t = detail::weighted_forward(layer, z_neg, w_pos, nullptr);
      for (std::size_t j = 0; j < y_neg.size(); ++j) y_neg[j] += t[j];
    }
    const Tensor neg = redistribute(layer, z_pos, z_neg, has_neg, w_neg, w_pos,
                                    safe_ratio(r, y_neg));
    for (std::size_t i = 0; i < rel.size(); ++i) rel[i] -= beta * neg[i];
  }
  return like(rel, input);
}

Tensor lrp_passthrough(const LayerSpec& layer, const Tensor& input,
                       const Tensor& rel_out) {
  switch (layer.kind) {
    case LayerKind::kRelu: {
      require_same_shape(input, rel_out, "relu relevance");
      return rel_out;
    }
    case LayerKind::kFlatten: {
      if (input.size() != rel_out.size()) {
        throw ContractError("flatten relevance: size mismatch");
      }
      return rel_out.reshaped(input.shape());
    }
    case LayerKind::kMaxPool2d:
    case LayerKind::kAvgPool2d: {
      const Tensor z = as_batch(input, 3);
      const Tensor r = as_batch(rel_out, 3);
      if (z.rank() != 4) throw ContractError("pooling relevance: input rank");
      const detail::Window2d g = detail::make_window(
          Shape(z.shape().begin() + 1, z.shape().end()), layer.window,
          layer.window, layer.stride, layer.padding);
      if (r.shape() != Shape{z.dim(0), g.channels, g.out_h, g.out_w}) {
        throw ContractError("pooling relevance: " + shape_to_string(r.shape()) +
                            " does not match the pooled input " +
                            shape_to_string(z.shape()));
      }
      const Tensor out = layer.kind == LayerKind::kMaxPool2d
                             ? detail::maxpool_route(layer, z, r)
                             : detail::avgpool_proportional(layer, z, r);
      return like(out, input);
    }
    default:
      throw ContractError("pass-through rule applied to a weighted layer");
  }
}

RelevanceTrace lrp_backward(const Network& net, const ForwardTrace& trace,
                            const Tensor& output_relevance,
                            const LrpConfig& cfg, bool allow_zero_epsilon) {
  cfg.validate(allow_zero_epsilon);
  check_trace(net, trace);
  const Tensor& out = trace.activations.back();
  Tensor rel;
  if (output_relevance.shape() == out.shape()) {
    rel = output_relevance;
  } else if (!trace.batched && output_relevance.shape() == net.output_shape()) {
    rel = output_relevance.reshaped(out.shape());
  } else {
    throw ContractError("output relevance " +
                        shape_to_string(output_relevance.shape()) +
                        " does not match network output " +
                        shape_to_string(out.shape()));
  }

  std::vector<Tensor> rels(net.size() + 1);
  rels[net.size()] = rel;
  for (std::size_t l = net.size(); l-- > 0;) {
    const LayerSpec& layer = net.layer(l);
    const auto it = cfg.rule_map.find(layer.kind);
    if (it == cfg.rule_map.end()) {
      throw ConfigError("no relevance rule configured for layer " +
                        std::to_string(l) + " (" +
                        std::string(to_string(layer.kind)) + ")");
    }
    const Rule rule = it->second;
    if ((rule == Rule::kPassthrough) == layer.has_params()) {
      throw ConfigError("rule for layer " + std::to_string(l) + " (" +
                        std::string(to_string(layer.kind)) +
                        ") does not fit the layer kind");
    }
    switch (rule) {
      case Rule::kEpsilon:
        rel = lrp_epsilon(layer, trace.input(l), trace.output(l), rel, cfg.epsilon);
        break;
      case Rule::kAlpha:
        rel = lrp_alpha(layer, trace.input(l), trace.output(l), rel, cfg.alpha);
        break;
      case Rule::kPassthrough:
        rel = lrp_passthrough(layer, trace.input(l), rel);
        break;
    }
    if (!rel.all_finite()) {
      throw NumericError("non-finite relevance below layer " + std::to_string(l));
    }
    rels[l] = rel;
  }
  if (!trace.batched) {
    for (std::size_t l = 0; l < rels.size(); ++l) {
      rels[l] = std::move(rels[l]).reshaped(l == 0 ? net.input_shape()
                                                   : net.layer_output_shape(l - 1));
    }
  }
  return RelevanceTrace{std::move(rels)};
}

Tensor normalize_relevance(const Tensor& rel) {
  double m = 0.0;
  for (double v : rel.vec()) {
    if (!std::isfinite(v)) throw NumericError("cannot normalize non-finite relevance");
    m = std::max(m, std::abs(v));
  }
  if (m == 0.0) return rel;
  Tensor out = rel;
  for (double& v : out.values()) v /= m;
  return out;
}

}  // namespace egt::lrp

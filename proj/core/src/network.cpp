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

#include "egt/network.hpp"

#include <cmath>
#include <string>

#include "egt/errors.hpp"
#include "kernels.hpp"

namespace egt {
namespace {

std::string at_layer(std::size_t l, LayerKind kind) {
  return "layer " + std::to_string(l) + " (" + std::string(to_string(kind)) +
         ")";
}

Shape infer_output(std::size_t l, const LayerSpec& layer, const Shape& in) {
  auto fail = [&](const std::string& msg) -> Shape {
    throw ContractError(at_layer(l, layer.kind) + ": " + msg + ", input " +
                        shape_to_string(in));
  };
  switch (layer.kind) {
    case LayerKind::kLinear: {
      if (layer.weight.rank() != 2) return fail("weight must be [out, in]");
      if (in.size() != 1 || in[0] != layer.weight.dim(1)) {
        return fail("weight " + shape_to_string(layer.weight.shape()) +
                    " does not accept input");
      }
      if (layer.bias.shape() != Shape{layer.weight.dim(0)}) {
        return fail("bias length must equal output units");
      }
      return {layer.weight.dim(0)};
    }
    case LayerKind::kConv2d: {
      if (layer.weight.rank() != 4) return fail("weight must be [outC,inC,kH,kW]");
      if (in.size() != 3 || in[0] != layer.weight.dim(1)) {
        return fail("weight " + shape_to_string(layer.weight.shape()) +
                    " does not accept input");
      }
      if (layer.bias.shape() != Shape{layer.weight.dim(0)}) {
        return fail("bias length must equal output channels");
      }
      if (layer.stride == 0) return fail("stride must be positive");
      if (in[1] + 2 * layer.padding < layer.weight.dim(2) ||
          in[2] + 2 * layer.padding < layer.weight.dim(3)) {
        return fail("kernel larger than padded input");
      }
      return {layer.weight.dim(0),
              (in[1] + 2 * layer.padding - layer.weight.dim(2)) / layer.stride +
                  1,
              (in[2] + 2 * layer.padding - layer.weight.dim(3)) / layer.stride +
                  1};
    }
    case LayerKind::kMaxPool2d:
    case LayerKind::kAvgPool2d: {
      if (in.size() != 3) return fail("pooling needs [C,H,W]");
      if (layer.window == 0 || layer.stride == 0) {
        return fail("window and stride must be positive");
      }
      if (layer.padding >= layer.window) {
        return fail("padding must be smaller than the window");
      }
      if (in[1] + 2 * layer.padding < layer.window ||
          in[2] + 2 * layer.padding < layer.window) {
        return fail("window larger than padded input");
      }
      return {in[0],
              (in[1] + 2 * layer.padding - layer.window) / layer.stride + 1,
              (in[2] + 2 * layer.padding - layer.window) / layer.stride + 1};
    }
    case LayerKind::kRelu:
      return in;
    case LayerKind::kFlatten:
      return {shape_numel(in)};
  }
  return fail("unknown layer kind");
}

Shape batched(std::size_t batch, const Shape& s) {
  Shape out{batch};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

double he_bound(std::size_t fan_in) {
  return std::sqrt(6.0 / static_cast<double>(fan_in));
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kLinear: return "linear";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool2d: return "maxpool2d";
    case LayerKind::kAvgPool2d: return "avgpool2d";
    case LayerKind::kFlatten: return "flatten";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (LayerKind k : {LayerKind::kLinear, LayerKind::kConv2d, LayerKind::kRelu,
                      LayerKind::kMaxPool2d, LayerKind::kAvgPool2d,
                      LayerKind::kFlatten}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::linear(Tensor weight, Tensor bias) {
  LayerSpec s;
  s.kind = LayerKind::kLinear;
  s.weight = std::move(weight);
  s.bias = std::move(bias);
  return s;
}

LayerSpec LayerSpec::conv2d(Tensor weight, Tensor bias, std::size_t stride,
                            std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.weight = std::move(weight);
  s.bias = std::move(bias);
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::maxpool2d(std::size_t window, std::size_t stride,
                               std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool2d;
  s.window = window;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::avgpool2d(std::size_t window, std::size_t stride,
                               std::size_t padding) {
  LayerSpec s = maxpool2d(window, stride, padding);
  s.kind = LayerKind::kAvgPool2d;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::kFlatten;
  return s;
}

LayerSpec LayerSpec::linear_init(std::size_t in, std::size_t out, Rng& rng) {
  return linear(uniform_tensor({out, in}, he_bound(in), rng), Tensor({out}));
}

LayerSpec LayerSpec::conv2d_init(std::size_t in_channels,
                                 std::size_t out_channels, std::size_t kernel,
                                 Rng& rng, std::size_t stride,
                                 std::size_t padding) {
  const std::size_t fan_in = in_channels * kernel * kernel;
  return conv2d(uniform_tensor({out_channels, in_channels, kernel, kernel},
                               he_bound(fan_in), rng),
                Tensor({out_channels}), stride, padding);
}

Network::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : layers_(std::move(layers)) {
  for (std::size_t e : input_shape) {
    if (e == 0) throw ContractError("network input extents must be positive");
  }
  if (input_shape.empty()) throw ContractError("network input shape is empty");
  shapes_.assign(1, std::move(input_shape));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    shapes_.push_back(infer_output(l, layers_[l], shapes_.back()));
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const LayerSpec& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

ForwardResult forward(const Network& net, const Tensor& x, bool record) {
  const Shape& in = net.input_shape();
  bool is_batched;
  if (x.shape() == in) {
    is_batched = false;
  } else if (x.rank() == in.size() + 1 &&
             Shape(x.shape().begin() + 1, x.shape().end()) == in) {
    is_batched = true;
  } else {
    throw ContractError("layer 0: input " + shape_to_string(x.shape()) +
                        " does not match network input " + shape_to_string(in));
  }
  const std::size_t batch = is_batched ? x.dim(0) : 1;
  Tensor act = x.reshaped(batched(batch, in));

  ForwardResult result;
  if (record) {
    result.trace.emplace();
    result.trace->batched = is_batched;
    result.trace->activations.reserve(net.size() + 1);
    result.trace->activations.push_back(act);
  }
  for (std::size_t l = 0; l < net.size(); ++l) {
    const LayerSpec& layer = net.layer(l);
    Tensor next;
    switch (layer.kind) {
      case LayerKind::kLinear:
      case LayerKind::kConv2d:
        next = detail::weighted_forward(layer, act, layer.weight, &layer.bias);
        break;
      case LayerKind::kRelu:
        next = act;
        for (double& v : next.values()) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::kMaxPool2d:
        next = detail::maxpool_forward(layer, act);
        break;
      case LayerKind::kAvgPool2d:
        next = detail::avgpool_forward(layer, act);
        break;
      case LayerKind::kFlatten:
        next = std::move(act).reshaped(batched(batch, net.layer_output_shape(l)));
        break;
    }
    if (!next.all_finite()) {
      throw NumericError(at_layer(l, layer.kind) + ": non-finite activation");
    }
    if (record) result.trace->activations.push_back(next);
    act = std::move(next);
  }
  result.output = is_batched ? std::move(act)
                             : std::move(act).reshaped(net.output_shape());
  return result;
}

void check_trace(const Network& net, const ForwardTrace& trace) {
  if (trace.size() != net.size()) {
    throw ContractError("trace has " + std::to_string(trace.size()) +
                        " layers, network has " + std::to_string(net.size()));
  }
  const std::size_t batch = trace.batch();
  for (std::size_t l = 0; l <= net.size(); ++l) {
    if (trace.activations[l].shape() != batched(batch, net.layer_input_shape(l))) {
      throw ContractError("trace activation " + std::to_string(l) +
                          " does not match the network shape chain");
    }
  }
}

BackwardResult backward_grad(const Network& net, const ForwardTrace& trace,
                             const Tensor& grad_out, bool need_input_grad) {
  check_trace(net, trace);
  const std::size_t batch = trace.batch();
  const Shape out_shape = batched(batch, net.output_shape());
  if (grad_out.shape() != out_shape &&
      !(!trace.batched && grad_out.shape() == net.output_shape())) {
    throw ContractError("grad_out " + shape_to_string(grad_out.shape()) +
                        " does not match output " + shape_to_string(out_shape));
  }
  BackwardResult result;
  result.param_grads.resize(net.size());
  Tensor grad = grad_out.reshaped(out_shape);
  for (std::size_t l = net.size(); l-- > 0;) {
    const LayerSpec& layer = net.layer(l);
    const Tensor& x = trace.input(l);
    const bool need_grad_below = need_input_grad || l > 0;
    switch (layer.kind) {
      case LayerKind::kLinear: {
        LayerGrads& g = result.param_grads[l];
        detail::linear_param_grads(x, grad, g.weight, g.bias);
        if (need_grad_below) grad = detail::linear_transpose(grad, layer.weight);
        break;
      }
      case LayerKind::kConv2d: {
        LayerGrads& g = result.param_grads[l];
        g.weight = Tensor(layer.weight.shape());
        detail::conv2d_param_grads(x, grad, layer.stride, layer.padding,
                                   g.weight, g.bias);
        if (need_grad_below) {
          grad = detail::conv2d_transpose(grad, layer.weight, x.shape(),
                                          layer.stride, layer.padding);
        }
        break;
      }
      case LayerKind::kRelu:
        for (std::size_t i = 0; i < grad.size(); ++i) {
          if (!(x[i] > 0.0)) grad[i] = 0.0;
        }
        break;
      case LayerKind::kMaxPool2d:
        grad = detail::maxpool_route(layer, x, grad);
        break;
      case LayerKind::kAvgPool2d:
        grad = detail::avgpool_backward(layer, x, grad);
        break;
      case LayerKind::kFlatten:
        grad = std::move(grad).reshaped(x.shape());
        break;
    }
    if (!need_grad_below) break;
  }
  if (need_input_grad) {
    result.grad_in = trace.batched ? std::move(grad)
                                   : std::move(grad).reshaped(net.input_shape());
  }
  return result;
}

BackwardResult backward_grad(const Network& net,
                             const std::optional<ForwardTrace>& trace,
                             const Tensor& grad_out, bool need_input_grad) {
  if (!trace) {
    throw ContractError("backward_grad needs a trace recorded by forward(record=true)");
  }
  return backward_grad(net, *trace, grad_out, need_input_grad);
}

ForwardTrace gather_rows(const ForwardTrace& trace,
                         std::span<const std::size_t> rows) {
  if (rows.empty()) throw ContractError("gather_rows: no rows requested");
  ForwardTrace out;
  out.batched = true;
  for (const Tensor& act : trace.activations) {
    Shape shape = act.shape();
    const std::size_t n = act.size() / shape[0];
    shape[0] = rows.size();
    AlignedVector data;
    data.reserve(rows.size() * n);
    for (std::size_t r : rows) {
      if (r >= act.dim(0)) throw ContractError("gather_rows: row out of range");
      data.insert(data.end(), act.vec().begin() + static_cast<long>(r * n),
                  act.vec().begin() + static_cast<long>((r + 1) * n));
    }
    out.activations.emplace_back(std::move(shape), std::move(data));
  }
  return out;
}

void accumulate(ParamGrads& acc, const ParamGrads& other) {
  if (acc.empty()) {
    acc = other;
    return;
  }
  if (acc.size() != other.size()) throw ContractError("accumulate: layer count");
  for (std::size_t l = 0; l < acc.size(); ++l) {
    auto add = [](Tensor& a, const Tensor& b) {
      if (b.empty()) return;
      if (a.empty()) {
        a = b;
        return;
      }
      require_same_shape(a, b, "accumulate");
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    add(acc[l].weight, other[l].weight);
    add(acc[l].bias, other[l].bias);
  }
}

MomentumSgd::MomentumSgd(double lr, double momentum)
    : lr_(lr), momentum_(momentum) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
}

void MomentumSgd::set_learning_rate(double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  lr_ = lr;
}

void MomentumSgd::step(Network& net, const ParamGrads& grads) {
  if (grads.size() != net.size()) {
    throw ContractError("sgd step: " + std::to_string(grads.size()) +
                        " gradient entries for " + std::to_string(net.size()) +
                        " layers");
  }
  for (std::size_t l = 0; l < net.size(); ++l) {
    const LayerSpec& layer = net.layers_[l];
    if (!layer.has_params()) continue;
    if (grads[l].weight.shape() != layer.weight.shape() ||
        grads[l].bias.shape() != layer.bias.shape()) {
      throw ContractError(at_layer(l, layer.kind) +
                          ": gradient shape does not match parameters");
    }
    if (!grads[l].weight.all_finite() || !grads[l].bias.all_finite()) {
      throw NumericError(at_layer(l, layer.kind) + ": non-finite gradient");
    }
  }
  if (velocity_.empty()) {
    velocity_.resize(net.size());
    for (std::size_t l = 0; l < net.size(); ++l) {
      if (!net.layers_[l].has_params()) continue;
      velocity_[l].weight = Tensor(net.layers_[l].weight.shape());
      velocity_[l].bias = Tensor(net.layers_[l].bias.shape());
    }
  } else if (velocity_.size() != net.size()) {
    throw ContractError("sgd step: optimizer is bound to another network");
  }
  auto update = [&](Tensor& param, Tensor& vel, const Tensor& grad) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      vel[i] = momentum_ * vel[i] + grad[i];
      param[i] -= lr_ * vel[i];
    }
  };
  for (std::size_t l = 0; l < net.size(); ++l) {
    LayerSpec& layer = net.layers_[l];
    if (!layer.has_params()) continue;
    update(layer.weight, velocity_[l].weight, grads[l].weight);
    update(layer.bias, velocity_[l].bias, grads[l].bias);
  }
}

}  // namespace egt

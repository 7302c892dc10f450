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

#ifndef EGT_NETWORK_HPP_
#define EGT_NETWORK_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egt/rng.hpp"
#include "egt/tensor.hpp"

namespace egt {

enum class LayerKind { kLinear, kConv2d, kRelu, kMaxPool2d, kAvgPool2d, kFlatten };

std::string_view to_string(LayerKind kind);
// Throws ConfigError for unknown names.
LayerKind layer_kind_from_string(std::string_view name);

// One layer of a feedforward network.
//
//   linear:  weight [out, in],            bias [out]
//   conv2d:  weight [outC, inC, kH, kW],  bias [outC], stride, padding
//   pool:    window, stride, padding (padded cells never contribute)
//
// Padding is symmetric zero padding on both spatial axes.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  Tensor weight;
  Tensor bias;
  std::size_t window = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  bool has_params() const {
    return kind == LayerKind::kLinear || kind == LayerKind::kConv2d;
  }

  static LayerSpec linear(Tensor weight, Tensor bias);
  static LayerSpec conv2d(Tensor weight, Tensor bias, std::size_t stride = 1,
                          std::size_t padding = 0);
  static LayerSpec relu();
  static LayerSpec maxpool2d(std::size_t window, std::size_t stride,
                             std::size_t padding = 0);
  static LayerSpec avgpool2d(std::size_t window, std::size_t stride,
                             std::size_t padding = 0);
  static LayerSpec flatten();

  // He-style uniform fan-in initialization, zero bias.
  static LayerSpec linear_init(std::size_t in, std::size_t out, Rng& rng);
  static LayerSpec conv2d_init(std::size_t in_channels,
                               std::size_t out_channels, std::size_t kernel,
                               Rng& rng, std::size_t stride = 1,
                               std::size_t padding = 0);
};

class MomentumSgd;

// Ordered layer stack over a declared per-sample input shape. Construction
// validates that every layer accepts the shape produced by its predecessor.
class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const { return shapes_.front(); }
  const Shape& output_shape() const { return shapes_.back(); }
  // Per-sample shapes: layer_input_shape(l) feeds layer l.
  const Shape& layer_input_shape(std::size_t l) const { return shapes_.at(l); }
  const Shape& layer_output_shape(std::size_t l) const {
    return shapes_.at(l + 1);
  }

  std::size_t size() const { return layers_.size(); }
  const LayerSpec& layer(std::size_t l) const { return layers_.at(l); }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t parameter_count() const;

 private:
  friend class MomentumSgd;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_{Shape{}};
};

// Every activation of a recorded forward pass, with a leading batch axis.
// activations[l] is the input of layer l; activations[l + 1] its output.
// For linear and conv2d layers the output is the pre-activation.
struct ForwardTrace {
  bool batched = false;
  std::vector<Tensor> activations;

  std::size_t size() const {
    return activations.empty() ? 0 : activations.size() - 1;
  }
  std::size_t batch() const { return activations.front().dim(0); }
  const Tensor& input(std::size_t l) const { return activations.at(l); }
  const Tensor& output(std::size_t l) const { return activations.at(l + 1); }
};

struct ForwardResult {
  Tensor output;
  std::optional<ForwardTrace> trace;
};

// Runs x through every layer. x is either a single sample shaped like
// net.input_shape() or a batch with one extra leading axis; the output
// follows the same convention.
ForwardResult forward(const Network& net, const Tensor& x, bool record = false);

struct LayerGrads {
  Tensor weight;  // empty for parameter-free layers
  Tensor bias;
};
using ParamGrads = std::vector<LayerGrads>;

struct BackwardResult {
  Tensor grad_in;  // empty when the input gradient was not requested
  ParamGrads param_grads;
};

// Exact gradients of a scalar whose gradient w.r.t. the network output is
// grad_out. Parameter gradients are summed over the batch.
BackwardResult backward_grad(const Network& net, const ForwardTrace& trace,
                             const Tensor& grad_out,
                             bool need_input_grad = true);
BackwardResult backward_grad(const Network& net,
                             const std::optional<ForwardTrace>& trace,
                             const Tensor& grad_out,
                             bool need_input_grad = true);

// Throws ContractError unless the trace was recorded on a network with the
// same layer structure.
void check_trace(const Network& net, const ForwardTrace& trace);

// Rows `rows` of every activation, as a batched trace.
ForwardTrace gather_rows(const ForwardTrace& trace,
                         std::span<const std::size_t> rows);

// Adds `other` into `acc` (acc may be empty, in which case it is assigned).
void accumulate(ParamGrads& acc, const ParamGrads& other);

// Momentum SGD, v <- m v + g, w <- w - lr v. Buffers are created on first use
// and persist across steps. This is the only path that mutates a Network's
// parameters after construction.
class MomentumSgd {
 public:
  MomentumSgd(double lr, double momentum);

  void step(Network& net, const ParamGrads& grads);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr);
  double momentum() const { return momentum_; }

 private:
  double lr_;
  double momentum_;
  std::vector<LayerGrads> velocity_;
};

}  // namespace egt

#endif  // EGT_NETWORK_HPP_

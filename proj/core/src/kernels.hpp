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

#ifndef EGT_SRC_KERNELS_HPP_
#define EGT_SRC_KERNELS_HPP_

// Batched layer kernels shared by the gradient and relevance passes. All
// tensors carry a leading batch axis.

#include <cstddef>

#include "egt/network.hpp"
#include "egt/tensor.hpp"

namespace egt::detail {

struct Window2d {
  std::size_t channels, height, width;      // input
  std::size_t kernel_h, kernel_w;
  std::size_t stride, padding;
  std::size_t out_h, out_w;
};

Window2d make_window(const Shape& input_chw, std::size_t kernel_h,
                     std::size_t kernel_w, std::size_t stride,
                     std::size_t padding);

// Weighted layers. `bias` may be null.
Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor* bias);
Tensor linear_transpose(const Tensor& dy, const Tensor& weight);
void linear_param_grads(const Tensor& x, const Tensor& dy, Tensor& dweight,
                        Tensor& dbias);

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias,
                      std::size_t stride, std::size_t padding);
Tensor conv2d_transpose(const Tensor& dy, const Tensor& weight,
                        const Shape& x_shape, std::size_t stride,
                        std::size_t padding);
void conv2d_param_grads(const Tensor& x, const Tensor& dy, std::size_t stride,
                        std::size_t padding, Tensor& dweight, Tensor& dbias);

// Dispatch on layer.kind (linear or conv2d) with an explicit weight tensor,
// so relevance rules can substitute the positive or negative weight parts.
Tensor weighted_forward(const LayerSpec& layer, const Tensor& x,
                        const Tensor& weight, const Tensor* bias);
Tensor weighted_transpose(const LayerSpec& layer, const Tensor& dy,
                          const Tensor& weight, const Shape& x_shape);

// Pooling.
Tensor maxpool_forward(const LayerSpec& layer, const Tensor& x);
// Routes dy to the first maximal input of every window.
Tensor maxpool_route(const LayerSpec& layer, const Tensor& x, const Tensor& dy);
Tensor avgpool_forward(const LayerSpec& layer, const Tensor& x);
// Gradient of the average: dy split equally over the valid window cells.
Tensor avgpool_backward(const LayerSpec& layer, const Tensor& x,
                        const Tensor& dy);
// Relevance split proportional to each cell's share of the window sum, or
// equally when the window sums to zero.
Tensor avgpool_proportional(const LayerSpec& layer, const Tensor& x,
                            const Tensor& rel);

}  // namespace egt::detail

#endif  // EGT_SRC_KERNELS_HPP_

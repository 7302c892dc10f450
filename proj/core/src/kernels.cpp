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

#include "kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <limits>
#include <vector>

#include "egt/errors.hpp"

namespace egt::detail {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Output columns ox whose input column ox * stride + kx - padding is inside
// [0, width).
struct ColumnRange {
  std::size_t lo, hi;
};

ColumnRange valid_columns(const Window2d& g, std::size_t kx) {
  const long pad = static_cast<long>(g.padding) - static_cast<long>(kx);
  const long s = static_cast<long>(g.stride);
  const long w = static_cast<long>(g.width);
  const long out_w = static_cast<long>(g.out_w);
  long lo = pad > 0 ? (pad + s - 1) / s : 0;
  long hi = (w - 1 + pad) >= 0 ? (w - 1 + pad) / s + 1 : 0;
  lo = std::min(lo, out_w);
  hi = std::clamp(hi, lo, out_w);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// col has shape [C*kh*kw, out_h*out_w].
void im2col(const double* x, const Window2d& g, double* col) {
  const std::size_t spatial = g.out_h * g.out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
        const ColumnRange r = valid_columns(g, kx);
        double* dst = col + row * spatial;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          double* line = dst + oy * g.out_w;
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(line, line + g.out_w, 0.0);
            continue;
          }
          // Input index of output column ox is base + ox * stride.
          const long base = static_cast<long>((c * g.height + static_cast<std::size_t>(iy)) * g.width +
                                              kx) - static_cast<long>(g.padding);
          std::fill(line, line + r.lo, 0.0);
          if (g.stride == 1) {
            const double* src = x + (base + static_cast<long>(r.lo));
            std::copy(src, src + (r.hi - r.lo), line + r.lo);
          } else {
            for (std::size_t ox = r.lo; ox < r.hi; ++ox) {
              line[ox] = x[base + static_cast<long>(ox * g.stride)];
            }
          }
          std::fill(line + r.hi, line + g.out_w, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* col, const Window2d& g, double* x) {
  const std::size_t spatial = g.out_h * g.out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
        const ColumnRange r = valid_columns(g, kx);
        const double* src = col + row * spatial;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          const long base = static_cast<long>((c * g.height + static_cast<std::size_t>(iy)) * g.width +
                                              kx) - static_cast<long>(g.padding);
          const double* line = src + oy * g.out_w;
          for (std::size_t ox = r.lo; ox < r.hi; ++ox) {
            x[base + static_cast<long>(ox * g.stride)] += line[ox];
          }
        }
      }
    }
  }
}

Shape chw_of(const Tensor& batched) {
  return Shape(batched.shape().begin() + 1, batched.shape().end());
}

Window2d pool_window(const LayerSpec& layer, const Tensor& x) {
  return make_window(chw_of(x), layer.window, layer.window, layer.stride,
                     layer.padding);
}

// Calls fn(out_index, in_plane_offset, ylo, yhi, xlo, xhi) once per window
// with the clipped bounds of its valid input cells.
template <typename Fn>
void for_each_window(const Window2d& g, std::size_t batch, Fn&& fn) {
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t bc = 0; bc < batch * g.channels; ++bc) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const std::size_t out = bc * out_plane + oy * g.out_w + ox;
        const long y0 = static_cast<long>(oy * g.stride) -
                        static_cast<long>(g.padding);
        const long x0 = static_cast<long>(ox * g.stride) -
                        static_cast<long>(g.padding);
        const std::size_t ylo = static_cast<std::size_t>(std::max(y0, 0L));
        const std::size_t xlo = static_cast<std::size_t>(std::max(x0, 0L));
        const std::size_t yhi = static_cast<std::size_t>(std::min(
            y0 + static_cast<long>(g.kernel_h), static_cast<long>(g.height)));
        const std::size_t xhi = static_cast<std::size_t>(std::min(
            x0 + static_cast<long>(g.kernel_w), static_cast<long>(g.width)));
        fn(out, bc * in_plane, ylo, yhi, xlo, xhi);
      }
    }
  }
}

}  // namespace

Window2d make_window(const Shape& input_chw, std::size_t kernel_h,
                     std::size_t kernel_w, std::size_t stride,
                     std::size_t padding) {
  if (input_chw.size() != 3) {
    throw ContractError("2d window over non-[C,H,W] input " +
                        shape_to_string(input_chw));
  }
  if (stride == 0 || kernel_h == 0 || kernel_w == 0) {
    throw ContractError("2d window with zero kernel or stride");
  }
  Window2d g{input_chw[0], input_chw[1], input_chw[2], kernel_h, kernel_w,
             stride, padding, 0, 0};
  if (g.height + 2 * padding < kernel_h || g.width + 2 * padding < kernel_w) {
    throw ContractError("kernel larger than padded input " +
                        shape_to_string(input_chw));
  }
  g.out_h = (g.height + 2 * padding - kernel_h) / stride + 1;
  g.out_w = (g.width + 2 * padding - kernel_w) / stride + 1;
  return g;
}

Tensor linear_forward(const Tensor& x, const Tensor& weight,
                      const Tensor* bias) {
  const std::size_t batch = x.dim(0);
  const std::size_t in = weight.dim(1);
  const std::size_t out = weight.dim(0);
  Tensor y({batch, out});
  ConstMapMat xm(x.data(), batch, in);
  ConstMapMat wm(weight.data(), out, in);
  MapMat ym(y.data(), batch, out);
  ym.noalias() = xm * wm.transpose();
  if (bias) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < out; ++o) ym(b, o) += (*bias)[o];
    }
  }
  return y;
}

Tensor linear_transpose(const Tensor& dy, const Tensor& weight) {
  const std::size_t batch = dy.dim(0);
  const std::size_t in = weight.dim(1);
  const std::size_t out = weight.dim(0);
  Tensor dx({batch, in});
  ConstMapMat dym(dy.data(), batch, out);
  ConstMapMat wm(weight.data(), out, in);
  MapMat dxm(dx.data(), batch, in);
  dxm.noalias() = dym * wm;
  return dx;
}

void linear_param_grads(const Tensor& x, const Tensor& dy, Tensor& dweight,
                        Tensor& dbias) {
  const std::size_t batch = x.dim(0);
  const std::size_t in = x.dim(1);
  const std::size_t out = dy.dim(1);
  dweight = Tensor({out, in});
  dbias = Tensor({out});
  ConstMapMat xm(x.data(), batch, in);
  ConstMapMat dym(dy.data(), batch, out);
  MapMat dwm(dweight.data(), out, in);
  dwm.noalias() = dym.transpose() * xm;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) dbias[o] += dym(b, o);
  }
}

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias,
                      std::size_t stride, std::size_t padding) {
  const Window2d g =
      make_window(chw_of(x), weight.dim(2), weight.dim(3), stride, padding);
  const std::size_t batch = x.dim(0);
  const std::size_t out_c = weight.dim(0);
  const std::size_t patch = g.channels * g.kernel_h * g.kernel_w;
  const std::size_t spatial = g.out_h * g.out_w;
  Tensor y({batch, out_c, g.out_h, g.out_w});
  AlignedVector col(patch * spatial);
  ConstMapMat wm(weight.data(), out_c, patch);
  ConstMapMat colm(col.data(), patch, spatial);
  const std::size_t in_size = g.channels * g.height * g.width;
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.data() + b * in_size, g, col.data());
    MapMat ym(y.data() + b * out_c * spatial, out_c, spatial);
    ym.noalias() = wm * colm;
    if (bias) {
      for (std::size_t o = 0; o < out_c; ++o) ym.row(o).array() += (*bias)[o];
    }
  }
  return y;
}

Tensor conv2d_transpose(const Tensor& dy, const Tensor& weight,
                        const Shape& x_shape, std::size_t stride,
                        std::size_t padding) {
  const Shape chw(x_shape.begin() + 1, x_shape.end());
  const Window2d g =
      make_window(chw, weight.dim(2), weight.dim(3), stride, padding);
  const std::size_t batch = dy.dim(0);
  const std::size_t out_c = weight.dim(0);
  const std::size_t patch = g.channels * g.kernel_h * g.kernel_w;
  const std::size_t spatial = g.out_h * g.out_w;
  Tensor dx(x_shape);
  AlignedVector col(patch * spatial);
  ConstMapMat wm(weight.data(), out_c, patch);
  MapMat colm(col.data(), patch, spatial);
  const std::size_t in_size = g.channels * g.height * g.width;
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMapMat dym(dy.data() + b * out_c * spatial, out_c, spatial);
    colm.noalias() = wm.transpose() * dym;
    col2im_add(col.data(), g, dx.data() + b * in_size);
  }
  return dx;
}

void conv2d_param_grads(const Tensor& x, const Tensor& dy, std::size_t stride,
                        std::size_t padding, Tensor& dweight, Tensor& dbias) {
  const std::size_t out_c = dy.dim(1);
  const std::size_t kh = dweight.dim(2);
  const std::size_t kw = dweight.dim(3);
  const Window2d g = make_window(chw_of(x), kh, kw, stride, padding);
  const std::size_t batch = x.dim(0);
  const std::size_t patch = g.channels * kh * kw;
  const std::size_t spatial = g.out_h * g.out_w;
  dweight.fill(0.0);
  dbias = Tensor({out_c});
  AlignedVector col(patch * spatial);
  ConstMapMat colm(col.data(), patch, spatial);
  MapMat dwm(dweight.data(), out_c, patch);
  const std::size_t in_size = g.channels * g.height * g.width;
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.data() + b * in_size, g, col.data());
    ConstMapMat dym(dy.data() + b * out_c * spatial, out_c, spatial);
    dwm.noalias() += dym * colm.transpose();
    for (std::size_t o = 0; o < out_c; ++o) dbias[o] += dym.row(o).sum();
  }
}

Tensor weighted_forward(const LayerSpec& layer, const Tensor& x,
                        const Tensor& weight, const Tensor* bias) {
  if (layer.kind == LayerKind::kLinear) return linear_forward(x, weight, bias);
  return conv2d_forward(x, weight, bias, layer.stride, layer.padding);
}

Tensor weighted_transpose(const LayerSpec& layer, const Tensor& dy,
                          const Tensor& weight, const Shape& x_shape) {
  if (layer.kind == LayerKind::kLinear) return linear_transpose(dy, weight);
  return conv2d_transpose(dy, weight, x_shape, layer.stride, layer.padding);
}

Tensor maxpool_forward(const LayerSpec& layer, const Tensor& x) {
  const Window2d g = pool_window(layer, x);
  const std::size_t batch = x.dim(0);
  Tensor y({batch, g.channels, g.out_h, g.out_w});
  const double* xd = x.data();
  for_each_window(g, batch,
                  [&](std::size_t out, std::size_t base, std::size_t ylo,
                      std::size_t yhi, std::size_t xlo, std::size_t xhi) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (std::size_t iy = ylo; iy < yhi; ++iy) {
                      for (std::size_t ix = xlo; ix < xhi; ++ix) {
                        best = std::max(best, xd[base + iy * g.width + ix]);
                      }
                    }
                    y[out] = best;
                  });
  return y;
}

Tensor maxpool_route(const LayerSpec& layer, const Tensor& x,
                     const Tensor& dy) {
  const Window2d g = pool_window(layer, x);
  Tensor dx(x.shape());
  const double* xd = x.data();
  for_each_window(g, x.dim(0),
                  [&](std::size_t out, std::size_t base, std::size_t ylo,
                      std::size_t yhi, std::size_t xlo, std::size_t xhi) {
                    std::size_t arg = base + ylo * g.width + xlo;
                    for (std::size_t iy = ylo; iy < yhi; ++iy) {
                      for (std::size_t ix = xlo; ix < xhi; ++ix) {
                        const std::size_t i = base + iy * g.width + ix;
                        if (xd[i] > xd[arg]) arg = i;
                      }
                    }
                    dx[arg] += dy[out];
                  });
  return dx;
}

Tensor avgpool_forward(const LayerSpec& layer, const Tensor& x) {
  const Window2d g = pool_window(layer, x);
  const std::size_t batch = x.dim(0);
  Tensor y({batch, g.channels, g.out_h, g.out_w});
  const double* xd = x.data();
  for_each_window(g, batch,
                  [&](std::size_t out, std::size_t base, std::size_t ylo,
                      std::size_t yhi, std::size_t xlo, std::size_t xhi) {
                    double s = 0.0;
                    for (std::size_t iy = ylo; iy < yhi; ++iy) {
                      for (std::size_t ix = xlo; ix < xhi; ++ix) {
                        s += xd[base + iy * g.width + ix];
                      }
                    }
                    y[out] = s / static_cast<double>((yhi - ylo) * (xhi - xlo));
                  });
  return y;
}

Tensor avgpool_backward(const LayerSpec& layer, const Tensor& x,
                        const Tensor& dy) {
  const Window2d g = pool_window(layer, x);
  Tensor dx(x.shape());
  for_each_window(g, x.dim(0),
                  [&](std::size_t out, std::size_t base, std::size_t ylo,
                      std::size_t yhi, std::size_t xlo, std::size_t xhi) {
                    const double share =
                        dy[out] / static_cast<double>((yhi - ylo) * (xhi - xlo));
                    for (std::size_t iy = ylo; iy < yhi; ++iy) {
                      for (std::size_t ix = xlo; ix < xhi; ++ix) {
                        dx[base + iy * g.width + ix] += share;
                      }
                    }
                  });
  return dx;
}

Tensor avgpool_proportional(const LayerSpec& layer, const Tensor& x,
                            const Tensor& rel) {
  const Window2d g = pool_window(layer, x);
  Tensor dx(x.shape());
  const double* xd = x.data();
  for_each_window(g, x.dim(0),
                  [&](std::size_t out, std::size_t base, std::size_t ylo,
                      std::size_t yhi, std::size_t xlo, std::size_t xhi) {
                    double s = 0.0;
                    for (std::size_t iy = ylo; iy < yhi; ++iy) {
                      for (std::size_t ix = xlo; ix < xhi; ++ix) {
                        s += xd[base + iy * g.width + ix];
                      }
                    }
                    const double cells =
                        static_cast<double>((yhi - ylo) * (xhi - xlo));
                    for (std::size_t iy = ylo; iy < yhi; ++iy) {
                      for (std::size_t ix = xlo; ix < xhi; ++ix) {
                        const std::size_t i = base + iy * g.width + ix;
                        dx[i] += s == 0.0 ? rel[out] / cells
                                          : rel[out] * (xd[i] / s);
                      }
                    }
                  });
  return dx;
}

}  // namespace egt::detail

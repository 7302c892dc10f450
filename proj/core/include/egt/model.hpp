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

#ifndef EGT_MODEL_HPP_
#define EGT_MODEL_HPP_

#include <cstddef>
#include <string_view>

#include "egt/network.hpp"
#include "egt/rng.hpp"

namespace egt {

enum class HeadKind { kCosine, kRelation };

std::string_view to_string(HeadKind head);
HeadKind head_kind_from_string(std::string_view name);
// Throws ConfigError for values outside the enumeration.
void validate_head_kind(HeadKind head);

struct ModelSpec {
  HeadKind head = HeadKind::kCosine;
  Shape image_shape{3, 32, 32};
  std::size_t channels = 16;
  std::size_t blocks = 3;
  std::size_t relation_hidden = 8;
  double beta = 7.0;
};

// Image encoder plus a metric head. The relation network is empty for the
// cosine head.
struct FewShotModel {
  HeadKind head = HeadKind::kCosine;
  double beta = 7.0;
  Network encoder;
  Network relation;

  const Shape& feature_shape() const { return encoder.output_shape(); }
};

// conv3x3(pad 1) -> relu -> maxpool 2x2, repeated `blocks` times.
Network make_encoder(const Shape& image_shape, std::size_t channels,
                     std::size_t blocks, Rng& rng);

// Scores a channel-concatenated (prototype, query) pair [2C, h, w]:
// conv3x3 -> relu -> maxpool -> flatten -> linear -> relu -> linear(1).
// The pooling stage is skipped when the map is smaller than 2x2.
Network make_relation_net(const Shape& feature_shape, std::size_t hidden,
                          Rng& rng);

FewShotModel make_model(const ModelSpec& spec, Rng& rng);

}  // namespace egt

#endif  // EGT_MODEL_HPP_

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

#include "egt/model.hpp"

#include <string>

#include "egt/errors.hpp"

namespace egt {

std::string_view to_string(HeadKind head) {
  switch (head) {
    case HeadKind::kCosine: return "cosine";
    case HeadKind::kRelation: return "relation";
  }
  return "unknown";
}

HeadKind head_kind_from_string(std::string_view name) {
  if (name == "cosine") return HeadKind::kCosine;
  if (name == "relation") return HeadKind::kRelation;
  throw ConfigError("unknown head kind '" + std::string(name) + "'");
}

void validate_head_kind(HeadKind head) {
  if (head != HeadKind::kCosine && head != HeadKind::kRelation) {
    throw ConfigError("unknown head kind " +
                      std::to_string(static_cast<int>(head)));
  }
}

Network make_encoder(const Shape& image_shape, std::size_t channels,
                     std::size_t blocks, Rng& rng) {
  if (image_shape.size() != 3) {
    throw ConfigError("encoder input must be [C,H,W], got " +
                      shape_to_string(image_shape));
  }
  if (channels == 0 || blocks == 0) {
    throw ConfigError("encoder needs at least one block and one channel");
  }
  std::vector<LayerSpec> layers;
  std::size_t in_c = image_shape[0];
  for (std::size_t b = 0; b < blocks; ++b) {
    layers.push_back(LayerSpec::conv2d_init(in_c, channels, 3, rng, 1, 1));
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::maxpool2d(2, 2));
    in_c = channels;
  }
  return Network(image_shape, std::move(layers));
}

Network make_relation_net(const Shape& feature_shape, std::size_t hidden,
                          Rng& rng) {
  if (feature_shape.size() != 3) {
    throw ConfigError("relation net needs [C,h,w] features");
  }
  const std::size_t c = feature_shape[0];
  std::size_t h = feature_shape[1];
  std::size_t w = feature_shape[2];
  std::vector<LayerSpec> layers;
  layers.push_back(LayerSpec::conv2d_init(2 * c, c, 3, rng, 1, 1));
  layers.push_back(LayerSpec::relu());
  if (h >= 2 && w >= 2) {
    layers.push_back(LayerSpec::maxpool2d(2, 2));
    h /= 2;
    w /= 2;
  }
  layers.push_back(LayerSpec::flatten());
  layers.push_back(LayerSpec::linear_init(c * h * w, hidden, rng));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::linear_init(hidden, 1, rng));
  return Network({2 * c, feature_shape[1], feature_shape[2]}, std::move(layers));
}

FewShotModel make_model(const ModelSpec& spec, Rng& rng) {
  validate_head_kind(spec.head);
  if (!(spec.beta > 0.0)) throw ConfigError("beta must be positive");
  FewShotModel model;
  model.head = spec.head;
  model.beta = spec.beta;
  model.encoder = make_encoder(spec.image_shape, spec.channels, spec.blocks, rng);
  if (spec.head == HeadKind::kRelation) {
    model.relation =
        make_relation_net(model.encoder.output_shape(), spec.relation_hidden, rng);
  }
  return model;
}

}  // namespace egt

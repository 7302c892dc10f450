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

#ifndef EGT_DATA_HPP_
#define EGT_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "egt/rng.hpp"
#include "egt/tensor.hpp"

namespace egt::data {

// Images [C,H,W] with values in [0,1], one class id per image.
struct LabeledImageSet {
  std::string domain_tag;
  Shape image_shape;
  std::vector<Tensor> images;
  std::vector<int> labels;
  // class id -> indices into images, ascending. Rebuilt by make_image_set.
  std::map<int, std::vector<std::size_t>> class_index;

  std::size_t size() const { return images.size(); }
  std::vector<int> classes() const;
  // Throws DataError when shapes, labels or the class index disagree.
  void validate() const;
  // Keeps only images whose class is listed, preserving order.
  LabeledImageSet select_classes(std::span<const int> keep) const;
};

LabeledImageSet make_image_set(std::string domain_tag, Shape image_shape,
                               std::vector<Tensor> images,
                               std::vector<int> labels);

// K-way N-shot task. Local labels index `classes`; ids refer to the source
// set. Support rows are grouped by class.
struct Episode {
  std::size_t way = 0;
  std::size_t shot = 0;
  std::vector<int> classes;
  std::vector<Tensor> support_images;
  std::vector<int> support_labels;
  std::vector<std::size_t> support_ids;
  std::vector<Tensor> query_images;
  std::vector<int> query_labels;
  std::vector<std::size_t> query_ids;

  std::size_t queries() const { return query_images.size(); }
};

// Classes are drawn uniformly without replacement among those holding at
// least shot + ceil(queries / way) images. Queries are spread as evenly as
// possible; the classes receiving one extra query are drawn at random.
Episode sample_episode(const LabeledImageSet& set, std::size_t way,
                       std::size_t shot, std::size_t queries, Rng& rng);

// Procedural multi-domain image generator. A class is a fixed composite of
// geometric primitives; a domain is a rendering style (background texture,
// palette, stroke, noise). Class geometry is shared by all domains.
struct GeneratorSpec {
  std::size_t domains = 2;
  std::size_t classes = 20;
  std::size_t images_per_class = 60;
  Shape image_shape{3, 32, 32};
  std::size_t max_primitives = 3;
  // Foreground colours per domain.
  std::size_t palette_size = 3;
  double position_jitter = 2.0;  // pixels
  double scale_jitter = 0.15;    // relative
  // Required max-over-channels gap between domain channel means.
  double min_domain_gap = 0.05;

  void validate() const;
};

std::string domain_tag(std::size_t index);

// Keys are domain tags "A", "B", ... Throws DataError when two domains end
// up closer than spec.min_domain_gap.
std::map<std::string, LabeledImageSet> gen_synthetic_domains(
    const GeneratorSpec& spec, Rng& rng);

std::vector<double> channel_means(const LabeledImageSet& set);
double domain_gap(const LabeledImageSet& a, const LabeledImageSet& b);

// EGTD file: "EGTD\n", one manifest line
//   classes=<n> counts=<c1,...> shape=<C>,<H>,<W> domain=<tag>\n
// then float32 little-endian pixels in class-major order and one int32
// little-endian label per image.
void save_dataset(const LabeledImageSet& set, const std::filesystem::path& path);
LabeledImageSet load_dataset(const std::filesystem::path& path);

}  // namespace egt::data

#endif  // EGT_DATA_HPP_

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

#ifndef EGT_EVAL_HPP_
#define EGT_EVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "egt/data.hpp"
#include "egt/lrp.hpp"
#include "egt/model.hpp"
#include "egt/rng.hpp"
#include "egt/tensor.hpp"

namespace egt::eval {

struct EvalReport {
  double mean_accuracy = 0.0;
  double ci95 = 0.0;  // 1.96 * sample std / sqrt(n); 0 when n < 2
  bool ci_degenerate = false;
  std::size_t episodes = 0;
  std::vector<double> accuracies;
  std::string config_echo;
};

// Half-width of the normal 95% interval of the mean. Sets `degenerate` (when
// given) and returns 0 for fewer than two values.
double ci95_half_width(std::span<const double> values, bool* degenerate = nullptr);

EvalReport summarize(std::vector<double> accuracies, std::string config_echo = {});

// "episodes,mean_acc,ci95" plus one data row.
std::string report_csv(const EvalReport& report);
std::string report_summary(const EvalReport& report);

// Encoder features of a stack of images [N, C, H, W] -> [N, c, h, w].
Tensor encode_images(const FewShotModel& model, std::span<const Tensor> images);

// Class probabilities of every query given support features and labels.
std::vector<std::vector<double>> query_probabilities(const FewShotModel& model,
                                                     const Tensor& support_features,
                                                     std::span<const int> support_labels,
                                                     const Tensor& query_features,
                                                     std::size_t way);

// Predicted episode-local class of every query.
std::vector<std::size_t> predict(const FewShotModel& model, const data::Episode& episode);

double episode_accuracy(std::span<const std::size_t> predictions,
                        std::span<const int> labels);

struct EvalConfig {
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t queries = 16;
  std::size_t episodes = 2000;
  std::size_t workers = 1;
};

// Samples cfg.episodes episodes. Episode i draws from its own generator
// seeded from `rng` in order, so results do not depend on cfg.workers.
EvalReport evaluate(const FewShotModel& model, const data::LabeledImageSet& set,
                    const EvalConfig& cfg, Rng& rng);

struct TransductiveResult {
  std::vector<std::size_t> predictions;
  // Working support size after each iteration.
  std::vector<std::size_t> support_sizes;
  std::vector<std::string> warnings;
};

// Each iteration predicts all queries, then moves the most confident
// (maximum class probability) not yet absorbed queries into a working copy of
// the support set under their predicted labels. Counts beyond the remaining
// queries are clamped with a warning. Final predictions use the last support.
TransductiveResult transductive_infer(const FewShotModel& model,
                                      const data::Episode& episode,
                                      std::span<const std::size_t> candidates_per_iter);

// Transductive counterpart of evaluate().
EvalReport evaluate_transductive(const FewShotModel& model,
                                 const data::LabeledImageSet& set,
                                 const EvalConfig& cfg,
                                 std::span<const std::size_t> candidates_per_iter,
                                 Rng& rng);

// Linear interpolation between order statistics at h = (n - 1) q.
double quantile(std::vector<double> values, double q);

// Per-channel q-quantile over the spatial positions of feat [C, H, W].
std::vector<double> spatial_quantile_pool(const Tensor& feat, double q);

struct FeatureStats {
  std::vector<double> f;  // 95% spatial quantile per channel
  double s2 = 0.0;        // population variance of f
  double qdiff = 0.0;     // quantile(f, 0.95) - quantile(f, 0.45)
};

FeatureStats feature_stats(const Tensor& feat);

struct StatsAggregate {
  std::size_t count = 0;
  double mean_s2 = 0.0;
  double std_s2 = 0.0;
  double median_s2 = 0.0;
  double mean_qdiff = 0.0;
  double std_qdiff = 0.0;
  double median_qdiff = 0.0;
};

// Sample standard deviations; 0 for a single entry.
StatsAggregate aggregate(std::span<const FeatureStats> stats);

// Feature statistics of every image of `set` through the model's encoder.
std::vector<FeatureStats> dataset_feature_stats(const FewShotModel& model,
                                                const data::LabeledImageSet& set,
                                                std::size_t batch = 64);

// Relevance of the input image of one query for a target class, propagated
// through the head and the encoder.
Tensor explain_input(const FewShotModel& model, const data::Episode& episode,
                     std::size_t query, std::size_t target,
                     const lrp::LrpConfig& cfg);

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
};

// Channel-summed relevance divided by its maximum magnitude v, mapped to
//   v >= 0: (255, 255 (1 - v), 255 (1 - v))
//   v <  0: (255 (1 + v), 255 (1 + v), 255)
// so zero is white. With an underlay [1 or 3, H, W] in [0, 1] the result is
// alpha * heat + (1 - alpha) * underlay.
RgbImage heatmap_image(const Tensor& rel_input, const Tensor* underlay = nullptr,
                       double alpha = 0.6);

// Binary P6 portable pixmap.
std::string encode_ppm(const RgbImage& image);

void render_heatmap(const Tensor& rel_input, const Tensor* underlay,
                    const std::filesystem::path& path, double alpha = 0.6);

}  // namespace egt::eval

#endif  // EGT_EVAL_HPP_

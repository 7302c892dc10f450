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

#ifndef EGT_EGT_TRAIN_HPP_
#define EGT_EGT_TRAIN_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "egt/data.hpp"
#include "egt/lrp.hpp"
#include "egt/model.hpp"
#include "egt/network.hpp"

namespace egt::train {

enum class Mode { kBaseline, kEgt };

struct TrainConfig {
  // Loss = xi * CE(y, p) + lambda * CE(y, p_lrp).
  double xi = 1.0;
  double lambda = 1.0;
  lrp::LrpConfig lrp;
  double lr = 1e-3;
  double momentum = 0.9;
  std::size_t episodes_per_epoch = 100;
  std::size_t epochs = 100;
  std::size_t lr_decay_every = 40;  // epochs; 0 disables decay
  double lr_decay_factor = 0.5;
  std::uint64_t seed = 0;
  HeadKind head = HeadKind::kCosine;
  // Treat the relevance weights as constants in the backward pass.
  bool stop_gradient_through_weights = true;
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t queries = 16;

  void validate() const;
};

// Loss weights per head and shot count:
//   baseline: xi = 1, lambda = 0
//   egt, cosine head: xi = 0, lambda = 1
//   egt, relation head: xi = 1 and lambda = 0.5 (1-shot) or 1 (otherwise)
TrainConfig default_config(HeadKind head, std::size_t shot, Mode mode);

struct EpisodeResult {
  double loss_plain = 0.0;
  double loss_lrp = 0.0;
  double loss_total = 0.0;
  std::vector<std::vector<double>> pred;      // [query][class] probabilities
  std::vector<std::vector<double>> pred_lrp;  // after relevance weighting
  double accuracy = 0.0;                      // of pred
};

// w = 1 + R for R in [-1, 1].
Tensor lrp_weights(const Tensor& rel_normalized);
// Elementwise f_p * w.
Tensor weighted_features(const Tensor& f_p, const Tensor& w);

// -log p[label], with p[label] clamped at 1e-12.
double cross_entropy(std::span<const double> probs, std::size_t label);
double egt_loss(std::size_t label, std::span<const double> p,
                std::span<const double> p_lrp, double xi, double lambda);

struct EpisodeGradients {
  EpisodeResult result;
  ParamGrads encoder;
  ParamGrads relation;  // empty for the cosine head
  // Per query, shaped like the classifier input: the query feature for the
  // cosine head, one (prototype, query) pair [2C, h, w] for the relation head.
  std::vector<Tensor> weights;
};

// Loss and parameter gradients of one episode without updating the model.
// With `frozen_weights` the relevance weights are taken as given instead of
// being recomputed from the current parameters.
EpisodeGradients episode_gradients(const FewShotModel& model,
                                   const data::Episode& episode,
                                   const TrainConfig& cfg,
                                   const std::vector<Tensor>* frozen_weights = nullptr);

// Forward, explain, re-weight, re-predict, merged loss, momentum SGD.
class EgtTrainer {
 public:
  EgtTrainer(FewShotModel& model, TrainConfig cfg);

  EpisodeResult train_episode(const data::Episode& episode);

  const TrainConfig& config() const { return cfg_; }
  void set_learning_rate(double lr);

 private:
  FewShotModel& model_;
  TrainConfig cfg_;
  MomentumSgd encoder_opt_;
  MomentumSgd relation_opt_;
};

// Conventional episodic training on CE(y, p) alone; no relevance pass.
class PlainEpisodicTrainer {
 public:
  PlainEpisodicTrainer(FewShotModel& model, double lr, double momentum);

  EpisodeResult train_episode(const data::Episode& episode);
  void set_learning_rate(double lr);

 private:
  FewShotModel& model_;
  MomentumSgd encoder_opt_;
  MomentumSgd relation_opt_;
};

using EpisodeSource = std::function<data::Episode()>;

struct TrainLogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;  // episodes trained so far
  double loss_plain = 0.0;
  double loss_lrp = 0.0;
  double loss_total = 0.0;
  double acc = 0.0;
};

std::string log_header();
std::string format_log_row(const TrainLogRow& row);

// Runs cfg.epochs x cfg.episodes_per_epoch episodes. After every epoch one
// CSV row of epoch means is appended to `log_path` and the model is written
// to `checkpoint_path` (either path may be empty to skip it).
std::vector<TrainLogRow> train(FewShotModel& model, const EpisodeSource& source,
                               const TrainConfig& cfg,
                               const std::filesystem::path& checkpoint_path,
                               const std::filesystem::path& log_path);

}  // namespace egt::train

#endif  // EGT_EGT_TRAIN_HPP_

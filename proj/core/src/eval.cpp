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

#include "egt/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "binary_io.hpp"
#include "egt/errors.hpp"
#include "egt/heads.hpp"
#include "egt/network.hpp"

namespace egt::eval {
namespace {

Tensor rows_of(const Tensor& t, std::size_t begin, std::size_t count) {
  Shape shape = t.shape();
  const std::size_t n = t.size() / shape[0];
  shape[0] = count;
  const auto first = t.vec().begin() + static_cast<long>(begin * n);
  return Tensor(std::move(shape), std::vector<double>(first, first + static_cast<long>(count * n)));
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first
// failure.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::uint64_t> episode_seeds(std::size_t n, Rng& rng) {
  std::vector<std::uint64_t> seeds(n);
  for (auto& s : seeds) s = rng.next_u64();
  return seeds;
}

std::string echo_of(const EvalConfig& cfg) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "way=%zu shot=%zu queries=%zu episodes=%zu", cfg.way,
                cfg.shot, cfg.queries, cfg.episodes);
  return buf;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace

double ci95_half_width(std::span<const double> values, bool* degenerate) {
  if (degenerate) *degenerate = values.size() < 2;
  if (values.size() < 2) return 0.0;
  return 1.96 * sample_std(values) / std::sqrt(static_cast<double>(values.size()));
}

EvalReport summarize(std::vector<double> accuracies, std::string config_echo) {
  if (accuracies.empty()) throw ContractError("evaluation needs at least one episode");
  EvalReport r;
  r.mean_accuracy = mean_of(accuracies);
  r.ci95 = ci95_half_width(accuracies, &r.ci_degenerate);
  r.episodes = accuracies.size();
  r.accuracies = std::move(accuracies);
  r.config_echo = std::move(config_echo);
  return r;
}

std::string report_csv(const EvalReport& report) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "episodes,mean_acc,ci95\n%zu,%.17g,%.17g\n",
                report.episodes, report.mean_accuracy, report.ci95);
  return buf;
}

std::string report_summary(const EvalReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "accuracy %.2f%% +- %.2f%% over %zu episodes%s",
                100.0 * report.mean_accuracy, 100.0 * report.ci95, report.episodes,
                report.ci_degenerate ? " (degenerate: interval undefined for a single episode)" : "");
  return buf;
}

Tensor encode_images(const FewShotModel& model, std::span<const Tensor> images) {
  if (images.empty()) throw ContractError("no images to encode");
  return forward(model.encoder, stack(images)).output;
}

std::vector<std::vector<double>> query_probabilities(const FewShotModel& model,
                                                     const Tensor& support_features,
                                                     std::span<const int> support_labels,
                                                     const Tensor& query_features,
                                                     std::size_t way) {
  const heads::ClassPrototypes protos =
      heads::make_prototypes(support_features, support_labels, way);
  const std::size_t nq = query_features.dim(0);
  std::vector<std::vector<double>> probs;
  probs.reserve(nq);
  if (model.head == HeadKind::kCosine) {
    for (std::size_t q = 0; q < nq; ++q) {
      probs.push_back(heads::scaled_softmax(
          heads::cosine_scores(query_features.slice(q), protos), model.beta));
    }
    return probs;
  }
  const Tensor logits = forward(model.relation, heads::make_pairs(query_features, protos)).output;
  const std::size_t k = protos.size();
  for (std::size_t q = 0; q < nq; ++q) {
    probs.push_back(heads::scaled_softmax(
        std::span<const double>(logits.data() + q * k, k), 1.0));
  }
  return probs;
}

namespace {

struct EpisodeFeatures {
  Tensor support;
  Tensor queries;
};

EpisodeFeatures encode_episode(const FewShotModel& model, const data::Episode& ep) {
  if (ep.support_images.empty() || ep.query_images.empty()) {
    throw ContractError("episode needs support and query images");
  }
  std::vector<Tensor> images(ep.support_images);
  images.insert(images.end(), ep.query_images.begin(), ep.query_images.end());
  const Tensor all = encode_images(model, images);
  const std::size_t ns = ep.support_images.size();
  return {rows_of(all, 0, ns), rows_of(all, ns, ep.query_images.size())};
}

std::vector<std::size_t> argmaxes(const std::vector<std::vector<double>>& probs) {
  std::vector<std::size_t> out;
  out.reserve(probs.size());
  for (const auto& p : probs) out.push_back(heads::argmax(p));
  return out;
}

}  // namespace

std::vector<std::size_t> predict(const FewShotModel& model, const data::Episode& episode) {
  const EpisodeFeatures f = encode_episode(model, episode);
  return argmaxes(query_probabilities(model, f.support, episode.support_labels,
                                      f.queries, episode.way));
}

double episode_accuracy(std::span<const std::size_t> predictions,
                        std::span<const int> labels) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw ContractError("predictions and labels differ in length");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == static_cast<std::size_t>(labels[i])) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

EvalReport evaluate(const FewShotModel& model, const data::LabeledImageSet& set,
                    const EvalConfig& cfg, Rng& rng) {
  if (cfg.episodes == 0) throw ContractError("evaluation needs at least one episode");
  const std::vector<std::uint64_t> seeds = episode_seeds(cfg.episodes, rng);
  std::vector<double> acc(cfg.episodes);
  parallel_for(cfg.episodes, cfg.workers, [&](std::size_t i) {
    Rng local(seeds[i]);
    const data::Episode ep = data::sample_episode(set, cfg.way, cfg.shot, cfg.queries, local);
    acc[i] = episode_accuracy(predict(model, ep), ep.query_labels);
  });
  return summarize(std::move(acc), echo_of(cfg));
}

TransductiveResult transductive_infer(const FewShotModel& model,
                                      const data::Episode& episode,
                                      std::span<const std::size_t> candidates_per_iter) {
  for (std::size_t t = 1; t < candidates_per_iter.size(); ++t) {
    if (candidates_per_iter[t] < candidates_per_iter[t - 1]) {
      throw ContractError("candidate counts must be nondecreasing");
    }
  }
  const EpisodeFeatures f = encode_episode(model, episode);
  const std::size_t nq = f.queries.dim(0);
  const std::size_t n = f.queries.size() / nq;

  AlignedVector support = f.support.vec();
  std::vector<int> labels = episode.support_labels;
  std::vector<bool> absorbed(nq, false);
  std::size_t remaining = nq;
  TransductiveResult out;

  auto current_probs = [&] {
    Shape shape = f.support.shape();
    shape[0] = labels.size();
    return query_probabilities(model, Tensor(shape, support), labels, f.queries,
                               episode.way);
  };

  for (std::size_t t = 0; t < candidates_per_iter.size(); ++t) {
    const auto probs = current_probs();
    std::size_t take = candidates_per_iter[t];
    if (take > remaining) {
      out.warnings.push_back("iteration " + std::to_string(t + 1) + ": " +
                             std::to_string(take) + " candidates requested, " +
                             std::to_string(remaining) + " queries left; clamped");
      take = remaining;
    }
    std::vector<std::size_t> order;
    for (std::size_t q = 0; q < nq; ++q) {
      if (!absorbed[q]) order.push_back(q);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return *std::max_element(probs[a].begin(), probs[a].end()) >
             *std::max_element(probs[b].begin(), probs[b].end());
    });
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t q = order[i];
      absorbed[q] = true;
      support.insert(support.end(), f.queries.data() + q * n, f.queries.data() + (q + 1) * n);
      labels.push_back(static_cast<int>(heads::argmax(probs[q])));
    }
    remaining -= take;
    out.support_sizes.push_back(labels.size());
  }
  out.predictions = argmaxes(current_probs());
  return out;
}

EvalReport evaluate_transductive(const FewShotModel& model,
                                 const data::LabeledImageSet& set,
                                 const EvalConfig& cfg,
                                 std::span<const std::size_t> candidates_per_iter,
                                 Rng& rng) {
  if (cfg.episodes == 0) throw ContractError("evaluation needs at least one episode");
  const std::vector<std::uint64_t> seeds = episode_seeds(cfg.episodes, rng);
  std::vector<double> acc(cfg.episodes);
  parallel_for(cfg.episodes, cfg.workers, [&](std::size_t i) {
    Rng local(seeds[i]);
    const data::Episode ep = data::sample_episode(set, cfg.way, cfg.shot, cfg.queries, local);
    acc[i] = episode_accuracy(transductive_infer(model, ep, candidates_per_iter).predictions,
                              ep.query_labels);
  });
  std::string echo = echo_of(cfg) + " candidates=";
  for (std::size_t t = 0; t < candidates_per_iter.size(); ++t) {
    echo += (t ? "," : "") + std::to_string(candidates_per_iter[t]);
  }
  return summarize(std::move(acc), std::move(echo));
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw ContractError("quantile fraction must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * q;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> spatial_quantile_pool(const Tensor& feat, double q) {
  if (feat.rank() != 3) throw ContractError("spatial pooling expects [C, H, W], got " +
                                            shape_to_string(feat.shape()));
  if (!(q > 0.0 && q < 1.0)) throw ContractError("pooling quantile must lie in (0, 1)");
  const std::size_t c = feat.dim(0);
  const std::size_t hw = feat.dim(1) * feat.dim(2);
  if (hw == 0) throw ContractError("empty spatial extent");
  std::vector<double> out(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    out[ch] = quantile(std::vector<double>(feat.data() + ch * hw, feat.data() + (ch + 1) * hw), q);
  }
  return out;
}

FeatureStats feature_stats(const Tensor& feat) {
  if (feat.rank() == 3 && feat.dim(0) < 2) throw ContractError("feature stats need C >= 2");
  FeatureStats s;
  s.f = spatial_quantile_pool(feat, 0.95);
  const double m = mean_of(s.f);
  for (double v : s.f) s.s2 += (v - m) * (v - m);
  s.s2 /= static_cast<double>(s.f.size());
  s.qdiff = quantile(s.f, 0.95) - quantile(s.f, 0.45);
  return s;
}

StatsAggregate aggregate(std::span<const FeatureStats> stats) {
  if (stats.empty()) throw ContractError("no feature statistics to aggregate");
  std::vector<double> s2, qd;
  for (const auto& s : stats) {
    s2.push_back(s.s2);
    qd.push_back(s.qdiff);
  }
  StatsAggregate a;
  a.count = stats.size();
  a.mean_s2 = mean_of(s2);
  a.std_s2 = sample_std(s2);
  a.median_s2 = quantile(s2, 0.5);
  a.mean_qdiff = mean_of(qd);
  a.std_qdiff = sample_std(qd);
  a.median_qdiff = quantile(qd, 0.5);
  return a;
}

std::vector<FeatureStats> dataset_feature_stats(const FewShotModel& model,
                                                const data::LabeledImageSet& set,
                                                std::size_t batch) {
  if (set.size() == 0) throw DataError("dataset " + set.domain_tag + " is empty");
  batch = std::max<std::size_t>(batch, 1);
  std::vector<FeatureStats> out;
  out.reserve(set.size());
  for (std::size_t begin = 0; begin < set.size(); begin += batch) {
    const std::size_t end = std::min(set.size(), begin + batch);
    const Tensor feats = encode_images(
        model, std::span<const Tensor>(set.images.data() + begin, end - begin));
    for (std::size_t i = 0; i < end - begin; ++i) out.push_back(feature_stats(feats.slice(i)));
  }
  return out;
}

Tensor explain_input(const FewShotModel& model, const data::Episode& episode,
                     std::size_t query, std::size_t target, const lrp::LrpConfig& cfg) {
  if (query >= episode.queries()) throw ContractError("query index out of range");
  if (target >= episode.way) throw ContractError("target class out of range");
  cfg.validate();
  const Tensor support = encode_images(model, episode.support_images);
  const heads::ClassPrototypes protos =
      heads::make_prototypes(support, episode.support_labels, episode.way);
  ForwardResult fr = forward(model.encoder, episode.query_images[query], true);
  Tensor feat_rel;
  if (model.head == HeadKind::kCosine) {
    const heads::HeadOutput ho = heads::cosine_head(fr.output, protos, model.beta);
    feat_rel = heads::lrp_through_head(model, fr.output, protos, ho.relevance_init, target, cfg);
  } else {
    const heads::RelationPass pass = heads::relation_head(fr.output, protos, model.relation);
    const heads::HeadOutput ho = heads::relation_output(pass);
    feat_rel = heads::lrp_through_head(model, fr.output, protos, ho.relevance_init, target,
                                       cfg, &pass);
  }
  return lrp::lrp_backward(model.encoder, *fr.trace, feat_rel, cfg).input_relevance();
}

RgbImage heatmap_image(const Tensor& rel_input, const Tensor* underlay, double alpha) {
  if (rel_input.rank() != 3) throw ContractError("heatmap expects relevance [C, H, W], got " +
                                                 shape_to_string(rel_input.shape()));
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in [0, 1]");
  const std::size_t c = rel_input.dim(0);
  const std::size_t h = rel_input.dim(1);
  const std::size_t w = rel_input.dim(2);
  if (underlay) {
    if (underlay->rank() != 3 || (underlay->dim(0) != 1 && underlay->dim(0) != 3) ||
        underlay->dim(1) != h || underlay->dim(2) != w) {
      throw ContractError("underlay shape " + shape_to_string(underlay->shape()) +
                          " does not match the relevance map");
    }
  }
  std::vector<double> sum(h * w, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) sum[i] += rel_input[ch * h * w + i];
  }
  double peak = 0.0;
  for (double v : sum) peak = std::max(peak, std::abs(v));
  if (!std::isfinite(peak)) throw NumericError("heatmap relevance is not finite");

  RgbImage img{w, h, std::vector<std::uint8_t>(h * w * 3)};
  for (std::size_t i = 0; i < h * w; ++i) {
    const double v = peak > 0.0 ? sum[i] / peak : 0.0;
    const double fade = 255.0 * (1.0 - std::abs(v));
    double rgb[3] = {255.0, fade, fade};
    if (v < 0.0) {
      rgb[0] = fade;
      rgb[2] = 255.0;
    }
    for (std::size_t k = 0; k < 3; ++k) {
      double value = std::round(rgb[k]);
      if (underlay) {
        const std::size_t uc = underlay->dim(0) == 3 ? k : 0;
        value = alpha * value + (1.0 - alpha) * 255.0 * (*underlay)[uc * h * w + i];
      }
      img.pixels[i * 3 + k] = to_byte(value);
    }
  }
  return img;
}

std::string encode_ppm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

void render_heatmap(const Tensor& rel_input, const Tensor* underlay,
                    const std::filesystem::path& path, double alpha) {
  detail::write_file(path, encode_ppm(heatmap_image(rel_input, underlay, alpha)));
}

}  // namespace egt::eval

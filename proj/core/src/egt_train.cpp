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

#include "egt/egt_train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "egt/checkpoint.hpp"
#include "egt/errors.hpp"
#include "egt/heads.hpp"

namespace egt::train {
namespace {

struct EncodedEpisode {
  ForwardTrace trace;
  Tensor support;  // [S, C, h, w]
  Tensor queries;  // [Q, C, h, w]
};

Tensor take_rows(const Tensor& t, std::size_t begin, std::size_t count) {
  Shape shape = t.shape();
  const std::size_t n = t.size() / shape[0];
  shape[0] = count;
  return Tensor(std::move(shape),
                AlignedVector(t.vec().begin() + static_cast<long>(begin * n),
                                    t.vec().begin() + static_cast<long>((begin + count) * n)));
}

EncodedEpisode encode_episode(const Network& encoder, const data::Episode& ep) {
  if (ep.support_images.empty() || ep.query_images.empty()) {
    throw ContractError("episode needs support and query images");
  }
  if (ep.support_labels.size() != ep.support_images.size() ||
      ep.query_labels.size() != ep.query_images.size()) {
    throw ContractError("episode labels do not match its images");
  }
  std::vector<Tensor> images;
  images.reserve(ep.support_images.size() + ep.query_images.size());
  images.insert(images.end(), ep.support_images.begin(), ep.support_images.end());
  images.insert(images.end(), ep.query_images.begin(), ep.query_images.end());
  ForwardResult fr = forward(encoder, stack(images), /*record=*/true);
  EncodedEpisode out;
  out.support = take_rows(fr.output, 0, ep.support_images.size());
  out.queries = take_rows(fr.output, ep.support_images.size(), ep.query_images.size());
  out.trace = std::move(*fr.trace);
  return out;
}

// Head predictions for a batch of query features, with what the backward
// pass needs.
struct HeadPass {
  std::vector<std::vector<double>> probs;
  ForwardTrace relation_trace;
  std::vector<std::vector<double>> logits;
};

HeadPass relation_forward(const FewShotModel& model, const Tensor& pairs,
                          std::size_t nq, std::size_t k) {
  HeadPass pass;
  ForwardResult fr = forward(model.relation, pairs, true);
  pass.relation_trace = std::move(*fr.trace);
  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<double> row(fr.output.vec().begin() + static_cast<long>(q * k),
                            fr.output.vec().begin() + static_cast<long>((q + 1) * k));
    pass.probs.push_back(heads::scaled_softmax(row, 1.0));
    pass.logits.push_back(std::move(row));
  }
  return pass;
}

HeadPass head_forward(const FewShotModel& model, const Tensor& queries,
                      const heads::ClassPrototypes& protos) {
  const std::size_t nq = queries.dim(0);
  if (model.head == HeadKind::kRelation) {
    return relation_forward(model, heads::make_pairs(queries, protos), nq, protos.size());
  }
  HeadPass pass;
  for (std::size_t q = 0; q < nq; ++q) {
    pass.probs.push_back(heads::scaled_softmax(
        heads::cosine_scores(queries.slice(q), protos), model.beta));
  }
  return pass;
}

double mean_cross_entropy(const HeadPass& pass, std::span<const int> labels) {
  double s = 0.0;
  for (std::size_t q = 0; q < labels.size(); ++q) {
    s += cross_entropy(pass.probs[q], static_cast<std::size_t>(labels[q]));
  }
  return s / static_cast<double>(labels.size());
}

// d cos(a, b) / da and / db, scaled by g, accumulated.
void cosine_backward(const double* a, const double* b, std::size_t n, double g,
                     double* ga, double* gb) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double na = std::sqrt(aa);
  const double nb = std::sqrt(bb);
  // Below the floor the norm is a constant and drops out of the derivative.
  const bool a_free = na >= heads::kCosineNormFloor;
  const bool b_free = nb >= heads::kCosineNormFloor;
  const double den = std::max(na, heads::kCosineNormFloor) * std::max(nb, heads::kCosineNormFloor);
  const double c = ab / den;
  const double inv = 1.0 / den;
  for (std::size_t i = 0; i < n; ++i) {
    ga[i] += g * (b[i] * inv - (a_free ? c * a[i] / aa : 0.0));
    gb[i] += g * (a[i] * inv - (b_free ? c * b[i] / bb : 0.0));
  }
}

// Gradient of `scale * sum_q CE(y_q, p_q)` w.r.t. the relation pairs.
Tensor relation_backward(const FewShotModel& model, const HeadPass& pass,
                         std::span<const int> labels, double scale,
                         ParamGrads& grad_relation) {
  const std::size_t nq = labels.size();
  const std::size_t k = pass.probs.front().size();
  Tensor grad_logits({nq * k, 1});
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t c = 0; c < k; ++c) {
      const double target = static_cast<int>(c) == labels[q] ? 1.0 : 0.0;
      grad_logits[q * k + c] = scale * (pass.probs[q][c] - target);
    }
  }
  BackwardResult br = backward_grad(model.relation, pass.relation_trace, grad_logits);
  accumulate(grad_relation, br.param_grads);
  return std::move(br.grad_in);
}

// Splits pair gradients into prototype and query halves. With `weights` the
// pairs were w_q * [p_k; q], so the gradient is scaled by w_q first.
void scatter_pair_grads(const Tensor& grad_pairs, std::size_t nq, std::size_t k,
                        const std::vector<Tensor>* weights, Tensor& grad_queries,
                        std::vector<Tensor>& grad_protos) {
  const std::size_t n = grad_queries.size() / nq;
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t c = 0; c < k; ++c) {
      const double* pair = grad_pairs.data() + (q * k + c) * 2 * n;
      const double* w = weights ? (*weights)[q].data() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        grad_protos[c][i] += w ? w[i] * pair[i] : pair[i];
        grad_queries[q * n + i] += w ? w[n + i] * pair[n + i] : pair[n + i];
      }
    }
  }
}

// Backward of `scale * sum_q CE(y_q, p_q)` into query features, prototypes
// and relation parameters.
void head_backward(const FewShotModel& model, const HeadPass& pass,
                   const Tensor& queries, const heads::ClassPrototypes& protos,
                   std::span<const int> labels, double scale, Tensor& grad_queries,
                   std::vector<Tensor>& grad_protos, ParamGrads& grad_relation) {
  const std::size_t nq = queries.dim(0);
  const std::size_t k = protos.size();
  const std::size_t n = queries.size() / nq;
  if (model.head == HeadKind::kRelation) {
    const Tensor grad_pairs = relation_backward(model, pass, labels, scale, grad_relation);
    scatter_pair_grads(grad_pairs, nq, k, nullptr, grad_queries, grad_protos);
    return;
  }
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t c = 0; c < k; ++c) {
      const double target = static_cast<int>(c) == labels[q] ? 1.0 : 0.0;
      const double g = scale * model.beta * (pass.probs[q][c] - target);
      cosine_backward(queries.data() + q * n, protos[c].data(), n, g,
                      grad_queries.data() + q * n, grad_protos[c].data());
    }
  }
}

// Gradient w.r.t. the encoder output rows [support; queries].
Tensor feature_grads(const EncodedEpisode& enc, const data::Episode& ep,
                     const Tensor& grad_queries,
                     const std::vector<Tensor>& grad_protos) {
  const std::size_t ns = enc.support.dim(0);
  const std::size_t nq = enc.queries.dim(0);
  const std::size_t n = enc.support.size() / ns;
  std::vector<std::size_t> counts(grad_protos.size(), 0);
  for (int label : ep.support_labels) ++counts[static_cast<std::size_t>(label)];
  Shape shape = enc.support.shape();
  shape[0] = ns + nq;
  Tensor g(shape);
  for (std::size_t s = 0; s < ns; ++s) {
    const std::size_t c = static_cast<std::size_t>(ep.support_labels[s]);
    const double inv = 1.0 / static_cast<double>(counts[c]);
    for (std::size_t i = 0; i < n; ++i) g[s * n + i] = grad_protos[c][i] * inv;
  }
  std::copy(grad_queries.data(), grad_queries.data() + nq * n, g.data() + ns * n);
  return g;
}

double accuracy_of(const std::vector<std::vector<double>>& probs,
                   std::span<const int> labels) {
  std::size_t hit = 0;
  for (std::size_t q = 0; q < labels.size(); ++q) {
    if (heads::argmax(probs[q]) == static_cast<std::size_t>(labels[q])) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

std::vector<Tensor> zero_protos(const heads::ClassPrototypes& protos) {
  std::vector<Tensor> out;
  for (const Tensor& p : protos.prototypes) out.emplace_back(p.shape());
  return out;
}

// Relevance weights of every query, explaining its predicted class.
std::vector<Tensor> compute_weights(const FewShotModel& model, const HeadPass& pass,
                                    const Tensor& queries,
                                    const heads::ClassPrototypes& protos,
                                    const lrp::LrpConfig& cfg) {
  const std::size_t nq = queries.dim(0);
  const std::size_t k = protos.size();
  std::vector<Tensor> weights;
  weights.reserve(nq);
  if (model.head == HeadKind::kCosine) {
    for (std::size_t q = 0; q < nq; ++q) {
      const std::size_t target = heads::argmax(pass.probs[q]);
      const std::vector<double> init = heads::relevance_init_nonparametric(pass.probs[q]);
      const Tensor rel = heads::explain_cosine(queries.slice(q), protos, target,
                                               init[target], cfg.epsilon);
      weights.push_back(lrp_weights(lrp::normalize_relevance(rel)));
    }
    return weights;
  }
  std::vector<std::size_t> rows(nq);
  Tensor out_rel({nq, 1});
  for (std::size_t q = 0; q < nq; ++q) {
    const std::size_t target = heads::argmax(pass.probs[q]);
    rows[q] = q * k + target;
    out_rel[q] = heads::relevance_init_parametric(pass.logits[q])[target];
  }
  const lrp::RelevanceTrace rt = lrp::lrp_backward(
      model.relation, gather_rows(pass.relation_trace, rows), out_rel, cfg);
  for (std::size_t q = 0; q < nq; ++q) {
    weights.push_back(lrp_weights(lrp::normalize_relevance(rt.input_relevance().slice(q))));
  }
  return weights;
}

// Rows q * K + k of the pairs scaled by the weights of query q.
Tensor weight_pairs(const Tensor& pairs, const std::vector<Tensor>& weights,
                    std::size_t k) {
  Tensor out = pairs;
  const std::size_t n = weights.front().size();
  for (std::size_t r = 0; r < pairs.dim(0); ++r) {
    const Tensor& w = weights[r / k];
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] *= w[i];
  }
  return out;
}

// Cosine head only: gradient through w = 1 + normalize(eps-rule relevance).
// grad_w is dL/dw of one query; adds into its query row and the target
// prototype.
void backward_through_weights(const double* a, const Tensor& proto,
                              std::span<const double> probs, double epsilon,
                              const std::vector<double>& grad_w, double* grad_a,
                              Tensor& grad_proto) {
  const std::size_t n = proto.size();
  double pn = 0.0;
  for (std::size_t i = 0; i < n; ++i) pn += proto[i] * proto[i];
  pn = std::sqrt(pn);
  const bool clamped = pn < heads::kCosineNormFloor;
  if (clamped) pn = heads::kCosineNormFloor;
  std::vector<double> phat(n), u(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    phat[i] = proto[i] / pn;
    u[i] = a[i] * phat[i];
    z += u[i];
  }
  const std::size_t target = heads::argmax(probs);
  const double r_target = heads::relevance_init_nonparametric(probs)[target];
  const double den = z + epsilon * (z >= 0.0 ? 1.0 : -1.0);
  if (r_target == 0.0 || den == 0.0) return;
  const double sk = (r_target / den) > 0.0 ? 1.0 : -1.0;
  std::size_t m = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs(u[i]) > std::abs(u[m])) m = i;
  }
  if (u[m] == 0.0) return;
  const double um_abs = std::abs(u[m]);
  double gu_dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) gu_dot += grad_w[i] * u[i];
  std::vector<double> grad_u(n);
  for (std::size_t j = 0; j < n; ++j) grad_u[j] = sk * grad_w[j] / um_abs;
  grad_u[m] -= sk * (u[m] > 0.0 ? 1.0 : -1.0) * gu_dot / (u[m] * u[m]);
  std::vector<double> grad_phat(n);
  double proj = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    grad_a[j] += grad_u[j] * phat[j];
    grad_phat[j] = grad_u[j] * a[j];
    proj += grad_phat[j] * phat[j];
  }
  for (std::size_t j = 0; j < n; ++j) {
    grad_proto[j] += (grad_phat[j] - (clamped ? 0.0 : phat[j] * proj)) / pn;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(xi >= 0.0) || !(lambda >= 0.0) || !(xi + lambda > 0.0)) {
    throw ConfigError("loss weights need xi >= 0, lambda >= 0 and xi + lambda > 0");
  }
  lrp.validate();
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw ConfigError("lr decay factor must lie in (0, 1]");
  }
  validate_head_kind(head);
  if (way < 2 || shot < 1 || queries < 1) {
    throw ConfigError("episodes need way >= 2, shot >= 1, queries >= 1");
  }
  if (!stop_gradient_through_weights && head != HeadKind::kCosine) {
    throw ConfigError("gradients through the relevance weights are only available "
                      "for the cosine head");
  }
}

TrainConfig default_config(HeadKind head, std::size_t shot, Mode mode) {
  TrainConfig cfg;
  cfg.head = head;
  cfg.shot = shot;
  if (mode == Mode::kBaseline) {
    cfg.xi = 1.0;
    cfg.lambda = 0.0;
  } else if (head == HeadKind::kCosine) {
    cfg.xi = 0.0;
    cfg.lambda = 1.0;
  } else {
    cfg.xi = 1.0;
    cfg.lambda = shot == 1 ? 0.5 : 1.0;
  }
  return cfg;
}

Tensor lrp_weights(const Tensor& rel_normalized) {
  Tensor w = rel_normalized;
  for (double& v : w.values()) {
    if (std::isnan(v)) throw NumericError("relevance weights got NaN relevance");
    if (!(v >= -1.0 && v <= 1.0)) {
      throw ContractError("relevance weights need normalized relevance in [-1, 1], got " +
                          std::to_string(v));
    }
    v = 1.0 + v;
  }
  return w;
}

Tensor weighted_features(const Tensor& f_p, const Tensor& w) {
  require_same_shape(f_p, w, "weighted features");
  Tensor out = f_p;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= w[i];
  return out;
}

double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) throw ContractError("cross entropy: label out of range");
  return -std::log(std::max(probs[label], 1e-12));
}

double egt_loss(std::size_t label, std::span<const double> p,
                std::span<const double> p_lrp, double xi, double lambda) {
  return xi * cross_entropy(p, label) + lambda * cross_entropy(p_lrp, label);
}

EpisodeGradients episode_gradients(const FewShotModel& model,
                                   const data::Episode& episode,
                                   const TrainConfig& cfg,
                                   const std::vector<Tensor>* frozen_weights) {
  cfg.validate();
  if (model.head != cfg.head) throw ConfigError("model head differs from the training config");
  const EncodedEpisode enc = encode_episode(model.encoder, episode);
  const heads::ClassPrototypes protos =
      heads::make_prototypes(enc.support, episode.support_labels, episode.way);
  const std::size_t nq = enc.queries.dim(0);
  const std::size_t k = protos.size();
  const std::size_t n = enc.queries.size() / nq;
  const std::span<const int> labels = episode.query_labels;
  const bool relation = model.head == HeadKind::kRelation;

  // Step 1: plain prediction.
  const HeadPass plain = head_forward(model, enc.queries, protos);

  // Steps 2-3: explain the predicted class, re-weight the classifier input
  // (the query feature, or every (prototype, query) pair).
  EpisodeGradients out;
  if (frozen_weights) {
    if (frozen_weights->size() != nq) throw ContractError("one frozen weight per query required");
    out.weights = *frozen_weights;
  } else {
    out.weights = compute_weights(model, plain, enc.queries, protos, cfg.lrp);
  }
  Tensor weighted;
  if (relation) {
    const Tensor pairs = heads::make_pairs(enc.queries, protos);
    for (const Tensor& w : out.weights) {
      if (w.size() * k * nq != pairs.size()) throw ContractError("relevance weights do not fit the pairs");
    }
    weighted = weight_pairs(pairs, out.weights, k);
  } else {
    weighted = enc.queries;
    for (std::size_t q = 0; q < nq; ++q) {
      weighted.set_slice(q, weighted_features(enc.queries.slice(q), out.weights[q]));
    }
  }

  // Step 4: re-predict and merge the losses.
  const HeadPass guided = relation ? relation_forward(model, weighted, nq, k)
                                   : head_forward(model, weighted, protos);
  EpisodeResult& r = out.result;
  r.loss_plain = mean_cross_entropy(plain, labels);
  r.loss_lrp = mean_cross_entropy(guided, labels);
  r.loss_total = cfg.xi * r.loss_plain + cfg.lambda * r.loss_lrp;
  r.pred = plain.probs;
  r.pred_lrp = guided.probs;
  r.accuracy = accuracy_of(plain.probs, labels);

  Tensor grad_queries(enc.queries.shape());
  std::vector<Tensor> grad_protos = zero_protos(protos);
  const double count = static_cast<double>(nq);
  if (cfg.xi != 0.0) {
    head_backward(model, plain, enc.queries, protos, labels, cfg.xi / count,
                  grad_queries, grad_protos, out.relation);
  }
  if (cfg.lambda != 0.0 && relation) {
    const Tensor grad_pairs =
        relation_backward(model, guided, labels, cfg.lambda / count, out.relation);
    scatter_pair_grads(grad_pairs, nq, k, &out.weights, grad_queries, grad_protos);
  } else if (cfg.lambda != 0.0) {
    Tensor grad_weighted(enc.queries.shape());
    head_backward(model, guided, weighted, protos, labels, cfg.lambda / count,
                  grad_weighted, grad_protos, out.relation);
    for (std::size_t q = 0; q < nq; ++q) {
      for (std::size_t i = 0; i < n; ++i) {
        grad_queries[q * n + i] += out.weights[q][i] * grad_weighted[q * n + i];
      }
    }
    if (!cfg.stop_gradient_through_weights && !frozen_weights) {
      for (std::size_t q = 0; q < nq; ++q) {
        std::vector<double> grad_w(n);
        for (std::size_t i = 0; i < n; ++i) {
          grad_w[i] = grad_weighted[q * n + i] * enc.queries[q * n + i];
        }
        const std::size_t target = heads::argmax(plain.probs[q]);
        backward_through_weights(enc.queries.data() + q * n, protos[target],
                                 plain.probs[q], cfg.lrp.epsilon, grad_w,
                                 grad_queries.data() + q * n, grad_protos[target]);
      }
    }
  }
  const Tensor grad_features = feature_grads(enc, episode, grad_queries, grad_protos);
  out.encoder = backward_grad(model.encoder, enc.trace, grad_features,
                              /*need_input_grad=*/false)
                    .param_grads;
  return out;
}

EgtTrainer::EgtTrainer(FewShotModel& model, TrainConfig cfg)
    : model_(model),
      cfg_(std::move(cfg)),
      encoder_opt_(cfg_.lr, cfg_.momentum),
      relation_opt_(cfg_.lr, cfg_.momentum) {
  cfg_.validate();
  if (model_.head != cfg_.head) throw ConfigError("model head differs from the training config");
}

EpisodeResult EgtTrainer::train_episode(const data::Episode& episode) {
  EpisodeGradients g = episode_gradients(model_, episode, cfg_);
  encoder_opt_.step(model_.encoder, g.encoder);
  if (model_.head == HeadKind::kRelation) relation_opt_.step(model_.relation, g.relation);
  return std::move(g.result);
}

void EgtTrainer::set_learning_rate(double lr) {
  encoder_opt_.set_learning_rate(lr);
  relation_opt_.set_learning_rate(lr);
  cfg_.lr = lr;
}

PlainEpisodicTrainer::PlainEpisodicTrainer(FewShotModel& model, double lr,
                                           double momentum)
    : model_(model), encoder_opt_(lr, momentum), relation_opt_(lr, momentum) {
  validate_head_kind(model_.head);
}

EpisodeResult PlainEpisodicTrainer::train_episode(const data::Episode& episode) {
  const EncodedEpisode enc = encode_episode(model_.encoder, episode);
  const heads::ClassPrototypes protos =
      heads::make_prototypes(enc.support, episode.support_labels, episode.way);
  const std::size_t nq = enc.queries.dim(0);
  const std::span<const int> labels = episode.query_labels;
  const HeadPass pass = head_forward(model_, enc.queries, protos);

  EpisodeResult r;
  r.loss_plain = mean_cross_entropy(pass, labels);
  r.loss_total = r.loss_plain;
  r.pred = pass.probs;
  r.accuracy = accuracy_of(pass.probs, labels);

  Tensor grad_queries(enc.queries.shape());
  std::vector<Tensor> grad_protos = zero_protos(protos);
  ParamGrads grad_relation;
  head_backward(model_, pass, enc.queries, protos, labels,
                1.0 / static_cast<double>(nq), grad_queries, grad_protos,
                grad_relation);
  const Tensor grad_features = feature_grads(enc, episode, grad_queries, grad_protos);
  encoder_opt_.step(model_.encoder,
                    backward_grad(model_.encoder, enc.trace, grad_features, false)
                        .param_grads);
  if (model_.head == HeadKind::kRelation) relation_opt_.step(model_.relation, grad_relation);
  return r;
}

void PlainEpisodicTrainer::set_learning_rate(double lr) {
  encoder_opt_.set_learning_rate(lr);
  relation_opt_.set_learning_rate(lr);
}

std::string log_header() { return "epoch,step,loss_plain,loss_lrp,loss_total,acc"; }

std::string format_log_row(const TrainLogRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%.9g,%.9g", row.epoch, row.step,
                row.loss_plain, row.loss_lrp, row.loss_total, row.acc);
  return buf;
}

std::vector<TrainLogRow> train(FewShotModel& model, const EpisodeSource& source,
                               const TrainConfig& cfg,
                               const std::filesystem::path& checkpoint_path,
                               const std::filesystem::path& log_path) {
  cfg.validate();
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::trunc);
    if (!log) throw DataError(log_path.string() + ": cannot open training log");
    log << log_header() << '\n' << std::flush;
  }
  EgtTrainer trainer(model, cfg);
  std::vector<TrainLogRow> rows;
  double lr = cfg.lr;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0 && cfg.lr_decay_every > 0 && epoch % cfg.lr_decay_every == 0) {
      lr *= cfg.lr_decay_factor;
      trainer.set_learning_rate(lr);
    }
    TrainLogRow row;
    row.epoch = epoch;
    for (std::size_t e = 0; e < cfg.episodes_per_epoch; ++e) {
      const EpisodeResult r = trainer.train_episode(source());
      row.loss_plain += r.loss_plain;
      row.loss_lrp += r.loss_lrp;
      row.loss_total += r.loss_total;
      row.acc += r.accuracy;
      ++step;
    }
    const double inv = cfg.episodes_per_epoch ? 1.0 / static_cast<double>(cfg.episodes_per_epoch) : 0.0;
    row.loss_plain *= inv;
    row.loss_lrp *= inv;
    row.loss_total *= inv;
    row.acc *= inv;
    row.step = step;
    rows.push_back(row);
    if (log.is_open()) {
      log << format_log_row(row) << '\n' << std::flush;
      if (!log) throw DataError(log_path.string() + ": write failed");
    }
    if (!checkpoint_path.empty()) save_checkpoint(model, checkpoint_path);
  }
  if (!checkpoint_path.empty() && cfg.epochs == 0) save_checkpoint(model, checkpoint_path);
  return rows;
}

}  // namespace egt::train

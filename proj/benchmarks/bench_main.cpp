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

#include <benchmark/benchmark.h>

#include "egt/data.hpp"
#include "egt/egt_train.hpp"
#include "egt/eval.hpp"
#include "egt/lrp.hpp"
#include "egt/model.hpp"

namespace {

const egt::data::LabeledImageSet& domain_a() {
  static const auto sets = [] {
    egt::Rng rng(11);
    egt::data::GeneratorSpec spec;
    spec.images_per_class = 30;
    return egt::data::gen_synthetic_domains(spec, rng);
  }();
  return sets.at("A");
}

egt::FewShotModel make(egt::HeadKind head) {
  egt::Rng rng(3);
  egt::ModelSpec spec;
  spec.head = head;
  return egt::make_model(spec, rng);
}

void BM_EncoderForward(benchmark::State& state) {
  const auto model = make(egt::HeadKind::kCosine);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<egt::Tensor> images(domain_a().images.begin(),
                                  domain_a().images.begin() + static_cast<long>(n));
  for (auto _ : state) {
    benchmark::DoNotOptimize(egt::eval::encode_images(model, images));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_EncoderForward)->Arg(1)->Arg(41);

void BM_EncoderLrp(benchmark::State& state) {
  const auto model = make(egt::HeadKind::kCosine);
  const auto fr = egt::forward(model.encoder, domain_a().images[0], true);
  egt::lrp::LrpConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(egt::lrp::lrp_backward(model.encoder, *fr.trace, fr.output, cfg));
  }
}
BENCHMARK(BM_EncoderLrp);

void BM_TrainEpisode(benchmark::State& state) {
  const auto head = state.range(0) ? egt::HeadKind::kRelation : egt::HeadKind::kCosine;
  const auto mode = state.range(1) ? egt::train::Mode::kEgt : egt::train::Mode::kBaseline;
  auto model = make(head);
  egt::train::EgtTrainer trainer(model, egt::train::default_config(head, 5, mode));
  egt::Rng rng(5);
  for (auto _ : state) {
    state.PauseTiming();
    const auto ep = egt::data::sample_episode(domain_a(), 5, 5, 16, rng);
    state.ResumeTiming();
    benchmark::DoNotOptimize(trainer.train_episode(ep));
  }
}
BENCHMARK(BM_TrainEpisode)
    ->Args({0, 0})
    ->Args({0, 1})
    ->Args({1, 0})
    ->Args({1, 1})
    ->Unit(benchmark::kMillisecond);

void BM_EvalEpisode(benchmark::State& state) {
  const auto model = make(egt::HeadKind::kCosine);
  egt::Rng rng(9);
  for (auto _ : state) {
    state.PauseTiming();
    const auto ep = egt::data::sample_episode(domain_a(), 5, 5, 16, rng);
    state.ResumeTiming();
    benchmark::DoNotOptimize(egt::eval::predict(model, ep));
  }
}
BENCHMARK(BM_EvalEpisode)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();

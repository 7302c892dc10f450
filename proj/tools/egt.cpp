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

// Command-line driver: gen-data, train, eval, explain, stats.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "egt/checkpoint.hpp"
#include "egt/data.hpp"
#include "egt/egt_train.hpp"
#include "egt/errors.hpp"
#include "egt/eval.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw egt::DataError("output directory " + dir.string() + " does not exist");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw egt::DataError(path.string() + ": cannot write");
    out << text;
    if (!out.flush()) throw egt::DataError(path.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// Echo of the options of the executed subcommand, loadable with --config.
// Unset optional values are left out.
void write_echo(const CLI::App& sub, const fs::path& dir) {
  std::istringstream body(sub.config_to_str(true, false));
  std::string text = "[" + sub.get_name() + "]\n";
  for (std::string line; std::getline(body, line);) {
    if (line.size() >= 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0) continue;
    text += line + "\n";
  }
  write_text(dir / (sub.get_name() + ".config.toml"), text);
}

struct GenDataArgs {
  fs::path out_dir;
  egt::data::GeneratorSpec spec;
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::uint64_t seed = 0;
};

void run_gen_data(const GenDataArgs& a, const CLI::App& sub) {
  require_dir(a.out_dir);
  egt::data::GeneratorSpec spec = a.spec;
  spec.image_shape = {a.channels, a.image_size, a.image_size};
  egt::Rng rng(a.seed);
  const auto domains = egt::data::gen_synthetic_domains(spec, rng);
  for (const auto& [tag, set] : domains) {
    const fs::path path = a.out_dir / ("domain_" + tag + ".egtd");
    egt::data::save_dataset(set, path);
    std::cout << "wrote " << path.string() << " (" << set.size() << " images)\n";
  }
  write_echo(sub, a.out_dir);
}

struct ModelArgs {
  std::size_t channels = 16;
  std::size_t blocks = 3;
  std::size_t relation_hidden = 8;
  double beta = 7.0;
};

struct TrainArgs {
  fs::path data;
  fs::path out_dir;
  std::string mode = "egt";
  std::string head = "cosine";
  ModelArgs model;
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t queries = 16;
  std::optional<double> xi;
  std::optional<double> lambda;
  double epsilon = 1e-3;
  double alpha = 1.0;
  double lr = 1e-3;
  double momentum = 0.9;
  std::size_t epochs = 100;
  std::size_t episodes_per_epoch = 100;
  std::size_t lr_decay_every = 40;
  double lr_decay_factor = 0.5;
  bool no_stop_gradient = false;
  std::uint64_t seed = 0;
};

void run_train(const TrainArgs& a, const CLI::App& sub) {
  require_dir(a.out_dir);
  const egt::HeadKind head = egt::head_kind_from_string(a.head);
  const auto mode = a.mode == "baseline" ? egt::train::Mode::kBaseline : egt::train::Mode::kEgt;
  egt::train::TrainConfig cfg = egt::train::default_config(head, a.shot, mode);
  if (a.xi) cfg.xi = *a.xi;
  if (a.lambda) cfg.lambda = *a.lambda;
  cfg.lrp.epsilon = a.epsilon;
  cfg.lrp.alpha = a.alpha;
  cfg.lr = a.lr;
  cfg.momentum = a.momentum;
  cfg.epochs = a.epochs;
  cfg.episodes_per_epoch = a.episodes_per_epoch;
  cfg.lr_decay_every = a.lr_decay_every;
  cfg.lr_decay_factor = a.lr_decay_factor;
  cfg.seed = a.seed;
  cfg.way = a.way;
  cfg.queries = a.queries;
  cfg.stop_gradient_through_weights = !a.no_stop_gradient;
  cfg.validate();

  const egt::data::LabeledImageSet set = egt::data::load_dataset(a.data);
  egt::Rng root(a.seed);
  egt::Rng init_rng = root.fork(1);
  auto episode_rng = std::make_shared<egt::Rng>(root.fork(2));

  egt::ModelSpec ms;
  ms.head = head;
  ms.image_shape = set.image_shape;
  ms.channels = a.model.channels;
  ms.blocks = a.model.blocks;
  ms.relation_hidden = a.model.relation_hidden;
  ms.beta = a.model.beta;
  egt::FewShotModel model = egt::make_model(ms, init_rng);

  // Fail on data shortfalls before the first epoch.
  {
    egt::Rng probe(0);
    (void)egt::data::sample_episode(set, cfg.way, cfg.shot, cfg.queries, probe);
  }
  const egt::train::EpisodeSource source = [&set, &cfg, episode_rng] {
    return egt::data::sample_episode(set, cfg.way, cfg.shot, cfg.queries, *episode_rng);
  };
  write_echo(sub, a.out_dir);
  const auto rows = egt::train::train(model, source, cfg, a.out_dir / "model.egt",
                                      a.out_dir / "train_log.csv");
  std::cout << "trained " << rows.size() << " epochs (xi=" << cfg.xi << ", lambda=" << cfg.lambda
            << ", beta=" << model.beta << ")";
  if (!rows.empty()) std::cout << "; final train accuracy " << fmt("%.4f", rows.back().acc);
  std::cout << "\n";
}

struct EvalArgs {
  fs::path checkpoint;
  std::vector<fs::path> data;
  fs::path out_dir;
  egt::eval::EvalConfig cfg;
  bool transductive = false;
  std::vector<std::size_t> candidates{4, 8};
  std::uint64_t seed = 0;
};

void run_eval(const EvalArgs& a, const CLI::App& sub) {
  require_dir(a.out_dir);
  const egt::FewShotModel model = egt::load_checkpoint(a.checkpoint);
  std::vector<egt::data::LabeledImageSet> sets;
  for (const fs::path& p : a.data) sets.push_back(egt::data::load_dataset(p));
  write_echo(sub, a.out_dir);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    // Every dataset sees the same episode seed stream.
    egt::Rng rng(a.seed);
    const egt::eval::EvalReport report =
        a.transductive
            ? egt::eval::evaluate_transductive(model, sets[i], a.cfg, a.candidates, rng)
            : egt::eval::evaluate(model, sets[i], a.cfg, rng);
    const fs::path out = a.out_dir / ("eval_" + a.data[i].stem().string() + ".csv");
    write_text(out, egt::eval::report_csv(report));
    std::cout << a.data[i].string() << ": " << egt::eval::report_summary(report) << "\n";
  }
}

struct ExplainArgs {
  fs::path checkpoint;
  fs::path data;
  fs::path out_dir;
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t queries = 16;
  std::size_t query = 0;
  std::string target = "all";
  double epsilon = 1e-3;
  double alpha = 1.0;
  double blend = 0.6;
  std::uint64_t seed = 0;
};

std::string relevance_text(const egt::Tensor& rel) {
  std::string out = "# shape " + egt::shape_to_string(rel.shape()) + "\n";
  for (double v : rel.values()) out += fmt("%.9g", v) + "\n";
  return out;
}

void run_explain(const ExplainArgs& a, const CLI::App& sub) {
  require_dir(a.out_dir);
  const egt::FewShotModel model = egt::load_checkpoint(a.checkpoint);
  const egt::data::LabeledImageSet set = egt::data::load_dataset(a.data);
  egt::Rng rng(a.seed);
  const egt::data::Episode ep = egt::data::sample_episode(set, a.way, a.shot, a.queries, rng);
  if (a.query >= ep.queries()) {
    throw egt::ContractError("--query " + std::to_string(a.query) + " out of range (episode has " +
                             std::to_string(ep.queries()) + " queries)");
  }
  egt::lrp::LrpConfig lrp;
  lrp.epsilon = a.epsilon;
  lrp.alpha = a.alpha;
  lrp.validate();

  std::vector<std::size_t> targets;
  if (a.target == "all") {
    for (std::size_t k = 0; k < ep.way; ++k) targets.push_back(k);
  } else if (a.target == "predicted") {
    targets.push_back(egt::eval::predict(model, ep)[a.query]);
  } else {
    std::size_t k = 0;
    try {
      std::size_t used = 0;
      k = std::stoul(a.target, &used);
      if (used != a.target.size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw egt::ConfigError("--target must be 'all', 'predicted' or a class index");
    }
    targets.push_back(k);
  }
  write_echo(sub, a.out_dir);
  const egt::Tensor& image = ep.query_images[a.query];
  for (std::size_t k : targets) {
    const egt::Tensor rel = egt::eval::explain_input(model, ep, a.query, k, lrp);
    const std::string stem = "q" + std::to_string(a.query) + "_t" + std::to_string(k);
    egt::eval::render_heatmap(rel, &image, a.out_dir / ("heatmap_" + stem + ".ppm"), a.blend);
    write_text(a.out_dir / ("relevance_" + stem + ".txt"), relevance_text(rel));
  }
  std::cout << "query " << a.query << " (class " << ep.query_labels[a.query] << "): "
            << targets.size() << " heatmaps in " << a.out_dir.string() << "\n";
}

struct StatsArgs {
  fs::path checkpoint;
  std::vector<fs::path> data;
  fs::path out_dir;
  std::size_t batch = 64;
};

void run_stats(const StatsArgs& a, const CLI::App& sub) {
  require_dir(a.out_dir);
  const egt::FewShotModel model = egt::load_checkpoint(a.checkpoint);
  std::vector<egt::data::LabeledImageSet> sets;
  for (const fs::path& p : a.data) sets.push_back(egt::data::load_dataset(p));
  write_echo(sub, a.out_dir);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto stats = egt::eval::dataset_feature_stats(model, sets[i], a.batch);
    std::string rows = "image,label,s2,qdiff\n";
    for (std::size_t j = 0; j < stats.size(); ++j) {
      rows += std::to_string(j) + "," + std::to_string(sets[i].labels[j]) + "," +
              fmt("%.17g", stats[j].s2) + "," + fmt("%.17g", stats[j].qdiff) + "\n";
    }
    const egt::eval::StatsAggregate agg = egt::eval::aggregate(stats);
    std::string summary =
        "count,mean_s2,std_s2,median_s2,mean_qdiff,std_qdiff,median_qdiff\n" +
        std::to_string(agg.count);
    for (double v : {agg.mean_s2, agg.std_s2, agg.median_s2, agg.mean_qdiff, agg.std_qdiff,
                     agg.median_qdiff}) {
      summary += "," + fmt("%.17g", v);
    }
    summary += "\n";
    const std::string stem = a.data[i].stem().string();
    write_text(a.out_dir / ("stats_" + stem + ".csv"), rows);
    write_text(a.out_dir / ("stats_" + stem + "_summary.csv"), summary);
    std::cout << a.data[i].string() << ": median S2 " << fmt("%.6g", agg.median_s2)
              << ", median qdiff " << fmt("%.6g", agg.median_qdiff) << " over " << agg.count
              << " images\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanation-guided few-shot training toolkit"};
  app.set_config("--config", "", "Re-run from a config echo written by an earlier command");
  app.require_subcommand(1);

  const auto positive = CLI::PositiveNumber;
  const auto nonnegative = CLI::NonNegativeNumber;

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate synthetic domains as EGTD files");
  gen_cmd->configurable();
  gen_cmd->add_option("--out-dir", gen.out_dir, "Existing output directory")->required();
  gen_cmd->add_option("--domains", gen.spec.domains, "Number of domains")->capture_default_str()->check(positive);
  gen_cmd->add_option("--classes", gen.spec.classes, "Classes per domain")->capture_default_str()->check(positive);
  gen_cmd->add_option("--images-per-class", gen.spec.images_per_class)->capture_default_str()->check(positive);
  gen_cmd->add_option("--image-size", gen.image_size, "Square image side")->capture_default_str()->check(CLI::Range(8, 4096));
  gen_cmd->add_option("--channels", gen.channels)->capture_default_str()->check(CLI::IsMember({1, 3}));
  gen_cmd->add_option("--max-primitives", gen.spec.max_primitives)->capture_default_str()->check(positive);
  gen_cmd->add_option("--palette-size", gen.spec.palette_size)->capture_default_str()->check(CLI::Range(1, 4));
  gen_cmd->add_option("--position-jitter", gen.spec.position_jitter)->capture_default_str()->check(nonnegative);
  gen_cmd->add_option("--scale-jitter", gen.spec.scale_jitter)->capture_default_str()->check(CLI::Range(0.0, 0.99));
  gen_cmd->add_option("--min-domain-gap", gen.spec.min_domain_gap)->capture_default_str()->check(nonnegative);
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Episodic training (baseline or explanation-guided)");
  train_cmd->configurable();
  train_cmd->add_option("--data", tr.data, "Training EGTD dataset")->required();
  train_cmd->add_option("--out-dir", tr.out_dir, "Existing output directory")->required();
  train_cmd->add_option("--mode", tr.mode)->capture_default_str()->check(CLI::IsMember({"baseline", "egt"}));
  train_cmd->add_option("--head", tr.head)->capture_default_str()->check(CLI::IsMember({"cosine", "relation"}));
  train_cmd->add_option("--channels", tr.model.channels, "Encoder width")->capture_default_str()->check(positive);
  train_cmd->add_option("--blocks", tr.model.blocks, "Encoder conv blocks")->capture_default_str()->check(positive);
  train_cmd->add_option("--relation-hidden", tr.model.relation_hidden)->capture_default_str()->check(positive);
  train_cmd->add_option("--beta", tr.model.beta, "Cosine head scale")->capture_default_str()->check(positive);
  train_cmd->add_option("--way", tr.way)->capture_default_str()->check(CLI::Range(2, 1000));
  train_cmd->add_option("--shot", tr.shot)->capture_default_str()->check(positive);
  train_cmd->add_option("--queries", tr.queries)->capture_default_str()->check(positive);
  train_cmd->add_option("--xi", tr.xi, "Weight of the plain loss (default per mode/head)")->check(nonnegative);
  train_cmd->add_option("--lambda", tr.lambda, "Weight of the guided loss (default per mode/head)")->check(nonnegative);
  train_cmd->add_option("--epsilon", tr.epsilon, "LRP epsilon")->capture_default_str()->check(positive);
  train_cmd->add_option("--alpha", tr.alpha, "LRP alpha")->capture_default_str()->check(CLI::Range(1.0, 1e9));
  train_cmd->add_option("--lr", tr.lr)->capture_default_str()->check(positive);
  train_cmd->add_option("--momentum", tr.momentum)->capture_default_str()->check(CLI::Range(0.0, 0.999999));
  train_cmd->add_option("--epochs", tr.epochs)->capture_default_str()->check(nonnegative);
  train_cmd->add_option("--episodes-per-epoch", tr.episodes_per_epoch)->capture_default_str()->check(positive);
  train_cmd->add_option("--lr-decay-every", tr.lr_decay_every, "Epochs; 0 disables")->capture_default_str();
  train_cmd->add_option("--lr-decay-factor", tr.lr_decay_factor)->capture_default_str()->check(CLI::Range(1e-9, 1.0));
  train_cmd->add_flag("--no-stop-gradient", tr.no_stop_gradient, "Differentiate through the relevance weights (cosine head)");
  train_cmd->add_option("--seed", tr.seed)->capture_default_str();

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Episodic evaluation with 95% intervals");
  eval_cmd->configurable();
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--data", ev.data, "One or more EGTD datasets")->required();
  eval_cmd->add_option("--out-dir", ev.out_dir, "Existing output directory")->required();
  eval_cmd->add_option("--way", ev.cfg.way)->capture_default_str()->check(CLI::Range(2, 1000));
  eval_cmd->add_option("--shot", ev.cfg.shot)->capture_default_str()->check(positive);
  eval_cmd->add_option("--queries", ev.cfg.queries)->capture_default_str()->check(positive);
  eval_cmd->add_option("--episodes", ev.cfg.episodes)->capture_default_str()->check(positive);
  eval_cmd->add_option("--workers", ev.cfg.workers)->capture_default_str()->check(positive);
  eval_cmd->add_flag("--transductive", ev.transductive, "Iteratively absorb confident queries");
  eval_cmd->add_option("--candidates", ev.candidates, "Queries absorbed per iteration")
      ->delimiter(',')->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed)->capture_default_str();

  ExplainArgs ex;
  CLI::App* explain_cmd = app.add_subcommand("explain", "Input-level relevance heatmaps");
  explain_cmd->configurable();
  explain_cmd->add_option("--checkpoint", ex.checkpoint)->required();
  explain_cmd->add_option("--data", ex.data)->required();
  explain_cmd->add_option("--out-dir", ex.out_dir, "Existing output directory")->required();
  explain_cmd->add_option("--way", ex.way)->capture_default_str()->check(CLI::Range(2, 1000));
  explain_cmd->add_option("--shot", ex.shot)->capture_default_str()->check(positive);
  explain_cmd->add_option("--queries", ex.queries)->capture_default_str()->check(positive);
  explain_cmd->add_option("--query", ex.query, "Query index within the episode")->capture_default_str();
  explain_cmd->add_option("--target", ex.target, "all, predicted, or a class index")->capture_default_str();
  explain_cmd->add_option("--epsilon", ex.epsilon)->capture_default_str()->check(positive);
  explain_cmd->add_option("--alpha", ex.alpha)->capture_default_str()->check(CLI::Range(1.0, 1e9));
  explain_cmd->add_option("--blend", ex.blend, "Heatmap opacity over the image")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  explain_cmd->add_option("--seed", ex.seed, "Episode seed")->capture_default_str();

  StatsArgs st;
  CLI::App* stats_cmd = app.add_subcommand("stats", "Encoder feature statistics per image");
  stats_cmd->configurable();
  stats_cmd->add_option("--checkpoint", st.checkpoint)->required();
  stats_cmd->add_option("--data", st.data, "One or more EGTD datasets")->required();
  stats_cmd->add_option("--out-dir", st.out_dir, "Existing output directory")->required();
  stats_cmd->add_option("--batch", st.batch)->capture_default_str()->check(positive);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) run_gen_data(gen, *gen_cmd);
    if (*train_cmd) run_train(tr, *train_cmd);
    if (*eval_cmd) run_eval(ev, *eval_cmd);
    if (*explain_cmd) run_explain(ex, *explain_cmd);
    if (*stats_cmd) run_stats(st, *stats_cmd);
  } catch (const egt::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const egt::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const egt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

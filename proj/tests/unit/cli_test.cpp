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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "egt/checkpoint.hpp"
#include "egt/data.hpp"
#include "egt/eval.hpp"

namespace {

namespace fs = std::filesystem;

const fs::path& root() {
  static const fs::path dir = [] {
    fs::path d = fs::path(::testing::TempDir()) / "egt_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Outcome {
  int code;
  std::string out;
};

Outcome run(const std::string& args) {
  const fs::path log = root() / "stdout.txt";
  const std::string cmd = std::string(EGT_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = root() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const std::string kGen = "--classes 10 --images-per-class 12 --image-size 16 --seed 7";
const std::string kSmallModel = "--channels 4 --blocks 2 --epochs 2 --episodes-per-epoch 2";

// Shared datasets and one trained checkpoint.
const fs::path& data_dir() {
  static const fs::path d = [] {
    const fs::path dir = fresh_dir("data");
    EXPECT_EQ(run("gen-data --out-dir " + dir.string() + " " + kGen).code, 0);
    return dir;
  }();
  return d;
}

const fs::path& trained() {
  static const fs::path ckpt = [] {
    const fs::path dir = fresh_dir("trained");
    EXPECT_EQ(run("train --data " + (data_dir() / "domain_A.egtd").string() + " --out-dir " +
                  dir.string() + " " + kSmallModel + " --seed 1")
                  .code,
              0);
    return dir / "model.egt";
  }();
  return ckpt;
}

std::string domain(const char* tag) {
  return (data_dir() / (std::string("domain_") + tag + ".egtd")).string();
}

TEST(CliGenData, WritesTwoDomainsDeterministically) {
  const fs::path a = fresh_dir("gen_a");
  const fs::path b = fresh_dir("gen_b");
  ASSERT_EQ(run("gen-data --domains 2 --out-dir " + a.string() + " " + kGen).code, 0);
  ASSERT_EQ(run("gen-data --domains 2 --out-dir " + b.string() + " " + kGen).code, 0);
  for (const char* f : {"domain_A.egtd", "domain_B.egtd"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  }
  EXPECT_EQ(egt::data::load_dataset(a / "domain_B.egtd").size(), 120u);
}

TEST(CliGenData, MissingOutputDirLeavesNoFiles) {
  const fs::path missing = root() / "no_such_dir";
  fs::remove_all(missing);
  const Outcome r = run("gen-data --out-dir " + missing.string() + " " + kGen);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("does not exist"), std::string::npos);
  EXPECT_FALSE(fs::exists(missing));
}

TEST(CliUsage, BadFlagsExitWithUsageCode) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("gen-data --out-dir x --classes zero").code, 1);
  EXPECT_EQ(run("train --data x --out-dir y --mode sideways").code, 1);
  EXPECT_EQ(run("train --data x --out-dir y --head tree").code, 1);
  EXPECT_EQ(run("gen-data --help").code, 0);
}

TEST(CliTrain, ModeDefaultsFollowHeadAndShot) {
  const fs::path out = fresh_dir("train_defaults");
  const std::string base = "train --data " + domain("A") + " --out-dir " + out.string() +
                           " --channels 4 --blocks 2 --epochs 0";
  const Outcome cos = run(base + " --mode egt --head cosine --way 5 --shot 5");
  EXPECT_EQ(cos.code, 0) << cos.out;
  EXPECT_NE(cos.out.find("xi=0, lambda=1, beta=7"), std::string::npos) << cos.out;
  const Outcome rel = run(base + " --mode egt --head relation --shot 1");
  EXPECT_NE(rel.out.find("xi=1, lambda=0.5"), std::string::npos) << rel.out;
  const Outcome plain = run(base + " --mode baseline");
  EXPECT_NE(plain.out.find("xi=1, lambda=0"), std::string::npos) << plain.out;
  EXPECT_EQ(read_file(out / "train_log.csv"), "epoch,step,loss_plain,loss_lrp,loss_total,acc\n");
}

TEST(CliTrain, BaselineEqualsGuidedWithZeroLambda) {
  const fs::path a = fresh_dir("train_base");
  const fs::path b = fresh_dir("train_lambda0");
  const std::string common = "--data " + domain("A") + " --head relation " + kSmallModel + " --seed 5";
  ASSERT_EQ(run("train --mode baseline --out-dir " + a.string() + " " + common).code, 0);
  ASSERT_EQ(run("train --mode egt --lambda 0 --out-dir " + b.string() + " " + common).code, 0);
  EXPECT_EQ(read_file(a / "model.egt"), read_file(b / "model.egt"));
  EXPECT_EQ(read_file(a / "train_log.csv"), read_file(b / "train_log.csv"));
}

TEST(CliTrain, ConfigEchoReproducesRunAndInputsStayUntouched) {
  const std::string before = read_file(domain("A"));
  const fs::path a = fresh_dir("train_echo");
  ASSERT_EQ(run("train --data " + domain("A") + " --out-dir " + a.string() + " " + kSmallModel +
                " --seed 9 --xi 0.25")
                .code,
            0);
  const std::string model = read_file(a / "model.egt");
  const std::string log = read_file(a / "train_log.csv");
  fs::remove(a / "model.egt");
  fs::remove(a / "train_log.csv");
  const Outcome again = run("--config " + (a / "train.config.toml").string());
  ASSERT_EQ(again.code, 0) << again.out;
  EXPECT_EQ(read_file(a / "model.egt"), model);
  EXPECT_EQ(read_file(a / "train_log.csv"), log);
  EXPECT_EQ(read_file(domain("A")), before);
}

TEST(CliTrain, MissingDatasetIsDataError) {
  const fs::path out = fresh_dir("train_missing");
  EXPECT_EQ(run("train --data " + (root() / "nope.egtd").string() + " --out-dir " + out.string()).code, 2);
  // Relation head with differentiable weights is rejected as a usage error.
  EXPECT_EQ(run("train --data " + domain("A") + " --out-dir " + out.string() +
                " --head relation --no-stop-gradient --epochs 0")
                .code,
            1);
}

TEST(CliEval, ReportsPerDatasetAndFlagsSingleEpisode) {
  const fs::path out = fresh_dir("eval");
  const Outcome r = run("eval --checkpoint " + trained().string() + " --data " + domain("A") + " " +
                    domain("B") + " --out-dir " + out.string() + " --episodes 6 --workers 2");
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string csv = read_file(out / "eval_domain_B.csv");
  EXPECT_EQ(csv.rfind("episodes,mean_acc,ci95\n6,", 0), 0u) << csv;
  EXPECT_TRUE(fs::exists(out / "eval_domain_A.csv"));

  // Worker count does not change results.
  const fs::path one = fresh_dir("eval_one");
  ASSERT_EQ(run("eval --checkpoint " + trained().string() + " --data " + domain("B") +
                " --out-dir " + one.string() + " --episodes 6 --workers 1")
                .code,
            0);
  EXPECT_EQ(read_file(one / "eval_domain_B.csv"), csv);

  const fs::path single = fresh_dir("eval_single");
  const Outcome s = run("eval --checkpoint " + trained().string() + " --data " + domain("B") +
                    " --out-dir " + single.string() + " --episodes 1");
  EXPECT_EQ(s.code, 0);
  EXPECT_NE(s.out.find("degenerate"), std::string::npos) << s.out;
  const std::string single_csv = read_file(single / "eval_domain_B.csv");
  EXPECT_EQ(single_csv.substr(single_csv.rfind(',')), ",0\n");
}

TEST(CliEval, TransductiveRunEchoesCandidates) {
  const fs::path out = fresh_dir("eval_trans");
  const Outcome r = run("eval --checkpoint " + trained().string() + " --data " + domain("B") +
                    " --out-dir " + out.string() + " --episodes 3 --transductive --candidates 4,8");
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string echo = read_file(out / "eval.config.toml");
  EXPECT_NE(echo.find("transductive=true"), std::string::npos) << echo;
  const std::string csv = read_file(out / "eval_domain_B.csv");
  fs::remove(out / "eval_domain_B.csv");
  ASSERT_EQ(run("--config " + (out / "eval.config.toml").string()).code, 0);
  EXPECT_EQ(read_file(out / "eval_domain_B.csv"), csv);
}

TEST(CliTrain, DivergentTrainingExitsWithNumericCode) {
  const fs::path out = fresh_dir("train_diverge");
  const std::string args = "train --data " + domain("A") + " --out-dir " + out.string() +
                           " --channels 4 --blocks 2 --epochs 2 --episodes-per-epoch 3 --lr ";
  EXPECT_EQ(run(args + "1e300").code, 3);
  EXPECT_EQ(run(args + "1e80").code, 3);
}

TEST(CliExplain, OneHeatmapPerClassAndDeterministic) {
  const fs::path a = fresh_dir("explain_a");
  const fs::path b = fresh_dir("explain_b");
  const std::string args = "explain --checkpoint " + trained().string() + " --data " + domain("B") +
                           " --query 3 --seed 4 --out-dir ";
  ASSERT_EQ(run(args + a.string()).code, 0);
  ASSERT_EQ(run(args + b.string()).code, 0);
  for (int k = 0; k < 5; ++k) {
    const std::string ppm = "heatmap_q3_t" + std::to_string(k) + ".ppm";
    const std::string rel = "relevance_q3_t" + std::to_string(k) + ".txt";
    ASSERT_TRUE(fs::exists(a / ppm)) << ppm;
    ASSERT_TRUE(fs::exists(a / rel)) << rel;
    EXPECT_EQ(read_file(a / ppm), read_file(b / ppm));
    EXPECT_EQ(read_file(a / ppm).rfind("P6\n16 16\n255\n", 0), 0u);
  }
  EXPECT_FALSE(fs::exists(a / "heatmap_q3_t5.ppm"));

  const fs::path p = fresh_dir("explain_pred");
  ASSERT_EQ(run(args + p.string() + " --target predicted").code, 0);
  std::size_t heatmaps = 0;
  for (const auto& entry : fs::directory_iterator(p)) {
    if (entry.path().extension() == ".ppm") ++heatmaps;
  }
  EXPECT_EQ(heatmaps, 1u);
  EXPECT_EQ(run(args + p.string() + " --target seven").code, 1);
  EXPECT_EQ(run(args + p.string() + " --query 99").code, 1);
}

TEST(CliStats, MatchesLibraryFeatureStats) {
  const fs::path out = fresh_dir("stats");
  ASSERT_EQ(run("stats --checkpoint " + trained().string() + " --data " + domain("B") +
                " --out-dir " + out.string())
                .code,
            0);
  const egt::FewShotModel model = egt::load_checkpoint(trained());
  const egt::data::LabeledImageSet set = egt::data::load_dataset(domain("B"));
  std::istringstream csv(read_file(out / "stats_domain_B.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "image,label,s2,qdiff");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    std::size_t image = 0;
    int label = 0;
    double s2 = 0, qdiff = 0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%zu,%d,%lf,%lf", &image, &label, &s2, &qdiff), 4);
    EXPECT_EQ(label, set.labels[image]);
    if (image % 17 == 0) {
      const egt::Tensor f = egt::forward(model.encoder, set.images[image]).output;
      const egt::eval::FeatureStats want = egt::eval::feature_stats(f);
      EXPECT_NEAR(s2, want.s2, 1e-12);
      EXPECT_NEAR(qdiff, want.qdiff, 1e-12);
    }
    ++rows;
  }
  EXPECT_EQ(rows, set.size());
  EXPECT_TRUE(fs::exists(out / "stats_domain_B_summary.csv"));
}

TEST(CliStats, EmptyDatasetIsDataError) {
  const fs::path empty = root() / "empty.egtd";
  std::ofstream(empty, std::ios::binary) << "EGTD\nclasses=0 counts= shape=3,16,16 domain=E\n";
  const fs::path out = fresh_dir("stats_empty");
  const Outcome r = run("stats --checkpoint " + trained().string() + " --data " + empty.string() +
                    " --out-dir " + out.string());
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_FALSE(fs::exists(out / "stats_empty.csv"));
}

}  // namespace

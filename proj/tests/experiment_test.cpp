#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ebomlc/experiment.hpp"

using namespace ebomlc;
namespace fs = std::filesystem;

namespace {
ExperimentConfig tiny(const std::string& name, const std::string& algorithm = "ebomlc") {
  ExperimentConfig c;
  c.algorithm = algorithm;
  c.n_train = 300;
  c.n_test = 60;
  c.n_classes = 3;
  c.input_dim = 4;
  c.feature_dim = 6;
  c.main_hidden = {8};
  c.meta_hidden = {8, 8};
  c.clean_fraction = 0.1;
  c.clean_batch = 8;
  c.noisy_batch = 30;
  c.epochs = 3;
  c.lr_milestones = {2};
  c.output_dir = (fs::temp_directory_path() / "ebomlc_experiment_test" / name).string();
  fs::remove_all(c.output_dir);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}
}  // namespace

TEST(Experiment, WritesArtifactsAndManifest) {
  const ExperimentConfig c = tiny("artifacts");
  std::size_t callbacks = 0;
  const RunResult r = run_experiment(c, [&](const EpochMetrics&) { ++callbacks; });
  EXPECT_EQ(callbacks, 3u);
  ASSERT_EQ(r.history.size(), 3u);
  for (const auto& f : r.manifest["files"]) EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / f.get<std::string>())) << f;
  EXPECT_EQ(r.manifest["steps_per_epoch"], (300u - 30u) / 30u);
  EXPECT_EQ(r.manifest["total_steps"], 27u);
  EXPECT_EQ(r.manifest["effective_k"], 1u);
  EXPECT_EQ(r.manifest["upper_objective"], "Fbar");
  EXPECT_EQ(r.manifest["version"], kVersion);
  EXPECT_EQ(r.final_metrics().wall_secs, 0.0);

  std::istringstream csv(slurp(fs::path(c.output_dir) / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, kMetricsHeader);
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 3u);
  // 40% of the noisy side is relabelled.
  EXPECT_NEAR(r.observed_diagonal_mass, 0.6, 0.01);
}

TEST(Experiment, RunsAreByteIdentical) {
  const ExperimentConfig a = tiny("det_a"), b = tiny("det_b");
  run_experiment(a);
  run_experiment(b);
  for (const char* f : {"metrics.csv", "heatmap.csv", "w.bmps", "alpha.bmps"}) {
    EXPECT_EQ(slurp(fs::path(a.output_dir) / f), slurp(fs::path(b.output_dir) / f)) << f;
  }
}

TEST(Experiment, SeedChangesTheRun) {
  ExperimentConfig a = tiny("seed_a"), b = tiny("seed_b");
  b.seed = 1;
  EXPECT_NE(run_experiment(a).final_metrics().f_clean, run_experiment(b).final_metrics().f_clean);
}

TEST(Experiment, AllAlgorithmsRun) {
  for (const char* alg : {"mlcd", "plain-noisy", "plain-clean"}) {
    const RunResult r = run_experiment(tiny(std::string("alg_") + alg, alg));
    EXPECT_EQ(r.history.size(), 3u) << alg;
    if (std::string(alg) != "mlcd") EXPECT_EQ(r.final_metrics().beta_mean, 0.0) << alg;
  }
  EXPECT_EQ(run_experiment(tiny("alg_k", "mlcd")).manifest["effective_k"], 5u);
}

TEST(Experiment, PlainCleanOnSeparableBlobs) {
  ExperimentConfig c = tiny("separable", "plain-clean");
  c.n_train = 1000;
  c.n_test = 200;
  c.n_classes = 4;
  c.input_dim = 16;
  c.blob_spread = 0.1;
  c.main_hidden = {32};
  c.epochs = 10;
  c.lr_milestones = {8};
  EXPECT_GE(run_experiment(c).final_metrics().acc_test, 0.95);
}

TEST(Experiment, InvalidConfigThrows) {
  ExperimentConfig c = tiny("invalid");
  c.rho = 0.0;
  EXPECT_THROW(run_experiment(c), ConfigError);
}

TEST(Experiment, AbortWritesLastStep) {
  for (const char* alg : {"ebomlc", "plain-noisy"}) {
    ExperimentConfig c = tiny(std::string("abort_") + alg, alg);
    c.main_lr = 1e300;
    c.momentum = 0.0;
    EXPECT_THROW(run_experiment(c), StepAbort) << alg;
    const fs::path last = fs::path(c.output_dir) / "last_step.json";
    ASSERT_TRUE(fs::exists(last)) << alg;
    EXPECT_GE(Json::parse(slurp(last))["t"].get<std::size_t>(), 1u);
  }
}

TEST(Experiment, PrepareDataSplitsAndStandardizes) {
  const ExperimentConfig c = tiny("prepare");
  const PreparedData d = prepare_data(c);
  EXPECT_EQ(d.train.base.labels.size(), 300u);
  EXPECT_EQ(d.test.labels.size(), 60u);
  EXPECT_EQ(d.train.indices(Split::kClean).size(), 30u);
  EXPECT_EQ(d.train.indices(Split::kNoisy).size(), 270u);
  // Standardized on noisy-side statistics.
  const auto noisy = d.train.indices(Split::kNoisy);
  for (std::size_t j = 0; j < 4; ++j) {
    double mean = 0.0;
    for (std::size_t i : noisy) mean += d.train.base.features.at(i, j);
    EXPECT_NEAR(mean / 270.0, 0.0, 1e-12);
  }
}

TEST(Experiment, Accuracy) {
  EXPECT_DOUBLE_EQ(accuracy({0, 1, 2, 2}, {0, 1, 1, 2}), 0.75);
  EXPECT_EQ(accuracy({}, {}), 0.0);
}

TEST(Sweep, WritesSubdirectoriesAndSummary) {
  ExperimentConfig c = tiny("sweep");
  c.epochs = 1;
  const auto runs = ablation_sweep(c, "xi", {0.5, 1.0});
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "xi_0.5" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "xi_1" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "sweep.svg"));
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "sweep_loss.svg"));
}

TEST(Sweep, Errors) {
  const ExperimentConfig c = tiny("sweep_err");
  EXPECT_THROW(ablation_sweep(c, "delta", {0.1}), ConfigError);
  EXPECT_THROW(ablation_sweep(c, "k", {}), ConfigError);
  EXPECT_THROW(ablation_sweep(c, "k", {1.5}), ConfigError);
}

TEST(Metrics, RowFormatting) {
  EpochMetrics m;
  m.epoch = 4;
  m.f_clean = 0.1;
  m.acc_test = 1.0 / 3.0;
  EXPECT_EQ(metrics_csv_row(m), "4,0.1,0,0,0,0,0,0,0.333333333,0,0");
}

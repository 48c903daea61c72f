#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebomlc/algorithms.hpp"
#include "ebomlc/config.hpp"
#include "ebomlc/data.hpp"
#include "ebomlc/models.hpp"
#include "ebomlc/objectives.hpp"
#include "ebomlc/optim.hpp"
#include "ebomlc/report.hpp"
#include "ebomlc/rng.hpp"

namespace ebomlc {

inline constexpr const char* kVersion = "1.0.0";

inline const char* kMetricsHeader =
    "epoch,F_clean,Fbar,G_noisy,Q_mean,beta_mean,align_mean,acc_train_noisy,acc_test,acc_meta_correction,wall_secs";

struct EpochMetrics {
  std::size_t epoch = 0;
  double f_clean = 0.0;
  double fbar = 0.0;
  double g_noisy = 0.0;
  double q_mean = 0.0;
  double beta_mean = 0.0;
  double align_mean = 0.0;
  double acc_train_noisy = 0.0;
  double acc_test = 0.0;
  double acc_meta_correction = 0.0;
  double wall_secs = 0.0;
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string metrics_csv_row(const EpochMetrics& m) {
  std::string s = std::to_string(m.epoch);
  for (double v : {m.f_clean, m.fbar, m.g_noisy, m.q_mean, m.beta_mean, m.align_mean, m.acc_train_noisy, m.acc_test,
                   m.acc_meta_correction, m.wall_secs}) {
    s += ',';
    s += format_number(v);
  }
  return s;
}

inline Json to_json(const EpochMetrics& m) {
  return Json{{"epoch", m.epoch},           {"F_clean", m.f_clean},
              {"Fbar", m.fbar},             {"G_noisy", m.g_noisy},
              {"Q_mean", m.q_mean},         {"beta_mean", m.beta_mean},
              {"align_mean", m.align_mean}, {"acc_train_noisy", m.acc_train_noisy},
              {"acc_test", m.acc_test},     {"acc_meta_correction", m.acc_meta_correction}};
}

inline Json to_json(const BarrierStep& s) {
  return Json{{"t", s.t},
              {"q_value", s.q_value},
              {"q_sq_norm", s.q_sq_norm},
              {"phi", s.phi},
              {"alignment", s.alignment},
              {"beta", s.beta},
              {"grad_w_f_norm", s.grad_w_f_norm},
              {"grad_alpha_f_norm", s.grad_alpha_f_norm},
              {"dir_w_norm", s.dir_w_norm},
              {"dir_alpha_norm", s.dir_alpha_norm},
              {"f_value", s.f_value},
              {"g_value", s.g_value},
              {"grad_w_g_start_norm", s.grad_w_g_start_norm},
              {"grad_w_g_end_norm", s.grad_w_g_end_norm},
              {"clipped", s.clipped},
              {"degenerate", s.degenerate}};
}

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

struct PreparedData {
  CorruptedDataset train;
  LabeledDataset test;
};

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  LabeledDataset train, test;
  if (cfg.data_source == "blobs") {
    const BlobGenerator gen(cfg.n_classes, cfg.input_dim, cfg.blob_spread, cfg.seed);
    train = gen.sample(cfg.n_train, derive_seed(cfg.seed, {kStreamSamples}));
    test = gen.sample(cfg.n_test, derive_seed(cfg.seed, {kStreamTest}));
  } else {
    std::vector<LabeledDataset> parts;
    std::size_t total = 0;
    for (const auto& f : cfg.cifar_train_files) {
      parts.push_back(load_cifar10_binary(f));
      total += parts.back().size();
    }
    LabeledDataset all{Tensor(Shape{total, kCifarPixels}), Labels(total), 10};
    std::size_t row = 0;
    for (const auto& p : parts) {
      std::copy(p.features.data().begin(), p.features.data().end(), all.features.data().begin() + row * kCifarPixels);
      std::copy(p.labels.begin(), p.labels.end(), all.labels.begin() + row);
      row += p.size();
    }
    auto take = [](const LabeledDataset& src, std::size_t from, std::size_t n) {
      std::vector<std::size_t> rows(n);
      for (std::size_t i = 0; i < n; ++i) rows[i] = from + i;
      return LabeledDataset{gather_feature_rows(src.features, rows),
                            Labels(src.labels.begin() + from, src.labels.begin() + from + n), src.classes};
    };
    if (!cfg.cifar_test_file.empty()) {
      const LabeledDataset t = load_cifar10_binary(cfg.cifar_test_file);
      test = take(t, 0, std::min(cfg.n_test, t.size()));
      train = take(all, 0, std::min(cfg.n_train, all.size()));
    } else {
      if (all.size() <= cfg.n_test) throw ConfigError("n_test: leaves no training records");
      const std::size_t n_train = std::min(cfg.n_train, all.size() - cfg.n_test);
      train = take(all, 0, n_train);
      test = take(all, all.size() - cfg.n_test, cfg.n_test);
    }
  }
  CorruptedDataset cd = split_clean_noisy(train, cfg.clean_fraction, derive_seed(cfg.seed, {kStreamSplit}));
  apply_noise(cd, cfg.noise_kind == "flip" ? NoiseKind::kFlip : NoiseKind::kUniform, cfg.noise_rate,
              derive_seed(cfg.seed, {kStreamNoise}), Labels(cfg.flip_mapping.begin(), cfg.flip_mapping.end()));
  const Standardizer st = Standardizer::fit(cd.base.features, cd.indices(Split::kNoisy));
  st.apply(cd.base.features);
  st.apply(test.features);
  return {std::move(cd), std::move(test)};
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline double accuracy(const std::vector<std::size_t>& pred, const Labels& truth) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i] ? 1 : 0;
  return pred.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(pred.size());
}

struct Heatmap {
  std::vector<std::vector<std::size_t>> counts;  // [clean label][meta argmax]
  double diagonal_mass = 0.0;
};

/// Counts of (clean label, meta argmax) over the given rows. Argmax ties
/// resolve to the lowest class index.
inline Heatmap compute_heatmap(const NeuralModels& m, const ParamSet& alpha, const CorruptedDataset& ds,
                               const std::vector<std::size_t>& rows) {
  const std::size_t C = m.meta.classes();
  Heatmap h{std::vector<std::vector<std::size_t>>(C, std::vector<std::size_t>(C, 0)), 0.0};
  if (rows.empty()) return h;
  const Batch b = make_batch(ds, rows, Split::kNoisy);
  const auto pred = argmax_rows(m.meta.predict(alpha, m.extractor.apply(b.features), b.labels));
  std::size_t diag = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t y = ds.base.labels[rows[i]];
    ++h.counts[y][pred[i]];
    diag += y == pred[i] ? 1 : 0;
  }
  h.diagonal_mass = static_cast<double>(diag) / static_cast<double>(rows.size());
  return h;
}

inline void write_heatmap_csv(const Heatmap& h, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path + "'");
  os << "clean_label";
  for (std::size_t j = 0; j < h.counts.size(); ++j) os << ",pred_" << j;
  os << '\n';
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    os << i;
    for (std::size_t c : h.counts[i]) os << ',' << c;
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct RunResult {
  Json manifest;
  std::vector<EpochMetrics> history;
  Heatmap heatmap;
  double observed_diagonal_mass = 0.0;
  double wall_secs = 0.0;

  const EpochMetrics& final_metrics() const { return history.back(); }
};

namespace detail {
inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + p.string() + "'");
  os << s;
}
}  // namespace detail

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Full training run. Writes metrics.csv, timing.csv, heatmap.csv,
/// manifest.json, w.bmps and alpha.bmps into cfg.output_dir. A numeric abort
/// writes last_step.json and rethrows.
inline RunResult run_experiment(const ExperimentConfig& cfg, const EpochCallback& on_epoch = {}) {
  if (auto errs = range_errors(cfg); !errs.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  namespace fs = std::filesystem;
  const auto t_start = std::chrono::steady_clock::now();
  const std::string started = detail::utc_now();
  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);

  PreparedData data = prepare_data(cfg);
  const CorruptedDataset& train = data.train;
  const std::size_t d = train.base.dim();
  const std::size_t C = train.base.classes;
  const auto clean_rows = train.indices(Split::kClean);
  const auto noisy_rows = train.indices(Split::kNoisy);

  std::vector<std::size_t> main_sizes{d};
  main_sizes.insert(main_sizes.end(), cfg.main_hidden.begin(), cfg.main_hidden.end());
  main_sizes.push_back(C);
  NeuralModels models{MainModel(main_sizes), MetaModel(C, cfg.feature_dim, cfg.meta_hidden),
                      FeatureExtractor(d, cfg.feature_dim, derive_seed(cfg.seed, {kStreamExtractor}))};
  ParamSet w = models.main.init(derive_seed(cfg.seed, {kStreamMainInit}));
  ParamSet alpha = models.meta.init(derive_seed(cfg.seed, {kStreamMetaInit}));

  const MixtureSpace space = cfg.mixture_space == "logit" ? MixtureSpace::kLogit : MixtureSpace::kProbability;
  const NeuralObjectives provider(models, cfg.algorithm == "mlcd" ? 1.0 : cfg.rho, space);
  SgdMomentum opt_w(cfg.momentum, cfg.weight_decay);
  std::unique_ptr<Optimizer> opt_alpha = make_optimizer(cfg.meta_optimizer);
  const LRSchedule schedule = LRSchedule::step_decay(cfg.main_lr, cfg.meta_lr, cfg.lr_decay, cfg.lr_milestones);
  const BarrierConfig bc{cfg.xi, cfg.delta, cfg.eps_q, cfg.effective_k(), cfg.w_only_denominator};
  bc.validate();

  const BatchIterator noisy_iter(noisy_rows, cfg.noisy_batch, derive_seed(cfg.seed, {kStreamNoisyBatches}));
  BatchStream extra_noisy(BatchIterator(noisy_rows, cfg.noisy_batch, derive_seed(cfg.seed, {kStreamNoisyBatches, 1})));
  BatchStream clean_stream(BatchIterator(clean_rows, cfg.clean_batch, derive_seed(cfg.seed, {kStreamCleanBatches})));

  const Batch clean_all = make_batch(train, clean_rows, Split::kClean);
  Batch noisy_all = make_batch(train, noisy_rows, Split::kNoisy);
  const Tensor noisy_features_h = models.extractor.apply(noisy_all.features);
  Labels noisy_clean_labels(noisy_rows.size());
  for (std::size_t i = 0; i < noisy_rows.size(); ++i) noisy_clean_labels[i] = train.base.labels[noisy_rows[i]];

  RunResult result;
  std::ofstream metrics(out_dir / "metrics.csv", std::ios::binary);
  std::ofstream timing(out_dir / "timing.csv", std::ios::binary);
  if (!metrics || !timing) throw FormatError("cannot write into '" + out_dir.string() + "'");
  metrics << kMetricsHeader << '\n';
  timing << "epoch,wall_secs\n";

  std::size_t t = 0;
  const std::size_t steps_per_epoch = noisy_iter.batches_per_epoch();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const EtaPair eta = schedule_eta(schedule, epoch);
    const StepRates rates{eta.w, eta.alpha};
    double g_sum = 0.0, q_sum = 0.0, beta_sum = 0.0, align_sum = 0.0;
    for (const auto& rows : noisy_iter.epoch(epoch)) try {
      ++t;
      std::vector<Batch> noisy{make_batch(train, rows, Split::kNoisy)};
      const Batch clean = make_batch(train, clean_stream.next(), Split::kClean);
      if (cfg.algorithm == "plain-noisy" || cfg.algorithm == "plain-clean") {
        Batch& b = noisy.front();
        if (cfg.algorithm == "plain-clean") {
          for (std::size_t i = 0; i < b.size(); ++i) b.labels[i] = train.base.labels[b.indices[i]];
        }
        const ObjectiveEval e =
            detail::guarded(t, "plain training", [&] { return upper_loss_F(models, w, alpha, b); });
        if (!std::isfinite(e.value) || !e.grad_w.all_finite()) {
          BarrierStep s;
          s.t = t;
          s.f_value = e.value;
          throw StepAbort("plain training: non-finite loss at step " + std::to_string(t), s);
        }
        opt_w.step(w, e.grad_w, rates.eta_w);
        g_sum += e.value;
        continue;
      }
      for (std::size_t i = 1; i < bc.k; ++i) noisy.push_back(make_batch(train, extra_noisy.next(), Split::kNoisy));
      const BarrierStep s =
          cfg.algorithm == "ebomlc"
              ? ebomlc_step(provider, w, alpha, opt_w, *opt_alpha, clean, noisy, bc, rates, t)
              : mlcd_outer_step(provider, w, alpha, opt_w, *opt_alpha, clean, noisy, bc, rates, t);
      g_sum += s.g_value;
      q_sum += s.q_value;
      beta_sum += s.beta;
      align_sum += s.alignment;
    } catch (const StepAbort& abort) {
      detail::write_text(out_dir / "last_step.json", to_json(abort.step()).dump(2) + "\n");
      throw;
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    const double n = static_cast<double>(steps_per_epoch);
    m.g_noisy = g_sum / n;
    m.q_mean = q_sum / n;
    m.beta_mean = beta_sum / n;
    m.align_mean = align_sum / n;
    m.f_clean = upper_loss_F(models, w, alpha, clean_all).value;
    m.fbar = mixture_upper_loss(models, w, alpha, clean_all, cfg.rho, space).value;
    m.acc_train_noisy = accuracy(argmax_rows(models.main.logits(w, noisy_all.features)), noisy_all.labels);
    m.acc_test = accuracy(argmax_rows(models.main.logits(w, data.test.features)), data.test.labels);
    m.acc_meta_correction =
        accuracy(argmax_rows(models.meta.predict(alpha, noisy_features_h, noisy_all.labels)), noisy_clean_labels);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    m.wall_secs = cfg.record_wall_time ? elapsed : 0.0;
    metrics << metrics_csv_row(m) << '\n';
    timing << m.epoch << ',' << format_number(elapsed) << '\n';
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  metrics.close();
  timing.close();

  result.heatmap = compute_heatmap(models, alpha, train, noisy_rows);
  write_heatmap_csv(result.heatmap, (out_dir / "heatmap.csv").string());
  std::size_t agree = 0;
  for (std::size_t i = 0; i < noisy_rows.size(); ++i) agree += noisy_all.labels[i] == noisy_clean_labels[i] ? 1 : 0;
  result.observed_diagonal_mass = static_cast<double>(agree) / static_cast<double>(noisy_rows.size());
  save_bmps((out_dir / "w.bmps").string(), w);
  save_bmps((out_dir / "alpha.bmps").string(), alpha);
  result.wall_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  Json seeds;
  seeds["seed"] = cfg.seed;
  seeds["main_init"] = derive_seed(cfg.seed, {kStreamMainInit});
  seeds["meta_init"] = derive_seed(cfg.seed, {kStreamMetaInit});
  seeds["extractor"] = derive_seed(cfg.seed, {kStreamExtractor});
  seeds["split"] = derive_seed(cfg.seed, {kStreamSplit});
  seeds["noise"] = derive_seed(cfg.seed, {kStreamNoise});
  Json& man = result.manifest;
  man["version"] = kVersion;
  man["config"] = to_json(cfg);
  man["seeds"] = seeds;
  man["environment"] = {{"compiler", __VERSION__}, {"cxx_standard", static_cast<long>(__cplusplus)}};
  man["started_utc"] = started;
  man["finished_utc"] = detail::utc_now();
  man["wall_secs"] = result.wall_secs;
  man["steps_per_epoch"] = steps_per_epoch;
  man["total_steps"] = t;
  man["effective_k"] = bc.k;
  man["upper_objective"] = cfg.algorithm == "mlcd" ? "F" : (cfg.is_barrier() ? "Fbar" : "cross-entropy");
  man["final_metrics"] = to_json(result.final_metrics());
  man["meta_diagonal_mass"] = result.heatmap.diagonal_mass;
  man["observed_label_diagonal_mass"] = result.observed_diagonal_mass;
  man["files"] = {"metrics.csv", "timing.csv", "heatmap.csv", "manifest.json", "w.bmps", "alpha.bmps"};
  detail::write_text(out_dir / "manifest.json", man.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------------------
// Ablation sweep
// ---------------------------------------------------------------------------

struct SweepEntry {
  std::string value;
  RunResult result;
};

/// One run per value of `parameter` (k, rho or xi), all sharing the base
/// seed. Writes <output_dir>/<parameter>_<value>/..., sweep.csv and sweep.svg.
inline std::vector<SweepEntry> ablation_sweep(const ExperimentConfig& base, const std::string& parameter,
                                              const std::vector<double>& values, const EpochCallback& on_epoch = {}) {
  if (parameter != "k" && parameter != "rho" && parameter != "xi") {
    throw ConfigError("sweep: parameter must be one of k rho xi");
  }
  if (values.empty()) throw ConfigError("sweep: no values");
  namespace fs = std::filesystem;
  std::vector<SweepEntry> out;
  for (double v : values) {
    ExperimentConfig cfg = base;
    std::string label;
    if (parameter == "k") {
      if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("k: sweep values must be positive integers");
      cfg.k = static_cast<std::size_t>(v);
      label = std::to_string(cfg.k);
    } else {
      (parameter == "rho" ? cfg.rho : cfg.xi) = v;
      label = format_number(v);
    }
    cfg.output_dir = (fs::path(base.output_dir) / (parameter + "_" + label)).string();
    out.push_back({label, run_experiment(cfg, on_epoch)});
  }

  fs::create_directories(base.output_dir);
  std::ofstream csv(fs::path(base.output_dir) / "sweep.csv", std::ios::binary);
  csv << "parameter,value," << std::string(kMetricsHeader) << '\n';
  std::vector<ChartSeries> acc, loss;
  for (const auto& e : out) {
    ChartSeries a{parameter + "=" + e.value, {}, {}}, l{parameter + "=" + e.value, {}, {}};
    for (const auto& m : e.result.history) {
      csv << parameter << ',' << e.value << ',' << metrics_csv_row(m) << '\n';
      a.x.push_back(static_cast<double>(m.epoch));
      a.y.push_back(m.acc_test);
      l.x.push_back(static_cast<double>(m.epoch));
      l.y.push_back(m.f_clean);
    }
    acc.push_back(std::move(a));
    loss.push_back(std::move(l));
  }
  detail::write_text(fs::path(base.output_dir) / "sweep.svg",
                     render_line_chart("test accuracy by " + parameter, "epoch", "acc_test", acc));
  detail::write_text(fs::path(base.output_dir) / "sweep_loss.svg",
                     render_line_chart("clean-set loss F by " + parameter, "epoch", "F_clean", loss));
  return out;
}

}  // namespace ebomlc

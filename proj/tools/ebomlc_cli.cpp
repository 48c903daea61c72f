#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ebomlc/ebomlc.hpp"
#include "ebomlc/probes.hpp"

namespace fs = std::filesystem;
using namespace ebomlc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct GlobalOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::map<std::string, std::string> overrides;  // config key -> raw flag text
};

// "0.4" -> number, "[64,64]" -> array, "mlcd" -> string. Array-valued keys also
// accept comma lists.
Json parse_override(const std::string& text, const Json& default_value) {
  Json v = Json::parse(text, nullptr, false);
  if (v.is_discarded()) v = text;
  if (default_value.is_array() && !v.is_array()) {
    Json arr = Json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      Json e = Json::parse(item, nullptr, false);
      arr.push_back(e.is_discarded() ? Json(item) : e);
    }
    v = arr;
  }
  return v;
}

ExperimentConfig build_config(const GlobalOptions& g) {
  Json raw = Json::object();
  if (!g.config_path.empty()) {
    std::ifstream is(g.config_path);
    if (!is) throw ConfigError("cannot open config file '" + g.config_path + "'");
    raw = Json::parse(is, nullptr, false);
    if (raw.is_discarded()) throw ConfigError("config file '" + g.config_path + "' is not valid JSON");
  }
  const Json defaults = to_json(ExperimentConfig{});
  for (const auto& [key, text] : g.overrides) raw[key] = parse_override(text, defaults.at(key));
  if (g.seed_set) raw["seed"] = g.seed;
  if (!g.out.empty()) raw["output_dir"] = g.out;
  return parse_config(raw);
}

void write_json(const fs::path& p, const Json& j) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw FormatError("cannot write '" + p.string() + "'");
  os << j.dump(2) << '\n';
}

void progress(const EpochMetrics& m) {
  std::fprintf(stderr, "epoch %3zu  F_clean %.4f  G %.4f  beta %.4f  acc_noisy %.4f  acc_test %.4f  meta %.4f\n",
               m.epoch, m.f_clean, m.g_noisy, m.beta_mean, m.acc_train_noisy, m.acc_test, m.acc_meta_correction);
}

int cmd_gen_data(const GlobalOptions& g) {
  const ExperimentConfig cfg = build_config(g);
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  const PreparedData data = prepare_data(cfg);
  export_side(data.train, Split::kClean, (out / "clean").string());
  export_side(data.train, Split::kNoisy, (out / "noisy").string());
  {
    std::ofstream csv(out / "test.csv", std::ios::binary);
    csv << "index,label\n";
    for (std::size_t i = 0; i < data.test.size(); ++i) csv << i << ',' << data.test.labels[i] << '\n';
    ParamSet feats;
    feats.add("features", data.test.features);
    save_bmps((out / "test_features.bmps").string(), feats);
  }
  std::size_t corrupted = 0;
  for (bool m : data.train.mask) corrupted += m ? 1 : 0;
  write_json(out / "data_manifest.json",
             Json{{"config", to_json(cfg)},
                  {"clean_size", data.train.indices(Split::kClean).size()},
                  {"noisy_size", data.train.indices(Split::kNoisy).size()},
                  {"corrupted", corrupted},
                  {"test_size", data.test.size()},
                  {"files", {"clean.csv", "clean_features.bmps", "noisy.csv", "noisy_features.bmps", "test.csv",
                             "test_features.bmps"}}});
  std::printf("wrote %s (clean %zu, noisy %zu, corrupted %zu, test %zu)\n", out.string().c_str(),
              data.train.indices(Split::kClean).size(), data.train.indices(Split::kNoisy).size(), corrupted,
              data.test.size());
  return kExitOk;
}

int cmd_train(const GlobalOptions& g, bool quiet) {
  const ExperimentConfig cfg = build_config(g);
  const RunResult r = run_experiment(cfg, quiet ? EpochCallback{} : EpochCallback(progress));
  emit_report(cfg.output_dir);
  const EpochMetrics& m = r.final_metrics();
  std::printf("%s: acc_test %.4f  acc_train_noisy %.4f  meta diagonal %.4f (observed labels %.4f)  %.1f s\n",
              cfg.algorithm.c_str(), m.acc_test, m.acc_train_noisy, r.heatmap.diagonal_mass, r.observed_diagonal_mass,
              r.wall_secs);
  return kExitOk;
}

struct ToyOptions {
  std::size_t runs = 1;
  std::size_t steps = 10000;
  std::string schedule = "assumption3";
  double c = 0.1;
  double C = 0.05;
  std::size_t d_w = 10;
  std::size_t d_alpha = 5;
  double gamma = 0.5;
  double xi = 0.5;
  double delta = 0.25;
};

int cmd_toy(const GlobalOptions& g, const ToyOptions& o) {
  const fs::path out(g.out.empty() ? "runs/toy" : g.out);
  fs::create_directories(out);
  const LRSchedule schedule = o.schedule == "theorem1" ? LRSchedule::theorem1(o.c, o.C, o.steps)
                              : o.schedule == "assumption3"
                                  ? LRSchedule::assumption3(o.C, o.steps)
                                  : throw ConfigError("schedule: must be theorem1 or assumption3");
  Json runs = Json::array();
  bool all_pass = true;
  for (std::size_t r = 0; r < o.runs; ++r) {
    const std::uint64_t seed = derive_seed(g.seed, {kStreamToy, r});
    const QuadraticBilevel q = make_quadratic(seed, o.d_w, o.d_alpha, o.gamma);
    const ConvergenceTrace trace = run_ebomlc_toy(q, o.steps, schedule, {o.xi, o.delta, kDefaultEpsQ});
    const Lemma2Check lemma = check_lemma2(trace, o.delta, analytic_gradient_bound(q, trace.box));
    all_pass = all_pass && lemma.pass;
    const std::string name = "trace_" + std::to_string(r) + ".csv";
    write_trace_csv(trace, (out / name).string());
    const double final_grad = std::sqrt(trace.rows.back().grad_w_f_sq);
    runs.push_back({{"seed", seed},
                    {"trace", name},
                    {"final_grad_w_F", final_grad},
                    {"min_grad_w_F_sq", trace.min_grad_w_f_sq()},
                    {"lemma2_pass", lemma.pass},
                    {"lemma2_worst_margin", lemma.worst_margin},
                    {"lemma2_violations", lemma.violations}});
    std::printf("run %zu: final |grad_w F| %.3e  min |grad_w F|^2 %.3e  lemma2 %s (worst margin %.3g at t=%zu)\n", r,
                final_grad, trace.min_grad_w_f_sq(), lemma.pass ? "ok" : "VIOLATED", lemma.worst_margin,
                lemma.worst_t);
  }
  write_json(out / "toy_summary.json", Json{{"schedule", o.schedule},
                                            {"steps", o.steps},
                                            {"d_w", o.d_w},
                                            {"d_alpha", o.d_alpha},
                                            {"gamma", o.gamma},
                                            {"xi", o.xi},
                                            {"delta", o.delta},
                                            {"runs", runs}});
  return all_pass ? kExitOk : kExitCheckFailed;
}

int cmd_gradcheck(const GlobalOptions& g, std::size_t probes, double eps, double tol) {
  bool pass = true;
  for (const auto& a : audit_objective_gradients(g.seed, probes, eps)) {
    const bool ok = a.max_relative_error < tol;
    pass = pass && ok;
    std::printf("%-5s probes %zu  coordinates %zu  skipped %zu  max rel error %.3e  %s\n", a.objective.c_str(),
                a.probes, a.coordinates, a.skipped, a.max_relative_error, ok ? "ok" : "FAIL");
  }
  return pass ? kExitOk : kExitCheckFailed;
}

int cmd_sweep(const GlobalOptions& g, const std::string& parameter, const std::vector<double>& values, bool quiet) {
  const ExperimentConfig cfg = build_config(g);
  const auto entries = ablation_sweep(cfg, parameter, values, quiet ? EpochCallback{} : EpochCallback(progress));
  for (const auto& e : entries) {
    emit_report((fs::path(cfg.output_dir) / (parameter + "_" + e.value)).string());
    std::printf("%s=%s: acc_test %.4f  max F_clean %.4f  %.1f s\n", parameter.c_str(), e.value.c_str(),
                e.result.final_metrics().acc_test,
                std::max_element(e.result.history.begin(), e.result.history.end(),
                                 [](const auto& a, const auto& b) { return a.f_clean < b.f_clean; })
                    ->f_clean,
                e.result.wall_secs);
  }
  return kExitOk;
}

int cmd_report(const std::string& dir) {
  for (const auto& f : emit_report(dir)) std::printf("%s\n", (fs::path(dir) / f).string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"First-order bilevel meta label correction: training, toy checks and reports"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON configuration file");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { g.seed = s, g.seed_set = true; }, "Master seed");
  app.add_option("--out", g.out, "Output directory");
  for (const auto& key : config_keys()) {
    if (key == "seed" || key == "output_dir") continue;
    app.add_option_function<std::string>(
        "--" + kebab_case(key), [&g, key](const std::string& v) { g.overrides[key] = v; },
        "Override '" + key + "'");
  }
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "No per-epoch progress");

  auto* gen = app.add_subcommand("gen-data", "Generate, corrupt and export the train/test split");
  auto* train = app.add_subcommand("train", "Run one experiment and its report");
  auto* toy = app.add_subcommand("toy", "Quadratic bilevel runs with convergence and bound monitors");
  ToyOptions toy_opt;
  toy->add_option("--runs", toy_opt.runs, "Number of seeded problems")->capture_default_str();
  toy->add_option("--steps", toy_opt.steps, "Iterations T")->capture_default_str();
  toy->add_option("--schedule", toy_opt.schedule, "theorem1 | assumption3")->capture_default_str();
  toy->add_option("--c", toy_opt.c, "theorem1: eta_alpha = c / T")->capture_default_str();
  toy->add_option("--C", toy_opt.C, "eta_w constant")->capture_default_str();
  toy->add_option("--d-w", toy_opt.d_w)->capture_default_str();
  toy->add_option("--d-alpha", toy_opt.d_alpha)->capture_default_str();
  toy->add_option("--gamma", toy_opt.gamma)->capture_default_str();
  toy->add_option("--toy-xi", toy_opt.xi, "xi for the toy runs")->capture_default_str();
  toy->add_option("--toy-delta", toy_opt.delta, "delta for the toy runs")->capture_default_str();
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference audit of every objective");
  std::size_t probes = 50;
  double fd_eps = 1e-3, fd_tol = 1e-4;
  grad->add_option("--probes", probes)->capture_default_str();
  grad->add_option("--eps", fd_eps)->capture_default_str();
  grad->add_option("--tol", fd_tol)->capture_default_str();
  auto* sweep = app.add_subcommand("sweep", "One run per value of k, rho or xi");
  std::string parameter;
  std::vector<double> values;
  sweep->add_option("--param", parameter, "k | rho | xi")->required();
  sweep->add_option("--values", values, "Values to sweep")->required()->delimiter(',');
  auto* report = app.add_subcommand("report", "Render SVG charts and a summary from a run directory");
  std::string run_dir;
  report->add_option("--run-dir", run_dir, "Run directory (defaults to --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(g);
    if (*train) return cmd_train(g, quiet);
    if (*toy) return cmd_toy(g, toy_opt);
    if (*grad) return cmd_gradcheck(g, probes, fd_eps, fd_tol);
    if (*sweep) return cmd_sweep(g, parameter, values, quiet);
    if (*report) {
      const std::string dir = !run_dir.empty() ? run_dir : g.out;
      if (dir.empty()) throw ConfigError("report: pass --run-dir or --out");
      return cmd_report(dir);
    }
  } catch (const StepAbort& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheckFailed;
  }
  return kExitOk;
}

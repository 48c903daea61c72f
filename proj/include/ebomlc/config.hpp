#pragma once

#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "ebomlc/error.hpp"

namespace ebomlc {

using Json = nlohmann::ordered_json;

/// Flat experiment configuration. JSON keys are the member names; CLI flags
/// are their kebab-case forms.
struct ExperimentConfig {
  std::string algorithm = "ebomlc";  // ebomlc | mlcd | plain-noisy | plain-clean
  std::string data_source = "blobs";  // blobs | cifar10-binary
  std::vector<std::string> cifar_train_files;
  std::string cifar_test_file;
  std::string noise_kind = "uniform";  // uniform | flip
  double noise_rate = 0.4;
  std::vector<std::size_t> flip_mapping;  // empty: c -> (c + 1) mod C
  double clean_fraction = 0.02;
  std::size_t n_train = 5000;
  std::size_t n_test = 2000;
  std::size_t n_classes = 10;
  std::size_t input_dim = 16;
  double blob_spread = 0.8;
  std::vector<std::size_t> main_hidden{64, 64};
  std::vector<std::size_t> meta_hidden{128, 128};
  std::size_t feature_dim = 64;
  double rho = 0.2;
  double xi = 0.5;
  double delta = 0.25;
  std::size_t k = 0;  // 0: 5 for mlcd, 1 otherwise
  double eps_q = 1e-12;
  double main_lr = 0.1;
  double lr_decay = 0.1;
  std::vector<std::size_t> lr_milestones{80, 100};
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double meta_lr = 3e-4;
  std::string meta_optimizer = "adam";  // adam | sgd
  std::size_t epochs = 120;
  std::size_t clean_batch = 32;
  std::size_t noisy_batch = 128;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  bool w_only_denominator = false;
  std::string mixture_space = "probability";  // probability | logit
  bool record_wall_time = false;

  std::size_t effective_k() const { return k != 0 ? k : (algorithm == "mlcd" ? 5 : 1); }
  bool is_barrier() const { return algorithm == "ebomlc" || algorithm == "mlcd"; }
};

#define EBOMLC_CONFIG_FIELDS(X)                                                                                       \
  X(algorithm) X(data_source) X(cifar_train_files) X(cifar_test_file) X(noise_kind) X(noise_rate) X(flip_mapping)     \
  X(clean_fraction) X(n_train) X(n_test) X(n_classes) X(input_dim) X(blob_spread) X(main_hidden) X(meta_hidden)       \
  X(feature_dim) X(rho) X(xi) X(delta) X(k) X(eps_q) X(main_lr) X(lr_decay) X(lr_milestones) X(momentum)             \
  X(weight_decay) X(meta_lr) X(meta_optimizer) X(epochs) X(clean_batch) X(noisy_batch) X(seed) X(output_dir)         \
  X(w_only_denominator) X(mixture_space) X(record_wall_time)

inline Json to_json(const ExperimentConfig& c) {
  Json j;
#define X(name) j[#name] = c.name;
  EBOMLC_CONFIG_FIELDS(X)
#undef X
  return j;
}

inline std::vector<std::string> config_keys() {
  return {
#define X(name) #name,
      EBOMLC_CONFIG_FIELDS(X)
#undef X
  };
}

/// Range and membership checks; returns one message per offending key.
inline std::vector<std::string> range_errors(const ExperimentConfig& c) {
  std::vector<std::string> e;
  auto one_of = [&](const std::string& key, const std::string& v, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed) {
      if (v == a) return;
    }
    std::string msg = key + ": '" + v + "' is not one of";
    for (const char* a : allowed) msg += std::string(" ") + a;
    e.push_back(msg);
  };
  one_of("algorithm", c.algorithm, {"ebomlc", "mlcd", "plain-noisy", "plain-clean"});
  one_of("data_source", c.data_source, {"blobs", "cifar10-binary"});
  one_of("noise_kind", c.noise_kind, {"uniform", "flip"});
  one_of("meta_optimizer", c.meta_optimizer, {"adam", "sgd"});
  one_of("mixture_space", c.mixture_space, {"probability", "logit"});
  if (!(c.rho > 0.0 && c.rho <= 1.0)) e.push_back("rho: must lie in (0, 1]");
  if (!(c.xi > 0.0 && c.xi <= 1.0)) e.push_back("xi: must lie in (0, 1]");
  if (!(c.delta > 0.0)) e.push_back("delta: must be positive");
  if (!(c.noise_rate >= 0.0 && c.noise_rate <= 1.0)) e.push_back("noise_rate: must lie in [0, 1]");
  if (!(c.clean_fraction > 0.0 && c.clean_fraction < 1.0)) e.push_back("clean_fraction: must lie in (0, 1)");
  if (!(c.eps_q >= 0.0)) e.push_back("eps_q: must be non-negative");
  if (!(c.main_lr > 0.0)) e.push_back("main_lr: must be positive");
  if (!(c.meta_lr > 0.0)) e.push_back("meta_lr: must be positive");
  if (!(c.lr_decay > 0.0)) e.push_back("lr_decay: must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) e.push_back("momentum: must lie in [0, 1)");
  if (!(c.weight_decay >= 0.0)) e.push_back("weight_decay: must be non-negative");
  if (!(c.blob_spread >= 0.0)) e.push_back("blob_spread: must be non-negative");
  for (std::size_t i = 1; i < c.lr_milestones.size(); ++i) {
    if (c.lr_milestones[i] <= c.lr_milestones[i - 1]) e.push_back("lr_milestones: must be strictly increasing");
  }
  if (c.n_classes < 2) e.push_back("n_classes: must be >= 2");
  if (c.input_dim < 2) e.push_back("input_dim: must be >= 2");
  if (c.feature_dim < 1) e.push_back("feature_dim: must be >= 1");
  if (c.meta_hidden.size() != 2) e.push_back("meta_hidden: needs exactly two widths");
  for (auto h : c.main_hidden) {
    if (h == 0) e.push_back("main_hidden: widths must be positive");
  }
  for (auto h : c.meta_hidden) {
    if (h == 0) e.push_back("meta_hidden: widths must be positive");
  }
  if (c.epochs < 1) e.push_back("epochs: must be >= 1");
  if (c.clean_batch < 1) e.push_back("clean_batch: must be >= 1");
  if (c.noisy_batch < 1) e.push_back("noisy_batch: must be >= 1");
  if (c.n_train < c.n_classes) e.push_back("n_train: must be >= n_classes");
  if (c.n_test < 1) e.push_back("n_test: must be >= 1");
  if (c.data_source == "cifar10-binary" && c.cifar_train_files.empty()) {
    e.push_back("cifar_train_files: required for data_source cifar10-binary");
  }
  if (!c.flip_mapping.empty() && c.flip_mapping.size() != c.n_classes) {
    e.push_back("flip_mapping: needs one entry per class");
  }
  if (c.output_dir.empty()) e.push_back("output_dir: must not be empty");
  return e;
}

namespace detail {
inline bool read_value(const Json& j, std::string& out) {
  if (!j.is_string()) return false;
  out = j.get<std::string>();
  return true;
}
inline bool read_value(const Json& j, bool& out) {
  if (!j.is_boolean()) return false;
  out = j.get<bool>();
  return true;
}
inline bool read_value(const Json& j, double& out) {
  if (!j.is_number()) return false;
  out = j.get<double>();
  return true;
}
template <class T>
  requires std::is_unsigned_v<T>
inline bool read_value(const Json& j, T& out) {
  if (j.is_number_unsigned()) {
    out = j.get<T>();
    return true;
  }
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) return false;
  out = static_cast<T>(j.get<std::int64_t>());
  return true;
}
template <class T>
inline bool read_value(const Json& j, std::vector<T>& out) {
  if (!j.is_array()) return false;
  std::vector<T> tmp(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!read_value(j[i], tmp[i])) return false;
  }
  out = std::move(tmp);
  return true;
}
}  // namespace detail

struct ConfigValidation {
  ExperimentConfig config;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

/// Default filling, type and range checks, unknown-key rejection. Errors are
/// aggregated, each prefixed with its key.
inline ConfigValidation validate_config(const Json& raw) {
  ConfigValidation out;
  if (raw.is_null()) return out;
  if (!raw.is_object()) {
    out.errors.push_back("<root>: configuration must be a JSON object");
    return out;
  }
  std::set<std::string> known;
  for (const auto& k : config_keys()) known.insert(k);
  for (auto it = raw.begin(); it != raw.end(); ++it) {
    if (!known.count(it.key())) out.errors.push_back(it.key() + ": unknown key");
  }
#define X(name)                                                                     \
  if (raw.contains(#name) && !detail::read_value(raw.at(#name), out.config.name)) { \
    out.errors.push_back(std::string(#name) + ": wrong type (" + raw.at(#name).type_name() + ")"); \
  }
  EBOMLC_CONFIG_FIELDS(X)
#undef X
  for (auto& e : range_errors(out.config)) out.errors.push_back(std::move(e));
  return out;
}

/// Throws ConfigError listing every problem.
inline ExperimentConfig parse_config(const Json& raw) {
  ConfigValidation v = validate_config(raw);
  if (!v.ok()) {
    std::ostringstream os;
    os << "invalid configuration:";
    for (const auto& e : v.errors) os << "\n  " << e;
    throw ConfigError(os.str());
  }
  return v.config;
}

/// "noise_rate" -> "noise-rate"
inline std::string kebab_case(std::string key) {
  for (char& ch : key) {
    if (ch == '_') ch = '-';
  }
  return key;
}

}  // namespace ebomlc

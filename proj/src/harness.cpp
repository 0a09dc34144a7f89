/* Copyright 2026 The odnl-lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include "odnl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include "odnl/error.hpp"
#include "odnl/noisegen.hpp"

namespace odnl {
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

template <class T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>) {
      out += format_double(items[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += items[i];
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

struct ConfigKey {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define ODNL_NUM_KEY(NAME, FIELD, CAST)                                                      \
  ConfigKey {                                                                                \
    NAME, [](ExperimentConfig& c, const std::string& v) { c.FIELD = CAST(to_double(NAME, v)); }, \
        [](const ExperimentConfig& c) { return format_double(static_cast<double>(c.FIELD)); } \
  }
#define ODNL_INT_KEY(NAME, FIELD, CAST)                                                    \
  ConfigKey {                                                                              \
    NAME, [](ExperimentConfig& c, const std::string& v) { c.FIELD = CAST(to_int(NAME, v)); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                  \
  }
#define ODNL_BOOL_KEY(NAME, FIELD)                                                        \
  ConfigKey {                                                                             \
    NAME, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_bool(NAME, v); },  \
        [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); } \
  }
#define ODNL_STR_KEY(NAME, FIELD)                                                  \
  ConfigKey {                                                                      \
    NAME, [](ExperimentConfig& c, const std::string& v) { c.FIELD = v; },          \
        [](const ExperimentConfig& c) { return c.FIELD; }                          \
  }

int as_int(long long v) { return static_cast<int>(v); }
double as_double(double v) { return v; }
std::uint64_t as_u64(long long v) { return static_cast<std::uint64_t>(v); }

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      ODNL_INT_KEY("data.k", blobs.k, as_int),
      ODNL_INT_KEY("data.d", blobs.d, as_int),
      ODNL_NUM_KEY("data.separation", blobs.separation, as_double),
      ODNL_NUM_KEY("data.sigma", blobs.sigma, as_double),
      ODNL_INT_KEY("data.n_train", n_train, as_int),
      ODNL_INT_KEY("data.n_test", n_test, as_int),
      ODNL_STR_KEY("noise.type", noise.type),
      ODNL_NUM_KEY("noise.rate", noise.rate, as_double),
      ODNL_STR_KEY("aux.kind", aux.kind),
      ODNL_INT_KEY("aux.size", aux.size, as_int),
      ODNL_NUM_KEY("aux.alpha", aux.alpha, as_double),
      ConfigKey{"aux.mode",
                [](ExperimentConfig& c, const std::string& v) { c.train.aux_label_mode = parse_aux_label_mode(v); },
                [](const ExperimentConfig& c) { return to_string(c.train.aux_label_mode); }},
      ConfigKey{"train.regularizer",
                [](ExperimentConfig& c, const std::string& v) { c.train.regularizer = parse_regularizer(v); },
                [](const ExperimentConfig& c) { return to_string(c.train.regularizer); }},
      ODNL_BOOL_KEY("train.compose_odnl", train.compose_odnl),
      ODNL_NUM_KEY("train.eta", train.eta, as_double),
      ODNL_NUM_KEY("train.lambda_oe", train.lambda_oe, as_double),
      ODNL_NUM_KEY("train.sigma_sln", train.sigma_sln, as_double),
      ODNL_NUM_KEY("train.label_smoothing", train.label_smoothing, as_double),
      ODNL_INT_KEY("train.epochs", train.epochs, as_int),
      ODNL_INT_KEY("train.train_batch", train.train_batch, as_int),
      ODNL_INT_KEY("train.aux_batch", train.aux_batch, as_int),
      ODNL_NUM_KEY("train.lr", train.lr.initial, as_double),
      ConfigKey{"train.lr_decay_epochs",
                [](ExperimentConfig& c, const std::string& v) {
                  c.train.lr.decay_epochs.clear();
                  for (const auto& item : split_list(v)) {
                    c.train.lr.decay_epochs.push_back(as_int(to_int("train.lr_decay_epochs", item)));
                  }
                },
                [](const ExperimentConfig& c) { return join(c.train.lr.decay_epochs); }},
      ODNL_NUM_KEY("train.lr_decay_factor", train.lr.factor, as_double),
      ODNL_NUM_KEY("train.momentum", train.momentum, as_double),
      ODNL_NUM_KEY("train.weight_decay", train.weight_decay, as_double),
      ODNL_NUM_KEY("train.coteach_forget_rate", train.coteach_forget_rate, as_double),
      ODNL_NUM_KEY("train.coteach_warmup", train.coteach_warmup, as_double),
      ConfigKey{"train.hidden",
                [](ExperimentConfig& c, const std::string& v) {
                  c.train.hidden_widths.clear();
                  for (const auto& item : split_list(v)) {
                    c.train.hidden_widths.push_back(as_int(to_int("train.hidden", item)));
                  }
                },
                [](const ExperimentConfig& c) { return join(c.train.hidden_widths); }},
      ODNL_BOOL_KEY("train.tune_eta", tune_eta),
      ConfigKey{"train.eta_candidates",
                [](ExperimentConfig& c, const std::string& v) {
                  c.eta_candidates.clear();
                  for (const auto& item : split_list(v)) {
                    c.eta_candidates.push_back(to_double("train.eta_candidates", item));
                  }
                },
                [](const ExperimentConfig& c) { return join(c.eta_candidates); }},
      ODNL_NUM_KEY("train.validation_fraction", validation_fraction, as_double),
      ConfigKey{"ood.pools",
                [](ExperimentConfig& c, const std::string& v) { c.ood_pools = split_list(v); },
                [](const ExperimentConfig& c) { return join(c.ood_pools); }},
      ODNL_INT_KEY("ood.size", ood_size, as_int),
      ODNL_BOOL_KEY("landscape.enabled", landscape),
      ODNL_INT_KEY("landscape.resolution", landscape_resolution, as_int),
      ODNL_NUM_KEY("landscape.radius", landscape_radius, as_double),
      ODNL_INT_KEY("experiment.seed", seed, as_u64),
      ODNL_INT_KEY("experiment.replicates", replicates, as_int),
      ODNL_STR_KEY("experiment.output_dir", output_dir),
  };
  return keys;
}

#undef ODNL_NUM_KEY
#undef ODNL_INT_KEY
#undef ODNL_BOOL_KEY
#undef ODNL_STR_KEY

const ConfigKey& find_key(const std::string& key) {
  for (const auto& k : config_keys()) {
    if (key == k.name) return k;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

double final_value(const std::vector<EpochMetrics>& metrics, double EpochMetrics::*field) {
  return metrics.empty() ? kNaN : metrics.back().*field;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  body(out);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

double sample_stddev(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

Matrix class_means(const BlobSpec& spec) {
  if (spec.k < 1 || spec.d < 1) throw ConfigError("blob spec needs positive k and d");
  Matrix means = Matrix::Zero(spec.k, spec.d);
  if (spec.d == 1) {
    for (int c = 0; c < spec.k; ++c) means(c, 0) = spec.separation * (c - 0.5 * (spec.k - 1));
  } else if (spec.d == 2 || spec.k > spec.d || spec.k < 3) {
    for (int c = 0; c < spec.k; ++c) {
      const double angle = 2.0 * std::numbers::pi * c / spec.k;
      means(c, 0) = spec.separation * std::cos(angle);
      means(c, 1) = spec.separation * std::sin(angle);
    }
  } else {
    // Centred one-hot vectors in the first k coordinates, scaled to norm `separation`.
    const double norm = std::sqrt(1.0 - 1.0 / spec.k);
    for (int c = 0; c < spec.k; ++c) {
      for (int j = 0; j < spec.k; ++j) {
        means(c, j) = spec.separation * ((j == c ? 1.0 : 0.0) - 1.0 / spec.k) / norm;
      }
    }
  }
  return means;
}

LabeledDataset generate_blobs(int k, int n, int d, double separation, double sigma,
                              std::uint64_t seed) {
  if (k <= 0 || n <= 0 || d <= 0) throw ConfigError("generate_blobs: k, n, d must be positive");
  if (!(separation > 0.0) || !(sigma >= 0.0)) {
    throw ConfigError("generate_blobs: separation must be positive and sigma non-negative");
  }
  if (n % k != 0) throw ConfigError("generate_blobs: n must be divisible by k");
  const Matrix means = class_means({k, d, separation, sigma});
  Rng rng(seed, "blobs");
  LabeledDataset data;
  data.num_classes = k;
  data.features.resize(n, d);
  for (int i = 0; i < n; ++i) {
    const int c = i % k;
    for (int f = 0; f < d; ++f) data.features(i, f) = means(c, f) + sigma * rng.normal();
    data.observed_labels.push_back(c);
    data.true_labels.push_back(c);
    data.open_set_mask.push_back(false);
  }
  return data;
}

OpenSetKind parse_open_set_kind(const std::string& name) {
  if (name == "ring") return OpenSetKind::Ring;
  if (name == "uniform") return OpenSetKind::Uniform;
  if (name == "gaussian") return OpenSetKind::Gaussian;
  throw ConfigError("unknown open-set pool kind '" + name + "'");
}

std::string to_string(OpenSetKind kind) {
  switch (kind) {
    case OpenSetKind::Ring: return "ring";
    case OpenSetKind::Uniform: return "uniform";
    case OpenSetKind::Gaussian: return "gaussian";
  }
  return "unknown";
}

std::pair<double, double> ring_bounds(const BlobSpec& spec) {
  return {spec.separation + kOpenSetMinDistance * spec.sigma,
          spec.separation + 2.0 * kOpenSetMinDistance * spec.sigma};
}

double uniform_box_half_width(const BlobSpec& spec) {
  return spec.separation + 2.0 * kOpenSetMinDistance * spec.sigma;
}

AuxiliaryPool generate_openset_pool(OpenSetKind kind, int m, std::uint64_t seed,
                                    const BlobSpec& spec) {
  if (m < 0) throw ConfigError("pool size must be non-negative");
  const Matrix means = class_means(spec);
  const int d = spec.d;
  Rng rng(seed, "openset_" + to_string(kind));
  const auto [r_in, r_out] = ring_bounds(spec);
  const double box = uniform_box_half_width(spec);
  const double min_dist = kOpenSetMinDistance * spec.sigma;

  AuxiliaryPool pool;
  pool.features.resize(m, d);
  const long long max_attempts = 1000LL * std::max(m, 1);
  long long attempts = 0;
  Vector x(d);
  for (int i = 0; i < m;) {
    if (++attempts > max_attempts) {
      throw ConfigError("generate_openset_pool: rejection sampling did not converge");
    }
    switch (kind) {
      case OpenSetKind::Ring: {
        for (int f = 0; f < d; ++f) x[f] = rng.normal();
        const double norm = x.norm();
        if (norm == 0.0) continue;
        // Radius density proportional to r^(d-1) on the shell.
        const double lo = std::pow(r_in, d);
        const double hi = std::pow(r_out, d);
        const double r = std::pow(lo + (hi - lo) * rng.uniform(), 1.0 / d);
        x *= r / norm;
        break;
      }
      case OpenSetKind::Uniform:
        for (int f = 0; f < d; ++f) x[f] = (2.0 * rng.uniform() - 1.0) * box;
        break;
      case OpenSetKind::Gaussian:
        for (int f = 0; f < d; ++f) x[f] = rng.normal() * (spec.separation + min_dist) / std::sqrt(2.0);
        break;
    }
    bool far = true;
    for (Eigen::Index c = 0; c < means.rows() && far; ++c) {
      far = (x - means.row(c).transpose()).norm() >= min_dist;
    }
    if (!far) continue;
    pool.features.row(i) = x.transpose();
    ++i;
  }
  return pool;
}

AuxiliaryPool generate_closedset_pool(int m, const BlobSpec& spec, std::uint64_t seed) {
  if (m < 0) throw ConfigError("pool size must be non-negative");
  const Matrix means = class_means(spec);
  Rng rng(seed, "closedset");
  AuxiliaryPool pool;
  pool.features.resize(m, spec.d);
  for (int i = 0; i < m; ++i) {
    const auto c = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(spec.k)));
    for (int f = 0; f < spec.d; ++f) pool.features(i, f) = means(c, f) + spec.sigma * rng.normal();
  }
  return pool;
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& purpose) {
  Rng rng(base, purpose);
  return rng();
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  find_key(key).set(*this, trim(value));
}

std::string ExperimentConfig::get(const std::string& key) const { return find_key(key).get(*this); }

std::vector<std::string> ExperimentConfig::keys() {
  std::vector<std::string> names;
  for (const auto& k : config_keys()) names.emplace_back(k.name);
  return names;
}

std::vector<std::string> ExperimentConfig::header_lines() const {
  std::vector<std::string> lines;
  for (const auto& k : config_keys()) lines.push_back(std::string("# ") + k.name + "=" + k.get(*this));
  return lines;
}

std::vector<std::uint64_t> ExperimentConfig::replicate_seeds() const {
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < replicates; ++r) seeds.push_back(seed + static_cast<std::uint64_t>(r));
  return seeds;
}

void ExperimentConfig::validate() const {
  if (replicates < 1) throw ConfigError("experiment.replicates must be at least 1");
  if (n_train <= 0 || n_test <= 0) throw ConfigError("data sizes must be positive");
  if (n_train % blobs.k != 0 || n_test % blobs.k != 0) {
    throw ConfigError("data sizes must be divisible by data.k");
  }
  static const std::vector<std::string> noise_types{"none", "symmetric", "circular", "instance", "open"};
  if (std::find(noise_types.begin(), noise_types.end(), noise.type) == noise_types.end()) {
    throw ConfigError("unknown noise.type '" + noise.type + "'");
  }
  if (!(noise.rate >= 0.0 && noise.rate <= 1.0)) throw ConfigError("noise.rate must lie in [0,1]");
  static const std::vector<std::string> aux_kinds{"none", "open_ring", "open_uniform", "closed", "mix"};
  if (std::find(aux_kinds.begin(), aux_kinds.end(), aux.kind) == aux_kinds.end()) {
    throw ConfigError("unknown aux.kind '" + aux.kind + "'");
  }
  if (!(aux.alpha >= 0.0 && aux.alpha <= 1.0)) throw ConfigError("aux.alpha must lie in [0,1]");
  for (const auto& p : ood_pools) parse_open_set_kind(p);
  if (tune_eta && eta_candidates.empty()) throw ConfigError("train.eta_candidates is empty");
  if (landscape && (landscape_resolution < 1 || landscape_resolution % 2 == 0)) {
    throw ConfigError("landscape.resolution must be odd");
  }
  train.validate();
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    config.set(key, line.substr(eq + 1));
  }
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

ReplicateData build_replicate_data(const ExperimentConfig& config, std::uint64_t seed) {
  ReplicateData out;
  out.train = generate_blobs(config.blobs, config.n_train, derive_seed(seed, "train_data"));
  out.test = generate_blobs(config.blobs, config.n_test, derive_seed(seed, "test_data"));

  const Rng noise_rng(seed, "label_noise");
  const std::string& type = config.noise.type;
  if (type == "symmetric") {
    out.train = corrupt_symmetric(out.train, config.noise.rate, noise_rng);
  } else if (type == "circular") {
    out.train = corrupt_circular(out.train, config.noise.rate, noise_rng);
  } else if (type == "instance") {
    TrainConfig weak;
    weak.epochs = 5;
    weak.lr.decay_epochs.clear();
    weak.hidden_widths = config.train.hidden_widths;
    weak.train_batch = std::min(config.train.train_batch, config.n_train);
    weak.seed = derive_seed(seed, "weak_model");
    TrainInputs in;
    in.train = &out.train;
    const NetworkParams weak_model = train(weak, in).params;
    out.train = corrupt_instance_dependent(out.train, config.noise.rate, weak_model);
  } else if (type == "open") {
    const AuxiliaryPool source =
        generate_openset_pool(OpenSetKind::Uniform, config.n_train, derive_seed(seed, "open_noise"), config.blobs);
    out.train = inject_open_set(out.train, config.noise.rate, source, noise_rng);
  }

  const std::string& kind = config.aux.kind;
  if (kind == "open_ring" || kind == "mix") {
    out.pool = generate_openset_pool(OpenSetKind::Ring, config.aux.size, derive_seed(seed, "aux_open"),
                                     config.blobs);
  } else if (kind == "open_uniform") {
    out.pool = generate_openset_pool(OpenSetKind::Uniform, config.aux.size, derive_seed(seed, "aux_open"),
                                     config.blobs);
  } else if (kind == "closed") {
    out.pool = generate_closedset_pool(config.aux.size, config.blobs, derive_seed(seed, "aux_closed"));
  }
  if (kind == "mix") {
    const AuxiliaryPool closed =
        generate_closedset_pool(config.aux.size, config.blobs, derive_seed(seed, "aux_closed"));
    out.pool = mix_auxiliary(*out.pool, closed, config.aux.alpha, Rng(seed, "aux_mix"));
  }
  return out;
}

ReplicateResult run_replicate(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  const ReplicateData data = build_replicate_data(config, seed);
  const AuxiliaryPool* pool = data.pool ? &*data.pool : nullptr;

  TrainConfig tc = config.train;
  tc.seed = derive_seed(seed, "train");
  if (config.tune_eta) {
    const EtaTuning tuning = tune_eta(tc, data.train, pool, config.validation_fraction, config.eta_candidates);
    tc = with_odnl_eta(tc, tuning.best_eta);
  }

  ReplicateResult result;
  result.seed = seed;
  result.eta_used = tc.odnl_active() ? tc.eta : 0.0;
  TrainInputs in;
  in.train = &data.train;
  in.pool = pool;
  in.test = &data.test;
  TrainResult trained = train(tc, in);
  result.metrics = std::move(trained.metrics);
  result.params = std::move(trained.params);

  for (const auto& name : config.ood_pools) {
    const OpenSetKind kind = parse_open_set_kind(name);
    const AuxiliaryPool ood = generate_openset_pool(kind, config.ood_size, derive_seed(seed, "ood_" + name),
                                                    config.blobs);
    result.ood.push_back({name, evaluate_detector(result.params, data.test.features, ood.features)});
  }
  if (config.landscape) {
    const LandscapeSlice slice = landscape_slice(result.params, data.train, config.landscape_resolution,
                                                 config.landscape_radius, Rng(seed, "landscape"));
    result.sharpness = slice.sharpness;
    result.landscape = slice;
  }
  return result;
}

ReplicateSummary summarize_replicate(std::uint64_t seed, double eta,
                                     const std::vector<EpochMetrics>& metrics,
                                     const std::vector<PoolMetrics>& ood,
                                     std::optional<double> sharpness) {
  ReplicateSummary s;
  s.seed = seed;
  s.eta = eta;
  s.final_test_acc = final_window_mean(metrics, &EpochMetrics::test_acc);
  s.best_test_acc = kNaN;
  for (const auto& m : metrics) {
    if (std::isnan(s.best_test_acc) || m.test_acc > s.best_test_acc) s.best_test_acc = m.test_acc;
  }
  s.best_minus_final = s.best_test_acc - s.final_test_acc;
  s.final_train_loss = final_value(metrics, &EpochMetrics::train_loss);
  s.final_clean_loss = final_value(metrics, &EpochMetrics::clean_loss);
  s.final_noisy_loss = final_value(metrics, &EpochMetrics::noisy_loss);
  s.final_aux_loss = final_value(metrics, &EpochMetrics::aux_loss);
  if (ood.empty()) {
    s.fpr95 = s.auroc = s.aupr = kNaN;
  } else {
    const OodMetrics mean = average_metrics(ood);
    s.fpr95 = mean.fpr95;
    s.auroc = mean.auroc;
    s.aupr = mean.aupr;
  }
  s.sharpness = sharpness.value_or(kNaN);
  return s;
}

std::vector<std::string> summary_metric_names() {
  return {"eta", "final_test_acc", "best_test_acc", "best_minus_final", "final_train_loss",
          "final_clean_loss", "final_noisy_loss", "final_aux_loss", "fpr95", "auroc", "aupr",
          "sharpness"};
}

namespace {

std::vector<double> summary_values(const ReplicateSummary& s) {
  return {s.eta, s.final_test_acc, s.best_test_acc, s.best_minus_final, s.final_train_loss,
          s.final_clean_loss, s.final_noisy_loss, s.final_aux_loss, s.fpr95, s.auroc, s.aupr,
          s.sharpness};
}

void write_replicates_csv(std::ostream& out, const std::vector<ReplicateSummary>& reps,
                          const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << c << '\n';
  out << "seed";
  for (const auto& name : summary_metric_names()) out << ',' << name;
  out << '\n';
  for (const auto& r : reps) {
    out << r.seed;
    for (double v : summary_values(r)) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_error_manifest(const fs::path& dir, std::uint64_t seed, const std::string& stage,
                          const std::exception& e) {
  std::ofstream out(dir / "error_manifest.txt", std::ios::binary);
  out << "replicate_seed=" << seed << "\nstage=" << stage << "\nerror=" << e.what() << '\n';
}

}  // namespace

std::vector<MetricSummary> summarize(const std::vector<ReplicateSummary>& reps) {
  const auto names = summary_metric_names();
  std::vector<MetricSummary> out;
  for (std::size_t m = 0; m < names.size(); ++m) {
    std::vector<double> values;
    for (const auto& r : reps) values.push_back(summary_values(r)[m]);
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = values.empty() ? kNaN : sum / static_cast<double>(values.size());
    out.push_back({names[m], mean, sample_stddev(values, mean), values.size()});
  }
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<MetricSummary>& summary,
                       const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << c << '\n';
  out << "metric,mean,std,n\n";
  for (const auto& s : summary) {
    out << s.metric << ',' << format_double(s.mean) << ',' << format_double(s.stddev) << ',' << s.n << '\n';
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult result;
  result.directory = config.output_dir;
  fs::create_directories(result.directory);
  const auto header = config.header_lines();

  for (std::uint64_t seed : config.replicate_seeds()) {
    const fs::path rep_dir = result.directory / ("rep_" + std::to_string(seed));
    std::string stage = "train";
    try {
      fs::create_directories(rep_dir);
      ReplicateResult rep = run_replicate(config, seed);
      stage = "write";
      std::vector<std::string> rep_header = header;
      rep_header.push_back("# replicate.seed=" + std::to_string(seed));
      rep_header.push_back("# replicate.eta_used=" + format_double(rep.eta_used));
      write_file(rep_dir / "metrics.csv", [&](std::ostream& out) { write_metrics_csv(out, rep.metrics, rep_header); });
      write_file(rep_dir / "params.txt", [&](std::ostream& out) { write_params(out, rep.params); });
      if (!rep.ood.empty()) {
        write_file(rep_dir / "ood.csv", [&](std::ostream& out) { write_ood_csv(out, rep.ood, rep_header); });
      }
      if (rep.landscape) {
        write_file(rep_dir / "landscape.csv",
                   [&](std::ostream& out) { write_landscape_csv(out, *rep.landscape, rep_header); });
      }
      if (rep.sharpness) {
        write_file(rep_dir / "sharpness.txt",
                   [&](std::ostream& out) { out << format_double(*rep.sharpness) << '\n'; });
      }
      result.replicates.push_back(summarize_replicate(seed, rep.eta_used, rep.metrics, rep.ood, rep.sharpness));
    } catch (const std::exception& e) {
      write_error_manifest(result.directory, seed, stage, e);
      if (!result.replicates.empty()) {
        write_file(result.directory / "replicates.csv",
                   [&](std::ostream& out) { write_replicates_csv(out, result.replicates, header); });
      }
      throw;
    }
  }
  result.summary = summarize(result.replicates);
  write_file(result.directory / "replicates.csv",
             [&](std::ostream& out) { write_replicates_csv(out, result.replicates, header); });
  write_file(result.directory / "summary.csv",
             [&](std::ostream& out) { write_summary_csv(out, result.summary, header); });
  return result;
}

ExperimentResult recompute_summary(const fs::path& directory) {
  if (!fs::is_directory(directory)) throw IoError("not a result directory: " + directory.string());
  ExperimentResult result;
  result.directory = directory;
  std::vector<std::pair<std::uint64_t, fs::path>> reps;
  for (const auto& entry : fs::directory_iterator(directory)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("rep_", 0) == 0) {
      reps.emplace_back(std::stoull(name.substr(4)), entry.path());
    }
  }
  std::sort(reps.begin(), reps.end());
  for (const auto& [seed, dir] : reps) {
    std::ifstream metrics_in(dir / "metrics.csv", std::ios::binary);
    if (!metrics_in) throw IoError("missing metrics.csv in " + dir.string());
    std::stringstream buf;
    buf << metrics_in.rdbuf();
    double eta = 0.0;
    std::string line;
    std::istringstream scan(buf.str());
    while (std::getline(scan, line)) {
      if (line.rfind("# replicate.eta_used=", 0) == 0) eta = std::stod(line.substr(21));
    }
    std::istringstream rows(buf.str());
    const auto metrics = read_metrics_csv(rows);

    std::vector<PoolMetrics> ood;
    std::ifstream ood_in(dir / "ood.csv", std::ios::binary);
    while (ood_in && std::getline(ood_in, line)) {
      if (line.empty() || line.front() == '#' || line.rfind("pool,", 0) == 0 || line.rfind("mean,", 0) == 0) {
        continue;
      }
      std::istringstream cells(line);
      std::string name, a, b, c;
      std::getline(cells, name, ',');
      std::getline(cells, a, ',');
      std::getline(cells, b, ',');
      std::getline(cells, c, ',');
      ood.push_back({name, {std::stod(a), std::stod(b), std::stod(c)}});
    }
    std::optional<double> sharpness;
    std::ifstream sharp_in(dir / "sharpness.txt", std::ios::binary);
    if (sharp_in && std::getline(sharp_in, line)) sharpness = std::stod(line);
    result.replicates.push_back(summarize_replicate(seed, eta, metrics, ood, sharpness));
  }
  result.summary = summarize(result.replicates);
  return result;
}

namespace {

void write_sweep_summary(const fs::path& path, const std::string& label_columns,
                         const std::vector<SweepRow>& rows, const std::vector<std::string>& header) {
  write_file(path, [&](std::ostream& out) {
    for (const auto& c : header) out << c << '\n';
    out << label_columns;
    for (const auto& name : summary_metric_names()) out << ',' << name << "_mean," << name << "_std";
    out << ",n\n";
    for (const auto& row : rows) {
      out << row.label;
      for (const auto& s : row.result.summary) out << ',' << format_double(s.mean) << ',' << format_double(s.stddev);
      out << ',' << (row.result.summary.empty() ? 0 : row.result.summary.front().n) << '\n';
    }
  });
}

}  // namespace

std::vector<SweepRow> run_size_sweep(const ExperimentConfig& base, const std::vector<int>& sizes) {
  if (sizes.empty()) throw ConfigError("run_size_sweep: no pool sizes");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] <= 0 || (i > 0 && sizes[i] <= sizes[i - 1])) {
      throw ConfigError("run_size_sweep: sizes must be positive and ascending");
    }
  }
  const fs::path root = base.output_dir;
  fs::create_directories(root);
  std::vector<SweepRow> rows;

  ExperimentConfig baseline = base;
  baseline.aux.kind = "none";
  baseline.train.regularizer = Regularizer::Standard;
  baseline.train.compose_odnl = false;
  baseline.tune_eta = false;
  baseline.output_dir = (root / "baseline").string();
  rows.push_back({"0,none", run_experiment(baseline)});

  for (int size : sizes) {
    for (const std::string kind : {"open", "closed"}) {
      ExperimentConfig cfg = base;
      cfg.aux.kind = kind == "open" ? "open_ring" : "closed";
      cfg.aux.size = size;
      cfg.train.aux_label_mode = AuxLabelMode::Fixed;
      if (cfg.train.regularizer == Regularizer::Standard) cfg.train.regularizer = Regularizer::Odnl;
      cfg.train.aux_batch = std::min(cfg.train.aux_batch, size);
      cfg.output_dir = (root / ("size_" + std::to_string(size) + "_" + kind)).string();
      rows.push_back({std::to_string(size) + "," + kind, run_experiment(cfg)});
    }
  }
  write_sweep_summary(root / "summary.csv", "size,pool_kind", rows, base.header_lines());
  return rows;
}

std::vector<SweepRow> run_alpha_sweep(const ExperimentConfig& base, const std::vector<double>& alphas) {
  if (alphas.empty()) throw ConfigError("run_alpha_sweep: no alphas");
  const fs::path root = base.output_dir;
  fs::create_directories(root);
  std::vector<SweepRow> rows;
  for (double alpha : alphas) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("run_alpha_sweep: alpha must lie in [0,1]");
    ExperimentConfig cfg = base;
    cfg.aux.kind = "mix";
    cfg.aux.alpha = alpha;
    if (cfg.train.regularizer == Regularizer::Standard) cfg.train.regularizer = Regularizer::Odnl;
    cfg.output_dir = (root / ("alpha_" + format_double(alpha))).string();
    rows.push_back({format_double(alpha), run_experiment(cfg)});
  }
  write_sweep_summary(root / "summary.csv", "alpha", rows, base.header_lines());
  return rows;
}

double linear_probe_accuracy(const LabeledDataset& train_set, const LabeledDataset& test,
                             std::uint64_t seed) {
  TrainConfig probe;
  probe.hidden_widths.clear();
  probe.epochs = 20;
  probe.lr.decay_epochs.clear();
  probe.train_batch = std::min<int>(128, static_cast<int>(train_set.size()));
  probe.seed = seed;
  TrainInputs in;
  in.train = &train_set;
  const NetworkParams params = train(probe, in).params;
  return accuracy(params, test.features, test.true_labels);
}

}  // namespace odnl

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

// Command-line front end. Talks to the library through the C interface only.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "odnl/odnl.h"

namespace fs = std::filesystem;

namespace {

class CliError : public std::runtime_error {
 public:
  CliError(odnl_status status, const std::string& what) : std::runtime_error(what), status_(status) {}
  odnl_status status() const { return status_; }

 private:
  odnl_status status_;
};

void check(odnl_status status, const std::string& action) {
  if (status != ODNL_OK) {
    throw CliError(status, action + ": " + odnl_status_name(status) + ": " + odnl_last_error());
  }
}

struct ConfigDeleter {
  void operator()(odnl_config* p) const { odnl_config_free(p); }
};
struct DatasetDeleter {
  void operator()(odnl_dataset* p) const { odnl_dataset_free(p); }
};
struct PoolDeleter {
  void operator()(odnl_pool* p) const { odnl_pool_free(p); }
};
struct NetworkDeleter {
  void operator()(odnl_network* p) const { odnl_network_free(p); }
};
using ConfigPtr = std::unique_ptr<odnl_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<odnl_dataset, DatasetDeleter>;
using PoolPtr = std::unique_ptr<odnl_pool, PoolDeleter>;
using NetworkPtr = std::unique_ptr<odnl_network, NetworkDeleter>;

std::string config_value(const odnl_config* config, const std::string& key) {
  size_t needed = 0;
  check(odnl_config_get(config, key.c_str(), nullptr, 0, &needed), "read config key " + key);
  std::string buf(needed, '\0');
  check(odnl_config_get(config, key.c_str(), buf.data(), buf.size(), &needed), "read config key " + key);
  buf.resize(needed - 1);
  return buf;
}

void set_value(odnl_config* config, const std::string& key, const std::string& value) {
  check(odnl_config_set(config, key.c_str(), value.c_str()), "set " + key);
}

DatasetPtr load_dataset(const std::string& path) {
  odnl_dataset* raw = nullptr;
  check(odnl_dataset_load(path.c_str(), &raw), "load dataset " + path);
  return DatasetPtr(raw);
}

PoolPtr load_pool(const std::string& path) {
  odnl_pool* raw = nullptr;
  check(odnl_pool_load(path.c_str(), &raw), "load pool " + path);
  return PoolPtr(raw);
}

NetworkPtr load_network(const std::string& path) {
  odnl_network* raw = nullptr;
  check(odnl_network_load(path.c_str(), &raw), "load network " + path);
  return NetworkPtr(raw);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError(ODNL_ERR_IO, "cannot create directory " + dir + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

struct GlobalOptions {
  std::string config_path;
  std::string out;
  uint64_t seed = 0;
  bool seed_given = false;
  std::vector<std::string> overrides;
};

struct Paths {
  std::string data;
  std::string pool;
  std::string test;
  std::string model;
  std::string dir;
  std::vector<std::string> pools;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training with open-set auxiliary samples and dynamic noisy labels"};
  app.require_subcommand(1);
  GlobalOptions global;
  app.add_option("--config", global.config_path, "Experiment config file")->check(CLI::ExistingFile);
  app.add_option("--out", global.out, "Output file or directory");
  auto* seed_opt = app.add_option("--seed", global.seed, "Seed (overrides experiment.seed)");
  app.add_option("--set", global.overrides, "Config override section.key=value (repeatable)");

  Paths paths;
  std::string kind = "blobs";
  int count = 0;
  std::string noise_type;
  double noise_rate = -1.0;
  size_t samples = 0;
  double sigma = 1.0;
  int resolution = 21;
  double radius = 1.0;
  std::vector<int> sizes{1000, 5000, 20000, 80000};
  std::vector<double> alphas{0.0, 0.5, 1.0};

  auto* gen = app.add_subcommand("gen-data", "Generate a blob dataset or an auxiliary pool");
  gen->add_option("--kind", kind, "blobs | ring | uniform | gaussian | closed")
      ->check(CLI::IsMember({"blobs", "ring", "uniform", "gaussian", "closed"}));
  gen->add_option("-n,--count", count, "Rows (default data.n_train or aux.size)");

  auto* corrupt = app.add_subcommand("corrupt", "Corrupt the labels of a dataset");
  corrupt->add_option("--data", paths.data, "Input dataset CSV")->required();
  corrupt->add_option("--type", noise_type, "symmetric | circular | instance | open (default noise.type)");
  corrupt->add_option("--rate", noise_rate, "Corruption rate (default noise.rate)");
  corrupt->add_option("--pool", paths.pool, "Open-set source pool for type=open");
  corrupt->add_option("--model", paths.model, "Weak model parameters for type=instance");

  auto* train = app.add_subcommand("train", "Train one network");
  train->add_option("--data", paths.data, "Training dataset CSV")->required();
  train->add_option("--pool", paths.pool, "Auxiliary pool CSV");
  train->add_option("--test", paths.test, "Test dataset CSV");

  auto* tune = app.add_subcommand("tune-eta", "Select eta on a held-out noisy split");
  tune->add_option("--data", paths.data, "Training dataset CSV")->required();
  tune->add_option("--pool", paths.pool, "Auxiliary pool CSV")->required();

  auto* analyze = app.add_subcommand("analyze-noise", "Check the SGD-noise identities on a trained network");
  analyze->add_option("--model", paths.model, "Network parameters")->required();
  analyze->add_option("--data", paths.data, "Dataset providing training inputs")->required();
  analyze->add_option("--pool", paths.pool, "Auxiliary pool providing open-set inputs")->required();
  analyze->add_option("--samples", samples, "Monte-Carlo sample budget (0 = defaults)");
  analyze->add_option("--sigma", sigma, "Label-noise scale for the SLN checks");

  auto* landscape = app.add_subcommand("landscape", "Evaluate a 2-D loss slice around a network");
  landscape->add_option("--model", paths.model, "Network parameters")->required();
  landscape->add_option("--data", paths.data, "Dataset whose observed-label loss is sliced")->required();
  landscape->add_option("--resolution", resolution, "Grid points per axis (odd)");
  landscape->add_option("--radius", radius, "Grid half-width");

  auto* eval = app.add_subcommand("eval-ood", "Score OOD detection with maximum softmax probability");
  eval->add_option("--model", paths.model, "Network parameters")->required();
  eval->add_option("--data", paths.data, "In-distribution dataset")->required();
  eval->add_option("--pool", paths.pools, "OOD pool CSV (repeatable)")->required();

  auto* run = app.add_subcommand("run", "Run every replicate of the configured experiment");

  auto* sweep_size = app.add_subcommand("sweep-size", "Fixed-label auxiliary pools of several sizes");
  sweep_size->add_option("--sizes", sizes, "Ascending pool sizes")->delimiter(',');

  auto* sweep_alpha = app.add_subcommand("sweep-alpha", "Open/closed auxiliary mixtures");
  sweep_alpha->add_option("--alphas", alphas, "Mixing proportions in [0,1]")->delimiter(',');

  auto* report = app.add_subcommand("report", "Recompute the summary of a result directory");
  report->add_option("--dir", paths.dir, "Result directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  global.seed_given = seed_opt->count() > 0;

  std::string manifest_dir = ".";
  try {
    odnl_config* raw_config = nullptr;
    if (global.config_path.empty()) {
      check(odnl_config_create(&raw_config), "create config");
    } else {
      check(odnl_config_load(global.config_path.c_str(), &raw_config), "load config " + global.config_path);
    }
    ConfigPtr config(raw_config);
    for (const auto& item : global.overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw CliError(ODNL_ERR_CONFIG, "--set expects key=value, got " + item);
      set_value(config.get(), item.substr(0, eq), item.substr(eq + 1));
    }
    if (global.seed_given) set_value(config.get(), "experiment.seed", std::to_string(global.seed));
    const uint64_t seed = std::stoull(config_value(config.get(), "experiment.seed"));

    const auto require_out = [&](const char* what) {
      if (global.out.empty()) throw CliError(ODNL_ERR_CONFIG, std::string("--out is required: ") + what);
      return global.out;
    };
    const auto out_dir = [&](const char* what) {
      const std::string dir = require_out(what);
      manifest_dir = dir;
      ensure_dir(dir);
      return dir;
    };
    const auto out_file = [&](const char* what) {
      const std::string file = require_out(what);
      const fs::path parent = fs::path(file).parent_path();
      if (!parent.empty()) {
        manifest_dir = parent.string();
        ensure_dir(manifest_dir);
      }
      return file;
    };

    if (*gen) {
      const std::string file = out_file("CSV path for the generated rows");
      if (kind == "blobs") {
        const int n = count > 0 ? count : std::stoi(config_value(config.get(), "data.n_train"));
        odnl_dataset* raw = nullptr;
        check(odnl_generate_blobs(config.get(), n, seed, &raw), "generate blobs");
        DatasetPtr data(raw);
        check(odnl_dataset_save(data.get(), config.get(), file.c_str()), "save dataset");
      } else {
        const int m = count > 0 ? count : std::stoi(config_value(config.get(), "aux.size"));
        odnl_pool* raw = nullptr;
        if (kind == "closed") {
          check(odnl_generate_closedset_pool(config.get(), m, seed, &raw), "generate closed-set pool");
        } else {
          check(odnl_generate_openset_pool(config.get(), kind.c_str(), m, seed, &raw), "generate open-set pool");
        }
        PoolPtr pool(raw);
        check(odnl_pool_save(pool.get(), config.get(), file.c_str()), "save pool");
      }
    } else if (*corrupt) {
      const std::string file = out_file("CSV path for the corrupted dataset");
      const std::string type = noise_type.empty() ? config_value(config.get(), "noise.type") : noise_type;
      const double rate = noise_rate >= 0.0 ? noise_rate : std::stod(config_value(config.get(), "noise.rate"));
      DatasetPtr data = load_dataset(paths.data);
      PoolPtr pool = paths.pool.empty() ? nullptr : load_pool(paths.pool);
      NetworkPtr model = paths.model.empty() ? nullptr : load_network(paths.model);
      odnl_dataset* raw = nullptr;
      check(odnl_corrupt(data.get(), type.c_str(), rate, seed, pool.get(), model.get(), &raw), "corrupt labels");
      DatasetPtr corrupted(raw);
      check(odnl_dataset_save(corrupted.get(), config.get(), file.c_str()), "save dataset");
    } else if (*train) {
      const std::string dir = out_dir("directory for metrics.csv and params.txt");
      DatasetPtr data = load_dataset(paths.data);
      PoolPtr pool = paths.pool.empty() ? nullptr : load_pool(paths.pool);
      DatasetPtr test = paths.test.empty() ? nullptr : load_dataset(paths.test);
      odnl_network* raw = nullptr;
      const std::string metrics = join_path(dir, "metrics.csv");
      check(odnl_train(config.get(), data.get(), pool.get(), test.get(), seed, metrics.c_str(), &raw), "train");
      NetworkPtr net(raw);
      check(odnl_network_save(net.get(), join_path(dir, "params.txt").c_str()), "save network");
      if (test) {
        double acc = 0.0;
        check(odnl_accuracy(net.get(), test.get(), &acc), "evaluate");
        std::printf("test_acc=%.6f\n", acc);
      }
    } else if (*tune) {
      const std::string dir = out_dir("directory for eta_tuning.csv");
      DatasetPtr data = load_dataset(paths.data);
      PoolPtr pool = load_pool(paths.pool);
      double best = 0.0;
      check(odnl_tune_eta(config.get(), data.get(), pool.get(), seed, join_path(dir, "eta_tuning.csv").c_str(),
                          &best),
            "tune eta");
      std::printf("best_eta=%g\n", best);
    } else if (*analyze) {
      const std::string file = out_file("path for the JSON report");
      NetworkPtr net = load_network(paths.model);
      DatasetPtr data = load_dataset(paths.data);
      PoolPtr pool = load_pool(paths.pool);
      int passed = 0;
      check(odnl_analyze_noise(net.get(), data.get(), pool.get(), samples, sigma, seed, file.c_str(), &passed),
            "analyze noise");
      std::printf("all_checks_passed=%s\n", passed ? "true" : "false");
    } else if (*landscape) {
      const std::string file = out_file("CSV path for the landscape grid");
      NetworkPtr net = load_network(paths.model);
      DatasetPtr data = load_dataset(paths.data);
      double sharpness = 0.0;
      check(odnl_landscape(net.get(), data.get(), resolution, radius, seed, config.get(), file.c_str(), &sharpness),
            "landscape");
      std::printf("sharpness=%.6f\n", sharpness);
    } else if (*eval) {
      const std::string file = out_file("CSV path for OOD metrics");
      NetworkPtr net = load_network(paths.model);
      DatasetPtr data = load_dataset(paths.data);
      std::vector<PoolPtr> pools;
      std::vector<const odnl_pool*> raw_pools;
      std::vector<std::string> names;
      std::vector<const char*> raw_names;
      for (const auto& p : paths.pools) {
        pools.push_back(load_pool(p));
        raw_pools.push_back(pools.back().get());
        names.push_back(fs::path(p).stem().string());
      }
      for (const auto& n : names) raw_names.push_back(n.c_str());
      double mean[3] = {0.0, 0.0, 0.0};
      check(odnl_eval_ood(net.get(), data.get(), raw_pools.data(), raw_names.data(), raw_pools.size(), config.get(),
                          file.c_str(), mean),
            "evaluate OOD");
      std::printf("fpr95=%.6f auroc=%.6f aupr=%.6f\n", mean[0], mean[1], mean[2]);
    } else if (*run || *sweep_size || *sweep_alpha) {
      if (!global.out.empty()) set_value(config.get(), "experiment.output_dir", global.out);
      manifest_dir = config_value(config.get(), "experiment.output_dir");
      ensure_dir(manifest_dir);
      if (*run) {
        check(odnl_run_experiment(config.get()), "run experiment");
      } else if (*sweep_size) {
        check(odnl_sweep_size(config.get(), sizes.data(), sizes.size()), "size sweep");
      } else {
        check(odnl_sweep_alpha(config.get(), alphas.data(), alphas.size()), "alpha sweep");
      }
      std::printf("results in %s\n", manifest_dir.c_str());
    } else if (*report) {
      const std::string file = global.out.empty() ? join_path(paths.dir, "report.csv") : global.out;
      manifest_dir = paths.dir;
      check(odnl_report(paths.dir.c_str(), file.c_str()), "report");
      std::ifstream in(file);
      std::cout << in.rdbuf();
    }
  } catch (const std::exception& e) {
    const odnl_status status =
        dynamic_cast<const CliError*>(&e) ? static_cast<const CliError&>(e).status() : ODNL_ERR_INTERNAL;
    std::cerr << "odnl: " << e.what() << '\n';
    const fs::path manifest = fs::path(manifest_dir) / "error_manifest.txt";
    // run/sweep failures already left a manifest with the failing replicate.
    if (!fs::exists(manifest) || !(*run || *sweep_size || *sweep_alpha)) {
      std::ofstream out(manifest);
      out << "command=" << app.get_subcommands().front()->get_name() << "\nstatus=" << odnl_status_name(status)
          << "\nerror=" << e.what() << '\n';
    }
    return static_cast<int>(status == ODNL_OK ? ODNL_ERR_INTERNAL : status);
  }
  return 0;
}

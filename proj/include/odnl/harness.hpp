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

#pragma once

// Synthetic data generators, experiment configuration and orchestration.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "odnl/analyzer.hpp"
#include "odnl/data.hpp"
#include "odnl/oodeval.hpp"
#include "odnl/training.hpp"

namespace odnl {

struct BlobSpec {
  int k = 4;
  int d = 2;
  double separation = 6.0;
  double sigma = 1.0;
};

/// k x d matrix of class means: a circle of radius `separation` for d = 2 (or
/// d < k), scaled centred simplex vertices when k <= d, a line for d = 1.
Matrix class_means(const BlobSpec& spec);

/// Balanced isotropic Gaussian mixture; row i has class i mod k.
LabeledDataset generate_blobs(int k, int n, int d, double separation, double sigma,
                              std::uint64_t seed);
inline LabeledDataset generate_blobs(const BlobSpec& spec, int n, std::uint64_t seed) {
  return generate_blobs(spec.k, n, spec.d, spec.separation, spec.sigma, seed);
}

enum class OpenSetKind { Ring, Uniform, Gaussian };
OpenSetKind parse_open_set_kind(const std::string& name);
std::string to_string(OpenSetKind kind);

/// Radii of the shell used by OpenSetKind::Ring.
std::pair<double, double> ring_bounds(const BlobSpec& spec);
/// Half-width of the box used by OpenSetKind::Uniform.
double uniform_box_half_width(const BlobSpec& spec);
/// Minimum distance (in units of sigma) from every class mean.
inline constexpr double kOpenSetMinDistance = 4.0;

/// M points at distance >= 4 sigma from every class mean (rejection sampling).
AuxiliaryPool generate_openset_pool(OpenSetKind kind, int m, std::uint64_t seed,
                                    const BlobSpec& spec);
/// Fresh unlabelled draws from the training mixture.
AuxiliaryPool generate_closedset_pool(int m, const BlobSpec& spec, std::uint64_t seed);

/// Stable 64-bit seed derived from a base seed and a purpose tag.
std::uint64_t derive_seed(std::uint64_t base, const std::string& purpose);

struct NoiseSpec {
  std::string type = "symmetric";  // none | symmetric | circular | instance | open
  double rate = 0.4;
};

struct AuxSpec {
  std::string kind = "open_ring";  // none | open_ring | open_uniform | closed | mix
  int size = 10000;
  double alpha = 0.0;              // mix only
};

struct ExperimentConfig {
  BlobSpec blobs;
  int n_train = 2000;
  int n_test = 1000;
  NoiseSpec noise;
  AuxSpec aux;
  TrainConfig train;
  bool tune_eta = false;
  std::vector<double> eta_candidates{0.1, 0.5, 1.0, 2.5, 5.0};
  double validation_fraction = 0.1;
  std::vector<std::string> ood_pools;  // open-set kinds evaluated as OOD test pools
  int ood_size = 1000;
  bool landscape = false;
  int landscape_resolution = 21;
  double landscape_radius = 1.0;
  std::uint64_t seed = 0;
  int replicates = 5;
  std::string output_dir = "results";

  /// Sets a flattened `section.key` value; throws ConfigError on unknown keys.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();
  /// Every resolved setting as "# section.key=value".
  std::vector<std::string> header_lines() const;
  std::vector<std::uint64_t> replicate_seeds() const;
  void validate() const;
};

/// Parses `key = value` lines grouped under `[section]` headers. '#' and ';'
/// start comments.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

/// Everything one replicate produces.
struct ReplicateResult {
  std::uint64_t seed = 0;
  double eta_used = 0.0;
  std::vector<EpochMetrics> metrics;
  std::vector<PoolMetrics> ood;
  std::optional<double> sharpness;
  std::optional<LandscapeSlice> landscape;
  NetworkParams params;
};

/// Scalar summary of one replicate.
struct ReplicateSummary {
  std::uint64_t seed = 0;
  double eta = 0.0;
  double final_test_acc = 0.0;     // mean test accuracy over the last 5 epochs
  double best_test_acc = 0.0;
  double best_minus_final = 0.0;
  double final_train_loss = 0.0;
  double final_clean_loss = 0.0;
  double final_noisy_loss = 0.0;
  double final_aux_loss = 0.0;
  double fpr95 = 0.0;
  double auroc = 0.0;
  double aupr = 0.0;
  double sharpness = 0.0;
};

ReplicateSummary summarize_replicate(std::uint64_t seed, double eta,
                                     const std::vector<EpochMetrics>& metrics,
                                     const std::vector<PoolMetrics>& ood,
                                     std::optional<double> sharpness);

struct MetricSummary {
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
  std::size_t n = 0;
};

std::vector<MetricSummary> summarize(const std::vector<ReplicateSummary>& reps);
std::vector<std::string> summary_metric_names();

/// Data, corruption and auxiliary pool exactly as run_experiment builds them.
struct ReplicateData {
  LabeledDataset train;
  LabeledDataset test;
  std::optional<AuxiliaryPool> pool;
};
ReplicateData build_replicate_data(const ExperimentConfig& config, std::uint64_t seed);

/// Trains and evaluates one replicate in memory (no files).
ReplicateResult run_replicate(const ExperimentConfig& config, std::uint64_t seed);

struct ExperimentResult {
  std::filesystem::path directory;
  std::vector<ReplicateSummary> replicates;
  std::vector<MetricSummary> summary;
};

/// Runs every replicate and writes rep_<seed>/{metrics,ood,landscape}.csv,
/// rep_<seed>/params.txt, replicates.csv and summary.csv under
/// config.output_dir. On failure writes error_manifest.txt and rethrows.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Re-reads the per-replicate files of a result directory and recomputes the
/// summary.
ExperimentResult recompute_summary(const std::filesystem::path& directory);

void write_summary_csv(std::ostream& out, const std::vector<MetricSummary>& summary,
                       const std::vector<std::string>& comments = {});

struct SweepRow {
  std::string label;  // e.g. "1000,open" or "0.5"
  ExperimentResult result;
};

/// Fixed-label auxiliary runs per (size, {open, closed}) plus a no-auxiliary
/// baseline; summary.csv has one row per run.
std::vector<SweepRow> run_size_sweep(const ExperimentConfig& base, const std::vector<int>& sizes);

/// One ODNL run per alpha using mixed pools (1 - alpha) open + alpha closed.
std::vector<SweepRow> run_alpha_sweep(const ExperimentConfig& base, const std::vector<double>& alphas);

/// Trains a single-layer softmax probe on clean labels; returns test accuracy.
double linear_probe_accuracy(const LabeledDataset& train, const LabeledDataset& test,
                             std::uint64_t seed);

}  // namespace odnl

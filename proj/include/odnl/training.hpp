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

// Noisy-label training loop with pluggable objectives. The auxiliary term
// eta * L2 (cross-entropy of open-set samples against labels drawn uniformly
// from the label set) can be added to any of the base objectives.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "odnl/data.hpp"
#include "odnl/netcore.hpp"
#include "odnl/rng.hpp"

namespace odnl {

enum class Regularizer { Standard, Odnl, Sln, Oe, ForwardCorrection, Coteaching };
enum class AuxLabelMode { DynamicPerIteration, DynamicPerEpoch, Fixed };

std::string to_string(Regularizer r);
std::string to_string(AuxLabelMode m);
Regularizer parse_regularizer(const std::string& name);
AuxLabelMode parse_aux_label_mode(const std::string& name);

struct LrSchedule {
  double initial = 0.1;
  std::vector<int> decay_epochs{80, 140};
  double factor = 0.1;

  /// Learning rate in effect during `epoch` (0-based).
  double rate_at(int epoch) const;
};

struct TrainConfig {
  double eta = 1.0;
  double lambda_oe = 0.5;
  double sigma_sln = 1.0;
  double label_smoothing = 0.0;
  int epochs = 200;
  int train_batch = 128;
  int aux_batch = 128;
  LrSchedule lr;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  Regularizer regularizer = Regularizer::Standard;
  bool compose_odnl = false;
  AuxLabelMode aux_label_mode = AuxLabelMode::DynamicPerIteration;
  double coteach_forget_rate = 0.4;
  double coteach_warmup = 10.0;
  std::vector<int> hidden_widths{32, 32};
  std::uint64_t seed = 0;

  /// Whether the ODNL term eta * L2 contributes to the objective.
  bool odnl_active() const;
  /// Whether iterations draw auxiliary batches at all.
  bool uses_pool() const;
  void validate() const;
};

struct LossAndGrad {
  double loss = 0.0;
  GradientVector grad;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double clean_loss = 0.0;  // NaN when the subset is empty
  double noisy_loss = 0.0;  // NaN when the subset is empty
  double aux_loss = 0.0;    // NaN when no auxiliary term is trained
  double val_acc = 0.0;     // NaN without a validation set
  double test_acc = 0.0;    // NaN without a test set
};

/// Index lists and auxiliary labels consumed by one iteration.
struct BatchPlan {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> aux_indices;
  std::vector<int> aux_labels;
};

struct TrainResult {
  NetworkParams params;
  std::vector<EpochMetrics> metrics;
};

/// `count` independent uniform labels in [0, k).
std::vector<int> sample_dynamic_labels(std::size_t count, int k, Rng& rng);

/// Mean cross-entropy against integer labels, with optional label smoothing.
LossAndGrad batch_ce(const NetworkParams& params, const Matrix& inputs,
                     const std::vector<int>& labels, double label_smoothing = 0.0);
/// Mean cross-entropy against arbitrary soft targets (rows of `targets`).
LossAndGrad batch_soft_ce(const NetworkParams& params, const Matrix& inputs, const Matrix& targets);
/// Per-sample cross-entropy against integer labels.
std::vector<double> per_sample_ce(const NetworkParams& params, const Matrix& inputs,
                                  const std::vector<int>& labels);

/// L1 + eta * L2: mean CE on the training batch plus eta times mean CE of the
/// auxiliary batch against `aux_labels`.
LossAndGrad odnl_loss_and_grad(const NetworkParams& params, const Matrix& train_x,
                               const std::vector<int>& train_y, const Matrix& aux_x,
                               const std::vector<int>& aux_labels, double eta);

/// e^y + sigma * z with z ~ N(0, I_k).
TargetDistribution sln_target(int y, int k, double sigma, Rng& rng);

/// lambda * mean over the batch of -(1/k) sum_j log f_j(x).
LossAndGrad oe_aux_loss(const NetworkParams& params, const Matrix& aux_x, double lambda_oe);

/// -log (T^T p)[noisy_label] for one sample.
LossAndGrad forward_correction_loss(const NetworkParams& params, const Vector& x, int noisy_label,
                                    const TransitionMatrix& transition);
/// Batch mean of forward_correction_loss.
LossAndGrad forward_correction_batch(const NetworkParams& params, const Matrix& inputs,
                                     const std::vector<int>& labels,
                                     const TransitionMatrix& transition);

struct CoteachSelection {
  std::vector<std::size_t> for_a;  // chosen by B's small losses
  std::vector<std::size_t> for_b;  // chosen by A's small losses
};

/// Each network trains on the ceil(keep_fraction * n) smallest-loss indices
/// ranked by its peer. Ties break toward the lower index.
CoteachSelection coteach_select(const std::vector<double>& losses_a,
                                const std::vector<double>& losses_b, double keep_fraction);

/// keep(t) = 1 - forget_rate * min(t / warmup, 1).
double coteach_keep_fraction(const TrainConfig& config, int epoch);

struct TrainInputs {
  const LabeledDataset* train = nullptr;
  const AuxiliaryPool* pool = nullptr;        // required when config.uses_pool()
  const LabeledDataset* test = nullptr;       // optional; accuracy against true labels
  const LabeledDataset* validation = nullptr; // optional; accuracy against observed labels
  const TransitionMatrix* transition = nullptr; // forward correction; exact matrix if null
};

/// Runs config.epochs * ceil(N / train_batch) SGD iterations. Deterministic in
/// config.seed. For co-teaching the first peer's parameters are returned.
TrainResult train(const TrainConfig& config, const TrainInputs& inputs);

/// Accuracy of argmax predictions against the given labels (skipping -1).
double accuracy(const NetworkParams& params, const Matrix& inputs, const std::vector<int>& labels);

/// Mean validation accuracy over the last `window` epochs (fewer if short).
double final_window_mean(const std::vector<EpochMetrics>& metrics, double EpochMetrics::*field,
                         std::size_t window = 5);

struct EtaCandidateReport {
  double eta = 0.0;
  double final_val_acc = 0.0;  // mean over the last 5 epochs
  double best_val_acc = 0.0;
  double last_val_acc = 0.0;
  double late_drop = 0.0;      // best epoch minus final epoch
};

struct EtaTuning {
  double best_eta = 0.0;
  std::vector<EtaCandidateReport> candidates;
};

/// Holds out `validation_fraction` of the noisy training data, trains once per
/// candidate and returns the candidate with the highest final-5-epoch mean
/// validation accuracy (ties go to the smaller eta). A candidate eta > 0 turns
/// on the ODNL term: regularizer standard becomes odnl, any other regularizer
/// is composed with it.
EtaTuning tune_eta(const TrainConfig& config, const LabeledDataset& data, const AuxiliaryPool* pool,
                   double validation_fraction, const std::vector<double>& candidates);

/// Config with the ODNL term set to `eta` as tune_eta applies it.
TrainConfig with_odnl_eta(TrainConfig config, double eta);

/// Split used by tune_eta: {training rows, validation rows}.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(
    std::size_t n, double validation_fraction, std::uint64_t seed);

void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& metrics,
                       const std::vector<std::string>& comments = {});
std::vector<EpochMetrics> read_metrics_csv(std::istream& in);

/// Flat text vector with a shape header line "layers d h1 ... k".
void write_params(std::ostream& out, const NetworkParams& params);
NetworkParams read_params(std::istream& in);

}  // namespace odnl

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

#include "odnl/noisegen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "odnl/error.hpp"

namespace odnl {
namespace {

void require_rate(double rate, const char* op) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError(std::string(op) + ": rate must lie in [0,1)");
  }
}

// First `count` entries of a uniform random permutation of [0, n).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

std::size_t rounded_count(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
}

}  // namespace

LabeledDataset corrupt_symmetric(const LabeledDataset& data, double rate, Rng rng) {
  require_rate(rate, "corrupt_symmetric");
  const int k = data.num_classes;
  if (k < 2) throw ConfigError("corrupt_symmetric needs at least two classes");
  LabeledDataset out = data;
  for (auto& label : out.observed_labels) {
    if (!rng.bernoulli(rate)) continue;
    const int other = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k - 1)));
    label = other >= label ? other + 1 : other;
  }
  return out;
}

LabeledDataset corrupt_circular(const LabeledDataset& data, double rate, Rng rng) {
  require_rate(rate, "corrupt_circular");
  LabeledDataset out = data;
  for (auto& label : out.observed_labels) {
    if (rng.bernoulli(rate)) label = (label + 1) % data.num_classes;
  }
  return out;
}

std::vector<double> confidence_margins(const NetworkParams& model, const LabeledDataset& data) {
  if (model.input_dim() != data.dim() || model.output_dim() != data.num_classes) {
    throw ConfigError("model shape does not match the dataset");
  }
  const Matrix probs = predict(model, data.features);
  std::vector<double> margins(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int y = data.open_set_mask[i] ? data.observed_labels[i] : data.true_labels[i];
    double best_other = 0.0;
    for (int j = 0; j < data.num_classes; ++j) {
      if (j != y) best_other = std::max(best_other, probs(static_cast<Eigen::Index>(i), j));
    }
    margins[i] = probs(static_cast<Eigen::Index>(i), y) - best_other;
  }
  return margins;
}

LabeledDataset corrupt_instance_dependent(const LabeledDataset& data, double rate,
                                          const NetworkParams& weak_model) {
  require_rate(rate, "corrupt_instance_dependent");
  if (data.num_classes < 2) throw ConfigError("corrupt_instance_dependent needs two classes");
  const auto margins = confidence_margins(weak_model, data);
  const Matrix probs = predict(weak_model, data.features);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return margins[a] < margins[b]; });

  LabeledDataset out = data;
  const std::size_t count = rounded_count(rate, data.size());
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t i = order[r];
    const int y = data.open_set_mask[i] ? data.observed_labels[i] : data.true_labels[i];
    int best = -1;
    for (int j = 0; j < data.num_classes; ++j) {
      if (j == y) continue;
      if (best < 0 || probs(static_cast<Eigen::Index>(i), j) > probs(static_cast<Eigen::Index>(i), best)) {
        best = j;
      }
    }
    out.observed_labels[i] = best;
  }
  return out;
}

LabeledDataset inject_open_set(const LabeledDataset& data, double rate, const AuxiliaryPool& pool,
                               Rng rng) {
  require_rate(rate, "inject_open_set");
  if (pool.dim() != data.dim() && pool.size() > 0) {
    throw ConfigError("inject_open_set: pool dimension does not match dataset");
  }
  const std::size_t count = rounded_count(rate, data.size());
  if (pool.size() < count) {
    throw ConfigError("inject_open_set: pool has " + std::to_string(pool.size()) +
                      " instances, need " + std::to_string(count));
  }
  Rng row_rng = rng.split("rows");
  Rng pool_rng = rng.split("pool");
  const auto rows = sample_without_replacement(data.size(), count, row_rng);
  const auto sources = sample_without_replacement(pool.size(), count, pool_rng);
  LabeledDataset out = data;
  for (std::size_t r = 0; r < count; ++r) {
    const auto row = static_cast<Eigen::Index>(rows[r]);
    out.features.row(row) = pool.features.row(static_cast<Eigen::Index>(sources[r]));
    out.open_set_mask[rows[r]] = true;
    out.true_labels[rows[r]] = LabeledDataset::kOpenSetLabel;
  }
  return out;
}

AuxiliaryPool mix_auxiliary(const AuxiliaryPool& open_pool, const AuxiliaryPool& closed_pool,
                            double alpha, Rng rng) {
  if (open_pool.dim() != closed_pool.dim()) {
    throw ConfigError("mix_auxiliary: pool dimensions differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("mix_auxiliary: alpha must lie in [0,1]");
  if (closed_pool.size() == 0) throw ConfigError("mix_auxiliary: closed pool is empty");
  const std::size_t m = open_pool.size();
  // Without replacement when the closed pool is large enough.
  std::vector<std::size_t> partner;
  if (closed_pool.size() >= m) {
    partner = sample_without_replacement(closed_pool.size(), m, rng);
  } else {
    partner.resize(m);
    for (auto& p : partner) p = static_cast<std::size_t>(rng.uniform_index(closed_pool.size()));
  }
  AuxiliaryPool out;
  out.mix_alpha = alpha;
  out.features.resize(open_pool.features.rows(), open_pool.features.cols());
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.features.row(r) = (1.0 - alpha) * open_pool.features.row(r) +
                          alpha * closed_pool.features.row(static_cast<Eigen::Index>(partner[i]));
  }
  return out;
}

AuxiliaryPool assign_fixed_labels(const AuxiliaryPool& pool, int k, Rng rng) {
  if (pool.fixed_labels) throw ConfigError("assign_fixed_labels: pool already carries labels");
  if (k < 1) throw ConfigError("assign_fixed_labels: k must be positive");
  AuxiliaryPool out = pool;
  out.fixed_labels.emplace(pool.size());
  for (auto& label : *out.fixed_labels) {
    label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
  }
  return out;
}

TransitionMatrix empirical_transition_matrix(const LabeledDataset& data) {
  const int k = data.num_classes;
  Matrix counts = Matrix::Zero(k, k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.open_set_mask[i]) {
      throw InputError("empirical_transition_matrix: dataset contains open-set rows");
    }
    counts(data.true_labels[i], data.observed_labels[i]) += 1.0;
  }
  TransitionMatrix t{Matrix(k, k)};
  for (int i = 0; i < k; ++i) {
    const double total = counts.row(i).sum();
    if (total == 0.0) {
      t.values.row(i).setConstant(1.0 / k);
    } else {
      t.values.row(i) = counts.row(i) / total;
    }
  }
  return t;
}

}  // namespace odnl

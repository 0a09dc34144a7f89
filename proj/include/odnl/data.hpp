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

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "odnl/netcore.hpp"

namespace odnl {

/// Training corpus with observed (possibly corrupted) labels and the hidden
/// ground truth. Rows flagged in `open_set_mask` hold out-of-distribution
/// features; their true label is the sentinel -1.
struct LabeledDataset {
  static constexpr int kOpenSetLabel = -1;

  Matrix features;  // N x d
  std::vector<int> observed_labels;
  std::vector<int> true_labels;
  std::vector<bool> open_set_mask;
  int num_classes = 0;

  std::size_t size() const { return observed_labels.size(); }
  int dim() const { return static_cast<int>(features.cols()); }
  /// True when the observed label matches the true one on an in-distribution row.
  bool is_clean(std::size_t i) const {
    return !open_set_mask[i] && observed_labels[i] == true_labels[i];
  }

  LabeledDataset subset(const std::vector<std::size_t>& rows) const;
  /// Throws InputError if an invariant is violated.
  void validate() const;
};

/// Unlabelled auxiliary instances. `fixed_labels` is present only when the
/// pool carries one permanent random label per instance.
struct AuxiliaryPool {
  Matrix features;  // M x d
  std::optional<std::vector<int>> fixed_labels;
  double mix_alpha = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  AuxiliaryPool subset(const std::vector<std::size_t>& rows) const;
};

/// Row-stochastic k x k matrix: entry (i, j) is P(observed = j | true = i).
struct TransitionMatrix {
  Matrix values;

  static TransitionMatrix identity(int k);
  int num_classes() const { return static_cast<int>(values.rows()); }
  /// Throws ConfigError unless square, non-negative and rows sum to 1.
  void validate() const;
};

// CSV persistence. Lines starting with '#' are comments; `comments` lines are
// written verbatim (each should start with '#').

void write_dataset_csv(std::ostream& out, const LabeledDataset& data,
                       const std::vector<std::string>& comments = {});
void save_dataset_csv(const std::string& path, const LabeledDataset& data,
                      const std::vector<std::string>& comments = {});
/// `num_classes` <= 0 infers k as 1 + the largest label seen.
LabeledDataset read_dataset_csv(std::istream& in, int num_classes = 0);
LabeledDataset load_dataset_csv(const std::string& path, int num_classes = 0);

void write_pool_csv(std::ostream& out, const AuxiliaryPool& pool,
                    const std::vector<std::string>& comments = {});
void save_pool_csv(const std::string& path, const AuxiliaryPool& pool,
                   const std::vector<std::string>& comments = {});
AuxiliaryPool read_pool_csv(std::istream& in);
AuxiliaryPool load_pool_csv(const std::string& path);

/// Shortest decimal form that round-trips a double exactly.
std::string format_double(double value);

}  // namespace odnl

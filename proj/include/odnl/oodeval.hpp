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

// Out-of-distribution detection metrics over confidence scores. Convention:
// a higher score means "more in-distribution".

#include <string>
#include <vector>

#include "odnl/netcore.hpp"

namespace odnl {

struct ScoreSet {
  std::vector<double> in_scores;
  std::vector<double> out_scores;
  void validate() const;
};

struct OodMetrics {
  double fpr95 = 0.0;
  double auroc = 0.0;
  double aupr = 0.0;
};

/// Maximum softmax probability.
double msp_score(const Vector& probs);

/// Threshold t is the largest value with fraction(in >= t) >= tpr_target;
/// returns fraction(out >= t).
double fpr_at_tpr(const ScoreSet& scores, double tpr_target = 0.95);

/// (#pairs in > out + 0.5 #ties) / (|in| |out|).
double auroc(const ScoreSet& scores);

/// Average precision with OOD as the positive class, ranked by ascending
/// score; equal scores enter the curve as one block.
double aupr(const ScoreSet& scores);

OodMetrics ood_metrics(const ScoreSet& scores);

/// MSP of every row of `inputs` under `params`.
std::vector<double> msp_scores(const NetworkParams& params, const Matrix& inputs);

OodMetrics evaluate_detector(const NetworkParams& params, const Matrix& in_features,
                             const Matrix& out_features);

struct PoolMetrics {
  std::string pool;
  OodMetrics metrics;
};

/// One `pool,fpr95,auroc,aupr` row per pool plus a `mean` row.
void write_ood_csv(std::ostream& out, const std::vector<PoolMetrics>& rows,
                   const std::vector<std::string>& comments = {});
OodMetrics average_metrics(const std::vector<PoolMetrics>& rows);

}  // namespace odnl

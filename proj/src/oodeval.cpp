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

#include "odnl/oodeval.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "odnl/data.hpp"
#include "odnl/error.hpp"

namespace odnl {

void ScoreSet::validate() const {
  if (in_scores.empty() || out_scores.empty()) throw InputError("score sets must be non-empty");
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(in_scores.begin(), in_scores.end(), finite) ||
      !std::all_of(out_scores.begin(), out_scores.end(), finite)) {
    throw InputError("scores must be finite");
  }
}

double msp_score(const Vector& probs) {
  if (probs.size() == 0) throw InputError("msp_score of an empty vector");
  return probs.maxCoeff();
}

double fpr_at_tpr(const ScoreSet& scores, double tpr_target) {
  scores.validate();
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) throw ConfigError("tpr_target must lie in (0,1]");
  std::vector<double> in = scores.in_scores;
  std::sort(in.begin(), in.end(), std::greater<>());
  const std::size_t n = in.size();
  // Smallest count c with c/n >= target; the threshold is the c-th largest score.
  std::size_t c = 1;
  while (c < n && static_cast<double>(c) / static_cast<double>(n) < tpr_target) ++c;
  const double threshold = in[c - 1];
  const auto above = std::count_if(scores.out_scores.begin(), scores.out_scores.end(),
                                   [&](double s) { return s >= threshold; });
  return static_cast<double>(above) / static_cast<double>(scores.out_scores.size());
}

double auroc(const ScoreSet& scores) {
  scores.validate();
  std::vector<double> out = scores.out_scores;
  std::sort(out.begin(), out.end());
  // Twice the Mann-Whitney statistic, kept integral.
  unsigned long long twice = 0;
  for (double s : scores.in_scores) {
    const auto below = std::lower_bound(out.begin(), out.end(), s) - out.begin();
    const auto upto = std::upper_bound(out.begin(), out.end(), s) - out.begin();
    twice += 2ULL * static_cast<unsigned long long>(below) + static_cast<unsigned long long>(upto - below);
  }
  return static_cast<double>(twice) /
         (2.0 * static_cast<double>(scores.in_scores.size()) * static_cast<double>(out.size()));
}

double aupr(const ScoreSet& scores) {
  scores.validate();
  struct Entry {
    double score;
    bool positive;
  };
  std::vector<Entry> all;
  for (double s : scores.in_scores) all.push_back({s, false});
  for (double s : scores.out_scores) all.push_back({s, true});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });
  const double n_pos = static_cast<double>(scores.out_scores.size());
  std::size_t tp = 0;
  std::size_t fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t block_tp = 0;
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) {
      if (all[j].positive) {
        ++block_tp;
      } else {
        ++fp;
      }
      ++j;
    }
    tp += block_tp;
    if (block_tp > 0) {
      const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      area += precision * (static_cast<double>(block_tp) / n_pos);
    }
    i = j;
  }
  return area;
}

OodMetrics ood_metrics(const ScoreSet& scores) {
  return {fpr_at_tpr(scores, 0.95), auroc(scores), aupr(scores)};
}

std::vector<double> msp_scores(const NetworkParams& params, const Matrix& inputs) {
  const Matrix p = predict(params, inputs);
  std::vector<double> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = p.row(i).maxCoeff();
  return out;
}

OodMetrics evaluate_detector(const NetworkParams& params, const Matrix& in_features,
                             const Matrix& out_features) {
  if (in_features.cols() != params.input_dim() || out_features.cols() != params.input_dim()) {
    throw InputError("evaluate_detector: feature dimension does not match the network input");
  }
  return ood_metrics({msp_scores(params, in_features), msp_scores(params, out_features)});
}

OodMetrics average_metrics(const std::vector<PoolMetrics>& rows) {
  OodMetrics mean;
  if (rows.empty()) return mean;
  for (const auto& r : rows) {
    mean.fpr95 += r.metrics.fpr95;
    mean.auroc += r.metrics.auroc;
    mean.aupr += r.metrics.aupr;
  }
  const double n = static_cast<double>(rows.size());
  return {mean.fpr95 / n, mean.auroc / n, mean.aupr / n};
}

void write_ood_csv(std::ostream& out, const std::vector<PoolMetrics>& rows,
                   const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << c << '\n';
  out << "pool,fpr95,auroc,aupr\n";
  for (const auto& r : rows) {
    out << r.pool << ',' << format_double(r.metrics.fpr95) << ',' << format_double(r.metrics.auroc)
        << ',' << format_double(r.metrics.aupr) << '\n';
  }
  const OodMetrics mean = average_metrics(rows);
  out << "mean," << format_double(mean.fpr95) << ',' << format_double(mean.auroc) << ','
      << format_double(mean.aupr) << '\n';
}

}  // namespace odnl

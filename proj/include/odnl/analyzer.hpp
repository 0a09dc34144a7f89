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

// SGD-noise analysis of auxiliary-label regularizers and loss-landscape
// slices.
//
// Notation: f~ is the softmax output on an auxiliary input. Training with a
// uniformly drawn label j on that input adds z = -grad f~_j / f~_j to the
// clean gradient; its expectation over j equals the gradient bias of the
// uniform-target (outlier exposure) term. Stochastic label noise adds
// z = -sigma * sum_j z_j grad log f_j with covariance sigma^2 * M,
// M = G^T G where row j of G is grad f_j / f_j.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "odnl/data.hpp"
#include "odnl/netcore.hpp"
#include "odnl/rng.hpp"

namespace odnl {

enum class NoiseSource { Odnl, Sln, OeBias };

struct NoiseSample {
  GradientVector z;
  NoiseSource source = NoiseSource::Odnl;
  int class_index = -1;  // j for ODNL samples
  /// max |a - b| / max(|a|, |b|) between the two ODNL computation paths.
  double path_discrepancy = 0.0;
  /// f~_j fell below the probability floor; z was computed with the clamp.
  bool clamped = false;
};

/// Relative agreement demanded of the two ODNL computation paths.
inline constexpr double kDualPathTolerance = 1e-9;

/// ODNL noise for class j, computed (a) by backward with target e^j and
/// (b) as -(row j of the output Jacobian) / f~_j. Throws NumericError if the
/// paths disagree by more than kDualPathTolerance (unclamped case).
NoiseSample odnl_noise_vector(const NetworkParams& params, const Vector& aux_x, int j);

/// Exact mean of odnl_noise_vector over j = 0..k-1.
GradientVector odnl_noise_expectation(const NetworkParams& params, const Vector& aux_x);

/// Gradient of -(1/k) sum_j log f~_j (uniform soft target).
GradientVector oe_bias_vector(const NetworkParams& params, const Vector& aux_x);

/// grad l(f, e^y + sigma z) - grad l(f, e^y) for a fresh z ~ N(0, I_k).
NoiseSample sln_noise_sample(const NetworkParams& params, const Vector& x, int y, double sigma,
                             Rng& rng);
/// Same with the label perturbation supplied explicitly.
NoiseSample sln_noise_from(const NetworkParams& params, const Vector& x, int y, double sigma,
                           const Vector& label_noise);

/// p x p matrix M with M_il = sum_j (d_i f_j / f_j)(d_l f_j / f_j).
Matrix sln_noise_metric(const NetworkParams& params, const Vector& x);

struct NoiseStats {
  std::size_t count = 0;
  GradientVector mean;
  /// Full covariance when p <= max_full_dim, otherwise a p x 1 diagonal.
  Matrix covariance;
  bool diagonal_only = false;
  /// Standard error of each mean coordinate.
  GradientVector standard_error;
};

/// Streaming accumulator for noise samples (Welford updates).
class NoiseAccumulator {
 public:
  explicit NoiseAccumulator(std::size_t dim, std::size_t max_full_dim = 200);
  void add(const GradientVector& z);
  NoiseStats stats() const;

 private:
  std::size_t dim_;
  bool full_;
  std::size_t count_ = 0;
  GradientVector mean_;
  Matrix m2_;
};

struct LandscapeDirections {
  GradientVector first;
  GradientVector second;
};

/// Two Gaussian directions whose per-layer blocks are rescaled to the norm of
/// that layer's parameters (filter normalization).
LandscapeDirections landscape_directions(const NetworkParams& params, Rng rng);

struct LandscapeSlice {
  LandscapeDirections directions;
  int resolution = 0;
  double radius = 0.0;
  std::vector<double> coords;  // grid coordinates along each axis
  Matrix loss;                 // resolution x resolution, loss(i, j) at (coords[i], coords[j])
  double center_loss = 0.0;
  /// max grid loss - center loss
  double sharpness = 0.0;
};

/// Mean CE of `data` (observed labels) on the grid theta + a*d1 + b*d2 for
/// a, b in [-radius, radius]. `resolution` must be odd.
LandscapeSlice landscape_slice(const NetworkParams& params, const LabeledDataset& data,
                               int resolution, double radius, Rng rng);
LandscapeSlice landscape_slice_along(const NetworkParams& params, const LabeledDataset& data,
                                     const LandscapeDirections& directions, int resolution,
                                     double radius);

void write_landscape_csv(std::ostream& out, const LandscapeSlice& slice,
                         const std::vector<std::string>& comments = {});

struct NoiseCheck {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

struct NoiseReport {
  std::size_t samples = 0;
  double mean_norm = 0.0;
  std::vector<NoiseCheck> checks;
  bool all_passed() const;
  /// JSON text: {"samples":..,"mean_norm":..,"checks":[{...}]}.
  std::string to_json() const;
};

struct NoiseAnalysisOptions {
  std::size_t dual_path_trials = 100;
  std::size_t odnl_mc_samples = 100000;
  std::size_t sln_mean_samples = 10000;
  std::size_t sln_cov_samples = 100000;
  double sigma = 1.0;
};

/// Runs every noise-identity check on `params` using inputs drawn from `data`
/// (training rows) and `aux` (open-set rows) and returns the report.
NoiseReport analyze_noise(const NetworkParams& params, const Matrix& train_inputs,
                          const std::vector<int>& train_labels, const Matrix& aux_inputs,
                          const NoiseAnalysisOptions& options, Rng rng);

}  // namespace odnl

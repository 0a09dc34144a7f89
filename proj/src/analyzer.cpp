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

#include "odnl/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

#include "odnl/error.hpp"

namespace odnl {
namespace {

double relative_discrepancy(const GradientVector& a, const GradientVector& b) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  if (scale == 0.0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

void require_class(const NetworkParams& params, int j) {
  if (j < 0 || j >= params.output_dim()) {
    throw InputError("class index " + std::to_string(j) + " outside [0, k)");
  }
}

}  // namespace

NoiseSample odnl_noise_vector(const NetworkParams& params, const Vector& aux_x, int j) {
  require_class(params, j);
  const ForwardTrace trace = forward(params, aux_x);
  const int k = params.output_dim();
  const double fj = trace.probs()[j];

  NoiseSample sample;
  sample.source = NoiseSource::Odnl;
  sample.class_index = j;
  sample.z = backward(params, trace, TargetDistribution::one_hot(j, k));

  const Matrix jac = output_jacobian(params, trace);
  sample.clamped = fj < kProbFloor;
  const GradientVector via_jacobian = -jac.row(j).transpose() / std::max(fj, kProbFloor);
  sample.path_discrepancy = relative_discrepancy(sample.z, via_jacobian);
  if (!sample.clamped && sample.path_discrepancy > kDualPathTolerance) {
    throw NumericError("ODNL noise paths disagree: relative discrepancy " +
                       std::to_string(sample.path_discrepancy));
  }
  return sample;
}

GradientVector odnl_noise_expectation(const NetworkParams& params, const Vector& aux_x) {
  const int k = params.output_dim();
  GradientVector sum = GradientVector::Zero(static_cast<Eigen::Index>(params.parameter_count()));
  for (int j = 0; j < k; ++j) sum += odnl_noise_vector(params, aux_x, j).z;
  return sum / static_cast<double>(k);
}

GradientVector oe_bias_vector(const NetworkParams& params, const Vector& aux_x) {
  const ForwardTrace trace = forward(params, aux_x);
  return backward(params, trace, TargetDistribution::uniform(params.output_dim()));
}

NoiseSample sln_noise_from(const NetworkParams& params, const Vector& x, int y, double sigma,
                           const Vector& label_noise) {
  const int k = params.output_dim();
  if (label_noise.size() != k) throw InputError("label noise must have length k");
  const ForwardTrace trace = forward(params, x);
  const TargetDistribution clean = TargetDistribution::one_hot(y, k);
  TargetDistribution noisy = clean;
  noisy.values += sigma * label_noise;
  NoiseSample sample;
  sample.source = NoiseSource::Sln;
  sample.class_index = y;
  sample.z = backward(params, trace, noisy) - backward(params, trace, clean);
  return sample;
}

NoiseSample sln_noise_sample(const NetworkParams& params, const Vector& x, int y, double sigma,
                             Rng& rng) {
  if (!(sigma > 0.0)) throw ConfigError("sln_noise_sample: sigma must be positive");
  Vector z(params.output_dim());
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
  return sln_noise_from(params, x, y, sigma, z);
}

Matrix sln_noise_metric(const NetworkParams& params, const Vector& x) {
  const ForwardTrace trace = forward(params, x);
  Matrix g = output_jacobian(params, trace);
  for (Eigen::Index j = 0; j < g.rows(); ++j) g.row(j) /= std::max(trace.probs()[j], kProbFloor);
  return g.transpose() * g;
}

NoiseAccumulator::NoiseAccumulator(std::size_t dim, std::size_t max_full_dim)
    : dim_(dim),
      full_(dim <= max_full_dim),
      mean_(GradientVector::Zero(static_cast<Eigen::Index>(dim))),
      m2_(full_ ? Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))
                : Matrix::Zero(static_cast<Eigen::Index>(dim), 1)) {}

void NoiseAccumulator::add(const GradientVector& z) {
  if (static_cast<std::size_t>(z.size()) != dim_) throw InputError("noise sample has wrong length");
  ++count_;
  const GradientVector delta = z - mean_;
  mean_ += delta / static_cast<double>(count_);
  const GradientVector delta2 = z - mean_;
  if (full_) {
    m2_.noalias() += delta * delta2.transpose();
  } else {
    m2_.col(0) += delta.cwiseProduct(delta2);
  }
}

NoiseStats NoiseAccumulator::stats() const {
  NoiseStats s;
  s.count = count_;
  s.mean = mean_;
  s.diagonal_only = !full_;
  const double denom = count_ > 1 ? static_cast<double>(count_ - 1) : 1.0;
  s.covariance = m2_ / denom;
  if (full_) s.covariance = 0.5 * (s.covariance + s.covariance.transpose()).eval();
  const GradientVector var = full_ ? GradientVector(s.covariance.diagonal()) : GradientVector(s.covariance.col(0));
  s.standard_error = (var.cwiseMax(0.0) / std::max<double>(1.0, static_cast<double>(count_))).cwiseSqrt();
  return s;
}

LandscapeDirections landscape_directions(const NetworkParams& params, Rng rng) {
  const GradientVector theta = params.flatten();
  auto draw = [&](Rng stream) {
    GradientVector d(theta.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = stream.normal();
    for (std::size_t l = 0; l < params.depth(); ++l) {
      const auto off = static_cast<Eigen::Index>(params.layer_offset(l));
      const auto len = static_cast<Eigen::Index>(params.layer_parameter_count(l));
      const double target = theta.segment(off, len).norm();
      const double current = d.segment(off, len).norm();
      if (current > 0.0) d.segment(off, len) *= target / current;
    }
    return d;
  };
  return {draw(rng.split("first")), draw(rng.split("second"))};
}

LandscapeSlice landscape_slice_along(const NetworkParams& params, const LabeledDataset& data,
                                     const LandscapeDirections& directions, int resolution,
                                     double radius) {
  if (resolution < 1 || resolution % 2 == 0) throw ConfigError("landscape resolution must be odd");
  if (!(radius > 0.0)) throw ConfigError("landscape radius must be positive");
  const GradientVector theta = params.flatten();
  if (directions.first.size() != theta.size() || directions.second.size() != theta.size()) {
    throw InputError("landscape directions do not match the parameter count");
  }
  LandscapeSlice slice;
  slice.directions = directions;
  slice.resolution = resolution;
  slice.radius = radius;
  const int span = resolution - 1;
  for (int i = 0; i < resolution; ++i) {
    slice.coords.push_back(span == 0 ? 0.0 : radius * static_cast<double>(2 * i - span) / span);
  }
  slice.loss.resize(resolution, resolution);
  NetworkParams probe = params;
  const int k = params.output_dim();
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      probe.assign(theta + slice.coords[i] * directions.first + slice.coords[j] * directions.second);
      const Matrix p = predict(probe, data.features);
      double loss = 0.0;
      for (std::size_t r = 0; r < data.size(); ++r) {
        const int y = data.observed_labels[r];
        if (y < 0 || y >= k) throw InputError("label outside [0,k)");
        loss -= std::log(std::max(p(static_cast<Eigen::Index>(r), y), kProbFloor));
      }
      slice.loss(i, j) = data.size() ? loss / static_cast<double>(data.size()) : 0.0;
    }
  }
  const int c = span / 2;
  slice.center_loss = slice.loss(c, c);
  slice.sharpness = slice.loss.maxCoeff() - slice.center_loss;
  return slice;
}

LandscapeSlice landscape_slice(const NetworkParams& params, const LabeledDataset& data,
                               int resolution, double radius, Rng rng) {
  return landscape_slice_along(params, data, landscape_directions(params, rng), resolution, radius);
}

void write_landscape_csv(std::ostream& out, const LandscapeSlice& slice,
                         const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << c << '\n';
  out << "i,j,a,b,loss\n";
  for (int i = 0; i < slice.resolution; ++i) {
    for (int j = 0; j < slice.resolution; ++j) {
      out << i << ',' << j << ',' << format_double(slice.coords[i]) << ','
          << format_double(slice.coords[j]) << ',' << format_double(slice.loss(i, j)) << '\n';
    }
  }
}

bool NoiseReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const NoiseCheck& c) { return c.passed; });
}

std::string NoiseReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["samples"] = samples;
  doc["mean_norm"] = mean_norm;
  doc["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    doc["checks"].push_back(
        {{"name", c.name}, {"measured", c.measured}, {"threshold", c.threshold}, {"passed", c.passed}});
  }
  doc["all_passed"] = all_passed();
  return doc.dump(2);
}

NoiseReport analyze_noise(const NetworkParams& params, const Matrix& train_inputs,
                          const std::vector<int>& train_labels, const Matrix& aux_inputs,
                          const NoiseAnalysisOptions& options, Rng rng) {
  if (aux_inputs.rows() == 0 || train_inputs.rows() == 0) {
    throw InputError("analyze_noise needs training and auxiliary inputs");
  }
  const int k = params.output_dim();
  const auto p = params.parameter_count();
  NoiseReport report;

  // Both ODNL computation paths on random (input, class) pairs.
  {
    Rng pick = rng.split("dual_path");
    double worst = 0.0;
    for (std::size_t t = 0; t < options.dual_path_trials; ++t) {
      const auto row = static_cast<Eigen::Index>(pick.uniform_index(static_cast<std::uint64_t>(aux_inputs.rows())));
      const int j = static_cast<int>(pick.uniform_index(static_cast<std::uint64_t>(k)));
      const Vector x = aux_inputs.row(row).transpose();
      const ForwardTrace trace = forward(params, x);
      const GradientVector a = backward(params, trace, TargetDistribution::one_hot(j, k));
      const GradientVector b = -output_jacobian(params, trace).row(j).transpose() /
                               std::max(trace.probs()[j], kProbFloor);
      worst = std::max(worst, relative_discrepancy(a, b));
    }
    report.checks.push_back({"odnl_dual_path_relative", worst, kDualPathTolerance, worst <= kDualPathTolerance});
  }

  const Vector aux_x = aux_inputs.row(0).transpose();
  const GradientVector expectation = odnl_noise_expectation(params, aux_x);
  report.mean_norm = expectation.norm();

  {
    double worst = 0.0;
    const auto rows = std::min<Eigen::Index>(aux_inputs.rows(), 20);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Vector x = aux_inputs.row(r).transpose();
      worst = std::max(worst, (oe_bias_vector(params, x) - odnl_noise_expectation(params, x)).cwiseAbs().maxCoeff());
    }
    report.checks.push_back({"oe_bias_equals_odnl_expectation_abs", worst, 1e-12, worst <= 1e-12});
  }

  {
    std::vector<GradientVector> per_class;
    for (int j = 0; j < k; ++j) per_class.push_back(odnl_noise_vector(params, aux_x, j).z);
    Rng draws = rng.split("odnl_mc");
    NoiseAccumulator acc(p, 0);
    for (std::size_t s = 0; s < options.odnl_mc_samples; ++s) {
      acc.add(per_class[draws.uniform_index(static_cast<std::uint64_t>(k))]);
    }
    const NoiseStats st = acc.stats();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < st.mean.size(); ++i) {
      const double dev = std::abs(st.mean[i] - expectation[i]);
      if (dev <= 1e-12) continue;
      worst = std::max(worst, st.standard_error[i] > 0.0 ? dev / st.standard_error[i] : INFINITY);
    }
    report.samples += st.count;
    report.checks.push_back({"odnl_mc_mean_max_se", worst, 3.0, worst <= 3.0});
  }

  const Vector x = train_inputs.row(0).transpose();
  const int y = train_labels.at(0);
  {
    Rng draws = rng.split("sln_mean");
    NoiseAccumulator acc(p, 0);
    for (std::size_t s = 0; s < options.sln_mean_samples; ++s) {
      acc.add(sln_noise_sample(params, x, y, options.sigma, draws).z);
    }
    const NoiseStats st = acc.stats();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < st.mean.size(); ++i) {
      const double dev = std::abs(st.mean[i]);
      if (dev <= 1e-12) continue;
      worst = std::max(worst, st.standard_error[i] > 0.0 ? dev / st.standard_error[i] : INFINITY);
    }
    report.samples += st.count;
    report.checks.push_back({"sln_mean_max_se", worst, 3.0, worst <= 3.0});
  }

  {
    const Matrix expected = options.sigma * options.sigma * sln_noise_metric(params, x);
    Rng draws = rng.split("sln_cov");
    NoiseAccumulator acc(p, 200);
    for (std::size_t s = 0; s < options.sln_cov_samples; ++s) {
      acc.add(sln_noise_sample(params, x, y, options.sigma, draws).z);
    }
    const NoiseStats st = acc.stats();
    double rel = 0.0;
    if (st.diagonal_only) {
      const GradientVector diag = expected.diagonal();
      rel = (st.covariance.col(0) - diag).norm() / std::max(diag.norm(), 1e-300);
    } else {
      rel = (st.covariance - expected).norm() / std::max(expected.norm(), 1e-300);
    }
    report.samples += st.count;
    report.checks.push_back({st.diagonal_only ? "sln_cov_diag_frobenius_rel" : "sln_cov_frobenius_rel",
                             rel, 0.05, rel <= 0.05});
  }
  return report;
}

}  // namespace odnl

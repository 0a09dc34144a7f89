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

#include "odnl/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "odnl/error.hpp"

namespace odnl {

NetworkParams::NetworkParams(std::vector<int> layer_sizes) : layer_sizes_(std::move(layer_sizes)) {
  if (layer_sizes_.size() < 2) {
    throw ConfigError("network needs at least an input and an output layer");
  }
  for (int size : layer_sizes_) {
    if (size <= 0) throw ConfigError("layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    const int in = layer_sizes_[l];
    const int out = layer_sizes_[l + 1];
    layers_.push_back({Matrix::Zero(out, in), Vector::Zero(out)});
    offsets_.push_back(parameter_count_);
    parameter_count_ += static_cast<std::size_t>(out) * in + out;
  }
}

NetworkParams NetworkParams::zeros(std::vector<int> layer_sizes) {
  return NetworkParams(std::move(layer_sizes));
}

NetworkParams NetworkParams::glorot(std::vector<int> layer_sizes, Rng rng) {
  NetworkParams params(std::move(layer_sizes));
  for (auto& layer : params.layers_) {
    const double fan_in = static_cast<double>(layer.weight.cols());
    const double fan_out = static_cast<double>(layer.weight.rows());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
    }
  }
  return params;
}

std::size_t NetworkParams::layer_parameter_count(std::size_t l) const {
  return static_cast<std::size_t>(layers_[l].weight.size() + layers_[l].bias.size());
}

GradientVector NetworkParams::flatten() const {
  GradientVector flat(static_cast<Eigen::Index>(parameter_count_));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const auto off = static_cast<Eigen::Index>(offsets_[l]);
    std::copy_n(layer.weight.data(), layer.weight.size(), flat.data() + off);
    std::copy_n(layer.bias.data(), layer.bias.size(), flat.data() + off + layer.weight.size());
  }
  return flat;
}

void NetworkParams::assign(const GradientVector& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count_) {
    throw InputError("flat parameter vector has length " + std::to_string(flat.size()) +
                     ", expected " + std::to_string(parameter_count_));
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    const auto off = static_cast<Eigen::Index>(offsets_[l]);
    std::copy_n(flat.data() + off, layer.weight.size(), layer.weight.data());
    std::copy_n(flat.data() + off + layer.weight.size(), layer.bias.size(), layer.bias.data());
  }
}

bool NetworkParams::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& layer) {
    return layer.weight.allFinite() && layer.bias.allFinite();
  });
}

bool operator==(const NetworkParams& a, const NetworkParams& b) {
  if (a.layer_sizes_ != b.layer_sizes_) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

TargetDistribution TargetDistribution::one_hot(int label, int k) {
  if (label < 0 || label >= k) {
    throw InputError("label " + std::to_string(label) + " outside [0," + std::to_string(k) + ")");
  }
  TargetDistribution t{Vector::Zero(k)};
  t.values[label] = 1.0;
  return t;
}

TargetDistribution TargetDistribution::uniform(int k) {
  return {Vector::Constant(k, 1.0 / k)};
}

TargetDistribution TargetDistribution::smoothed(int label, int k, double epsilon) {
  TargetDistribution t = one_hot(label, k);
  t.values = (1.0 - epsilon) * t.values + Vector::Constant(k, epsilon / k);
  return t;
}

Vector softmax(const Vector& logits) {
  const double top = logits.maxCoeff();
  Vector e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

ForwardTrace forward(const NetworkParams& params, const Vector& x) {
  if (x.size() != params.input_dim()) {
    std::ostringstream msg;
    msg << "input has dimension " << x.size() << ", network expects " << params.input_dim();
    throw InputError(msg.str());
  }
  ForwardTrace trace;
  trace.activations.push_back(x);
  const auto& layers = params.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Vector z = layers[l].weight * trace.activations.back() + layers[l].bias;
    trace.pre_activations.push_back(z);
    if (l + 1 < layers.size()) {
      trace.activations.push_back(z.cwiseMax(0.0));
    } else {
      trace.activations.push_back(softmax(z));
    }
  }
  return trace;
}

ForwardTrace forward(const NetworkParams& params, std::span<const double> x) {
  return forward(params, Vector(Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()))));
}

double ce_loss(const ForwardTrace& trace, const TargetDistribution& target) {
  const Vector& probs = trace.probs();
  if (target.values.size() != probs.size()) {
    throw InputError("target length does not match class count");
  }
  double loss = 0.0;
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    loss -= target.values[j] * std::log(std::max(probs[j], kProbFloor));
  }
  return loss;
}

GradientVector backward_from_logits(const NetworkParams& params, const ForwardTrace& trace,
                                    const Vector& logit_grad) {
  const auto& layers = params.layers();
  GradientVector grad(static_cast<Eigen::Index>(params.parameter_count()));
  Vector delta = logit_grad;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const Vector& a = trace.activations[l];
    const auto off = static_cast<Eigen::Index>(params.layer_offset(l));
    Eigen::Map<Matrix> gw(grad.data() + off, layer.weight.rows(), layer.weight.cols());
    gw.noalias() = delta * a.transpose();
    grad.segment(off + layer.weight.size(), layer.bias.size()) = delta;
    if (l > 0) {
      Vector back = layer.weight.transpose() * delta;
      const Vector& z = trace.pre_activations[l - 1];
      for (Eigen::Index i = 0; i < back.size(); ++i) {
        if (z[i] <= 0.0) back[i] = 0.0;
      }
      delta = std::move(back);
    }
  }
  return grad;
}

GradientVector backward(const NetworkParams& params, const ForwardTrace& trace,
                        const TargetDistribution& target) {
  const Vector& probs = trace.probs();
  if (target.values.size() != probs.size()) {
    throw InputError("target length does not match class count");
  }
  // d/dz of -sum_j t_j log softmax(z)_j = (sum_j t_j) p - t.
  const Vector logit_grad = target.values.sum() * probs - target.values;
  return backward_from_logits(params, trace, logit_grad);
}

Matrix output_jacobian(const NetworkParams& params, const ForwardTrace& trace) {
  const Vector& probs = trace.probs();
  const Eigen::Index k = probs.size();
  Matrix jac(k, static_cast<Eigen::Index>(params.parameter_count()));
  for (Eigen::Index j = 0; j < k; ++j) {
    // d p_j / d z = p_j (e_j - p). 1 - p_j is exact for p_j >= 1/2; p_j - p_j^2 is not.
    Vector logit_grad = -probs[j] * probs;
    logit_grad[j] = probs[j] * (1.0 - probs[j]);
    jac.row(j) = backward_from_logits(params, trace, logit_grad).transpose();
  }
  return jac;
}

GradientVector finite_diff_gradient(const NetworkParams& params, std::span<const double> x,
                                    const TargetDistribution& target, double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  const GradientVector theta = params.flatten();
  GradientVector grad(theta.size());
  NetworkParams probe = params;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    GradientVector shifted = theta;
    shifted[i] = theta[i] + h;
    probe.assign(shifted);
    const double up = ce_loss(forward(probe, x), target);
    shifted[i] = theta[i] - h;
    probe.assign(shifted);
    const double down = ce_loss(forward(probe, x), target);
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

BatchTrace forward_batch(const NetworkParams& params, const Matrix& inputs) {
  if (inputs.cols() != params.input_dim()) {
    std::ostringstream msg;
    msg << "batch has " << inputs.cols() << " features, network expects " << params.input_dim();
    throw InputError(msg.str());
  }
  BatchTrace trace;
  trace.activations.push_back(inputs);
  const auto& layers = params.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = trace.activations.back() * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    if (l + 1 < layers.size()) {
      Matrix a = z.cwiseMax(0.0);
      trace.pre_activations.push_back(std::move(z));
      trace.activations.push_back(std::move(a));
    } else {
      Matrix p(z.rows(), z.cols());
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double top = z.row(r).maxCoeff();
        auto e = (z.row(r).array() - top).exp();
        p.row(r) = e / e.sum();
      }
      trace.pre_activations.push_back(std::move(z));
      trace.activations.push_back(std::move(p));
    }
  }
  return trace;
}

GradientVector backward_batch(const NetworkParams& params, const BatchTrace& trace,
                              const Matrix& logit_grad) {
  const auto& layers = params.layers();
  GradientVector grad(static_cast<Eigen::Index>(params.parameter_count()));
  Matrix delta = logit_grad;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const auto off = static_cast<Eigen::Index>(params.layer_offset(l));
    Eigen::Map<Matrix> gw(grad.data() + off, layer.weight.rows(), layer.weight.cols());
    gw.noalias() = delta.transpose() * trace.activations[l];
    grad.segment(off + layer.weight.size(), layer.bias.size()) = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix back = delta * layer.weight;
      back = back.cwiseProduct((trace.pre_activations[l - 1].array() > 0.0).cast<double>().matrix());
      delta = std::move(back);
    }
  }
  return grad;
}

Matrix predict(const NetworkParams& params, const Matrix& inputs) {
  return forward_batch(params, inputs).probs();
}

void sgd_step(NetworkParams& params, const GradientVector& grad, const SgdOptions& options,
              SgdState& state) {
  if (!(options.lr > 0.0) || !(options.momentum >= 0.0 && options.momentum < 1.0) ||
      !(options.weight_decay >= 0.0)) {
    throw ConfigError("sgd_step requires lr > 0, momentum in [0,1) and weight_decay >= 0");
  }
  if (!grad.allFinite()) {
    throw NumericError("non-finite gradient at SGD step " + std::to_string(state.step));
  }
  const GradientVector theta = params.flatten();
  if (grad.size() != theta.size()) throw InputError("gradient length does not match parameters");
  if (state.velocity.size() != theta.size()) state.velocity = GradientVector::Zero(theta.size());
  state.velocity = options.momentum * state.velocity + grad + options.weight_decay * theta;
  params.assign(theta - options.lr * state.velocity);
  ++state.step;
}

}  // namespace odnl

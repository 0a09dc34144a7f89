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

// Dense feedforward classifier with a softmax head: forward pass, exact
// softmax-cross-entropy gradients, the output Jacobian, SGD with momentum and
// a central finite-difference oracle.
//
// Flat parameter layout (GradientVector indices): layer-major, each layer's
// weight matrix (out x in, row-major) followed by its bias vector.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "odnl/rng.hpp"

namespace odnl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Flat length-p vector aligned with NetworkParams::flatten().
using GradientVector = Eigen::VectorXd;

/// Lower clamp applied inside every log and every division by a probability.
inline constexpr double kProbFloor = 1e-12;

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

class NetworkParams {
 public:
  NetworkParams() = default;

  /// All weights and biases zero. `layer_sizes` = {d, hidden..., k}.
  static NetworkParams zeros(std::vector<int> layer_sizes);
  /// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
  static NetworkParams glorot(std::vector<int> layer_sizes, Rng rng);

  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  int input_dim() const { return layer_sizes_.front(); }
  int output_dim() const { return layer_sizes_.back(); }
  std::size_t depth() const { return layers_.size(); }
  std::size_t parameter_count() const { return parameter_count_; }
  /// Offset of layer `l`'s weight block inside the flat vector.
  std::size_t layer_offset(std::size_t l) const { return offsets_[l]; }
  std::size_t layer_parameter_count(std::size_t l) const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  DenseLayer& layer(std::size_t l) { return layers_[l]; }

  GradientVector flatten() const;
  void assign(const GradientVector& flat);
  bool all_finite() const;

  friend bool operator==(const NetworkParams&, const NetworkParams&);

 private:
  explicit NetworkParams(std::vector<int> layer_sizes);

  std::vector<int> layer_sizes_;
  std::vector<DenseLayer> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t parameter_count_ = 0;
};

/// Soft target for cross-entropy. Entries may be negative (SLN targets) and
/// need not sum to one; the loss is linear in the target.
struct TargetDistribution {
  Vector values;

  static TargetDistribution one_hot(int label, int k);
  static TargetDistribution uniform(int k);
  /// (1 - epsilon) * e^label + epsilon / k.
  static TargetDistribution smoothed(int label, int k, double epsilon);
};

struct ForwardTrace {
  /// Pre-activation of every layer (hidden layers then logits).
  std::vector<Vector> pre_activations;
  /// activations[0] is the input; activations[l + 1] is the output of layer l
  /// (ReLU for hidden layers, softmax for the last).
  std::vector<Vector> activations;

  const Vector& probs() const { return activations.back(); }
  const Vector& input() const { return activations.front(); }
  std::size_t layer_count() const { return pre_activations.size(); }
};

/// Numerically stable softmax (max subtracted before exponentiation).
Vector softmax(const Vector& logits);

ForwardTrace forward(const NetworkParams& params, std::span<const double> x);
ForwardTrace forward(const NetworkParams& params, const Vector& x);

double ce_loss(const ForwardTrace& trace, const TargetDistribution& target);

/// Gradient of ce_loss with respect to every parameter.
GradientVector backward(const NetworkParams& params, const ForwardTrace& trace,
                        const TargetDistribution& target);

/// Backpropagates an arbitrary gradient with respect to the logits.
GradientVector backward_from_logits(const NetworkParams& params, const ForwardTrace& trace,
                                    const Vector& logit_grad);

/// k x p matrix; row j is the gradient of probs_j.
Matrix output_jacobian(const NetworkParams& params, const ForwardTrace& trace);

GradientVector finite_diff_gradient(const NetworkParams& params, std::span<const double> x,
                                    const TargetDistribution& target, double h);

// Batched routines used by the training loop. Rows of `inputs` are samples.

struct BatchTrace {
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> activations;  // activations[0] is the input batch
  const Matrix& probs() const { return activations.back(); }
  Eigen::Index rows() const { return activations.front().rows(); }
};

BatchTrace forward_batch(const NetworkParams& params, const Matrix& inputs);
/// Gradient of sum_i <logit_grad.row(i), logits_i> through the network.
GradientVector backward_batch(const NetworkParams& params, const BatchTrace& trace,
                              const Matrix& logit_grad);
/// Softmax probabilities for every row.
Matrix predict(const NetworkParams& params, const Matrix& inputs);

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

struct SgdState {
  GradientVector velocity;
  long step = 0;
};

/// velocity = momentum * velocity + grad + weight_decay * theta;
/// theta -= lr * velocity.
void sgd_step(NetworkParams& params, const GradientVector& grad, const SgdOptions& options,
              SgdState& state);

}  // namespace odnl

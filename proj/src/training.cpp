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

#include "odnl/training.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "odnl/error.hpp"
#include "odnl/noisegen.hpp"

namespace odnl {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Matrix gather_rows(const Matrix& source, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = source.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& source, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(source[r]);
  return out;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(v[i - 1], v[j]);
  }
}

std::vector<std::size_t> iota_vector(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

double safe_log(double p) { return std::log(std::max(p, kProbFloor)); }

// Cycles through shuffled pool indices; reshuffles when exhausted.
class AuxSampler {
 public:
  AuxSampler(std::size_t pool_size, Rng rng) : order_(iota_vector(pool_size)), rng_(rng) {
    shuffle(order_, rng_);
  }
  std::vector<std::size_t> next(std::size_t count) {
    if (pos_ + count > order_.size()) {
      shuffle(order_, rng_);
      pos_ = 0;
    }
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(pos_ + count));
    pos_ += count;
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  Rng rng_;
};

// Produces the labels attached to each auxiliary batch for one network.
class AuxLabeler {
 public:
  AuxLabeler(AuxLabelMode mode, int k, std::size_t pool_size, Rng rng,
             const std::vector<int>* fixed)
      : mode_(mode), k_(k), pool_size_(pool_size), rng_(rng), fixed_(fixed) {}

  void begin_epoch() {
    if (mode_ == AuxLabelMode::DynamicPerEpoch) epoch_labels_ = sample_dynamic_labels(pool_size_, k_, rng_);
  }

  std::vector<int> labels_for(const std::vector<std::size_t>& idx) {
    switch (mode_) {
      case AuxLabelMode::DynamicPerIteration:
        return sample_dynamic_labels(idx.size(), k_, rng_);
      case AuxLabelMode::DynamicPerEpoch:
        return gather_labels(epoch_labels_, idx);
      case AuxLabelMode::Fixed:
        return gather_labels(*fixed_, idx);
    }
    return {};
  }

 private:
  AuxLabelMode mode_;
  int k_;
  std::size_t pool_size_;
  Rng rng_;
  const std::vector<int>* fixed_;
  std::vector<int> epoch_labels_;
};

void check_finite(double loss, int epoch, std::size_t iteration) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite training loss at epoch " << epoch << ", iteration " << iteration;
    throw NumericError(msg.str());
  }
}

double mean_or_nan(double sum, std::size_t count) {
  return count == 0 ? kNaN : sum / static_cast<double>(count);
}

}  // namespace

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::Standard: return "standard";
    case Regularizer::Odnl: return "odnl";
    case Regularizer::Sln: return "sln";
    case Regularizer::Oe: return "oe";
    case Regularizer::ForwardCorrection: return "forward_correction";
    case Regularizer::Coteaching: return "coteaching";
  }
  return "unknown";
}

std::string to_string(AuxLabelMode m) {
  switch (m) {
    case AuxLabelMode::DynamicPerIteration: return "dynamic_per_iteration";
    case AuxLabelMode::DynamicPerEpoch: return "dynamic_per_epoch";
    case AuxLabelMode::Fixed: return "fixed";
  }
  return "unknown";
}

Regularizer parse_regularizer(const std::string& name) {
  for (auto r : {Regularizer::Standard, Regularizer::Odnl, Regularizer::Sln, Regularizer::Oe,
                 Regularizer::ForwardCorrection, Regularizer::Coteaching}) {
    if (to_string(r) == name) return r;
  }
  throw ConfigError("unknown regularizer '" + name + "'");
}

AuxLabelMode parse_aux_label_mode(const std::string& name) {
  for (auto m : {AuxLabelMode::DynamicPerIteration, AuxLabelMode::DynamicPerEpoch, AuxLabelMode::Fixed}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown auxiliary label mode '" + name + "'");
}

double LrSchedule::rate_at(int epoch) const {
  double rate = initial;
  for (int e : decay_epochs) {
    if (epoch >= e) rate *= factor;
  }
  return rate;
}

bool TrainConfig::odnl_active() const {
  return (regularizer == Regularizer::Odnl || compose_odnl) && eta > 0.0;
}

bool TrainConfig::uses_pool() const {
  return odnl_active() || (regularizer == Regularizer::Oe && lambda_oe > 0.0);
}

void TrainConfig::validate() const {
  if (!(eta >= 0.0)) throw ConfigError("eta must be non-negative");
  if (!(lambda_oe >= 0.0)) throw ConfigError("lambda_oe must be non-negative");
  if (!(sigma_sln >= 0.0)) throw ConfigError("sigma_sln must be non-negative");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError("label_smoothing must lie in [0,1)");
  }
  if (epochs <= 0 || train_batch <= 0 || aux_batch <= 0) {
    throw ConfigError("epochs and batch sizes must be positive");
  }
  for (std::size_t i = 1; i < lr.decay_epochs.size(); ++i) {
    if (lr.decay_epochs[i] <= lr.decay_epochs[i - 1]) {
      throw ConfigError("learning-rate decay epochs must be strictly increasing");
    }
  }
  if (!(lr.initial > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(coteach_forget_rate >= 0.0 && coteach_forget_rate < 1.0)) {
    throw ConfigError("coteach_forget_rate must lie in [0,1)");
  }
  for (int w : hidden_widths) {
    if (w <= 0) throw ConfigError("hidden widths must be positive");
  }
}

std::vector<int> sample_dynamic_labels(std::size_t count, int k, Rng& rng) {
  if (k < 1) throw ConfigError("sample_dynamic_labels: k must be positive");
  std::vector<int> labels(count);
  for (auto& l : labels) l = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
  return labels;
}

LossAndGrad batch_soft_ce(const NetworkParams& params, const Matrix& inputs, const Matrix& targets) {
  const auto n = inputs.rows();
  if (targets.rows() != n || targets.cols() != params.output_dim()) {
    throw InputError("target matrix shape does not match the batch");
  }
  if (n == 0) return {0.0, GradientVector::Zero(static_cast<Eigen::Index>(params.parameter_count()))};
  const BatchTrace trace = forward_batch(params, inputs);
  const Matrix& p = trace.probs();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) loss -= targets(i, j) * safe_log(p(i, j));
  }
  Matrix logit_grad = p.array().colwise() * targets.rowwise().sum().array();
  logit_grad -= targets;
  logit_grad /= static_cast<double>(n);
  return {loss / static_cast<double>(n), backward_batch(params, trace, logit_grad)};
}

namespace {

Matrix label_targets(const std::vector<int>& labels, int k, double smoothing) {
  Matrix t = Matrix::Constant(static_cast<Eigen::Index>(labels.size()), k, smoothing / k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw InputError("label outside [0,k)");
    t(static_cast<Eigen::Index>(i), labels[i]) += 1.0 - smoothing;
  }
  return t;
}

}  // namespace

LossAndGrad batch_ce(const NetworkParams& params, const Matrix& inputs,
                     const std::vector<int>& labels, double label_smoothing) {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw InputError("label count does not match batch size");
  }
  return batch_soft_ce(params, inputs, label_targets(labels, params.output_dim(), label_smoothing));
}

std::vector<double> per_sample_ce(const NetworkParams& params, const Matrix& inputs,
                                  const std::vector<int>& labels) {
  const Matrix p = predict(params, inputs);
  std::vector<double> losses(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    losses[i] = -safe_log(p(static_cast<Eigen::Index>(i), labels[i]));
  }
  return losses;
}

LossAndGrad odnl_loss_and_grad(const NetworkParams& params, const Matrix& train_x,
                               const std::vector<int>& train_y, const Matrix& aux_x,
                               const std::vector<int>& aux_labels, double eta) {
  if (static_cast<std::size_t>(aux_x.rows()) != aux_labels.size() ||
      static_cast<std::size_t>(train_x.rows()) != train_y.size()) {
    throw InputError("odnl_loss_and_grad: label counts do not match batch sizes");
  }
  // One pass over the concatenated batches; rows are weighted 1/n and eta/m.
  const auto n = train_x.rows();
  const auto m = aux_x.rows();
  const int k = params.output_dim();
  Matrix inputs(n + m, params.input_dim());
  inputs.topRows(n) = train_x;
  inputs.bottomRows(m) = aux_x;
  Matrix targets(n + m, k);
  targets.topRows(n) = label_targets(train_y, k, 0.0);
  targets.bottomRows(m) = label_targets(aux_labels, k, 0.0);

  const BatchTrace trace = forward_batch(params, inputs);
  const Matrix& p = trace.probs();
  Matrix logit_grad = p - targets;
  double l1 = 0.0;
  double l2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) l1 -= safe_log(p(i, train_y[static_cast<std::size_t>(i)]));
  for (Eigen::Index i = 0; i < m; ++i) l2 -= safe_log(p(n + i, aux_labels[static_cast<std::size_t>(i)]));
  if (n > 0) {
    l1 /= static_cast<double>(n);
    logit_grad.topRows(n) /= static_cast<double>(n);
  }
  if (m > 0) {
    l2 /= static_cast<double>(m);
    logit_grad.bottomRows(m) *= eta / static_cast<double>(m);
  }
  return {l1 + eta * l2, backward_batch(params, trace, logit_grad)};
}

TargetDistribution sln_target(int y, int k, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("sln_target: sigma must be non-negative");
  TargetDistribution t = TargetDistribution::one_hot(y, k);
  for (int j = 0; j < k; ++j) {
    const double z = rng.normal();
    t.values[j] += sigma * z;
  }
  return t;
}

LossAndGrad oe_aux_loss(const NetworkParams& params, const Matrix& aux_x, double lambda_oe) {
  if (!(lambda_oe >= 0.0)) throw ConfigError("oe_aux_loss: lambda must be non-negative");
  const int k = params.output_dim();
  const Matrix targets = Matrix::Constant(aux_x.rows(), k, 1.0 / k);
  LossAndGrad term = batch_soft_ce(params, aux_x, targets);
  term.loss *= lambda_oe;
  term.grad *= lambda_oe;
  return term;
}

LossAndGrad forward_correction_batch(const NetworkParams& params, const Matrix& inputs,
                                     const std::vector<int>& labels,
                                     const TransitionMatrix& transition) {
  transition.validate();
  const int k = params.output_dim();
  if (transition.num_classes() != k) throw ConfigError("transition matrix size does not match k");
  const auto n = inputs.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw InputError("label count mismatch");
  if (n == 0) return {0.0, GradientVector::Zero(static_cast<Eigen::Index>(params.parameter_count()))};
  const BatchTrace trace = forward_batch(params, inputs);
  const Matrix& p = trace.probs();
  const Matrix q = p * transition.values;  // row i: (T^T p_i)^T
  Matrix logit_grad(n, k);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double qy = std::max(q(i, y), kProbFloor);
    loss -= std::log(qy);
    // dL/dp_m = -T(m, y) / q_y, then through the softmax Jacobian.
    const Eigen::RowVectorXd dp = -transition.values.col(y).transpose() / qy;
    const double inner = p.row(i).dot(dp);
    logit_grad.row(i) = p.row(i).array() * (dp.array() - inner);
  }
  logit_grad /= static_cast<double>(n);
  return {loss / static_cast<double>(n), backward_batch(params, trace, logit_grad)};
}

LossAndGrad forward_correction_loss(const NetworkParams& params, const Vector& x, int noisy_label,
                                    const TransitionMatrix& transition) {
  Matrix inputs(1, x.size());
  inputs.row(0) = x.transpose();
  return forward_correction_batch(params, inputs, {noisy_label}, transition);
}

CoteachSelection coteach_select(const std::vector<double>& losses_a,
                                const std::vector<double>& losses_b, double keep_fraction) {
  if (losses_a.size() != losses_b.size()) throw InputError("coteach_select: length mismatch");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ConfigError("coteach_select: keep_fraction must lie in (0,1]");
  }
  const std::size_t n = losses_a.size();
  // Tolerance keeps e.g. 0.6 * 10 from rounding up to 7.
  const auto count = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9)));
  auto smallest = [&](const std::vector<double>& losses) {
    auto order = iota_vector(n);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
  };
  return {smallest(losses_b), smallest(losses_a)};
}

double coteach_keep_fraction(const TrainConfig& config, int epoch) {
  const double ramp = config.coteach_warmup > 0.0
                          ? std::min(static_cast<double>(epoch) / config.coteach_warmup, 1.0)
                          : 1.0;
  return 1.0 - config.coteach_forget_rate * ramp;
}

double accuracy(const NetworkParams& params, const Matrix& inputs, const std::vector<int>& labels) {
  const Matrix p = predict(params, inputs);
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    Eigen::Index arg = 0;
    p.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    correct += (arg == labels[i]) ? 1 : 0;
    ++total;
  }
  return total == 0 ? kNaN : static_cast<double>(correct) / static_cast<double>(total);
}

double final_window_mean(const std::vector<EpochMetrics>& metrics, double EpochMetrics::*field,
                         std::size_t window) {
  if (metrics.empty()) return kNaN;
  const std::size_t take = std::min(window, metrics.size());
  double sum = 0.0;
  for (std::size_t i = metrics.size() - take; i < metrics.size(); ++i) sum += metrics[i].*field;
  return sum / static_cast<double>(take);
}

namespace {

struct Peer {
  NetworkParams params;
  SgdState state;
  AuxLabeler labeler;
  double aux_sum = 0.0;
};

EpochMetrics measure_epoch(int epoch, const NetworkParams& params, const TrainInputs& in,
                           double aux_sum, std::size_t aux_count) {
  EpochMetrics m;
  m.epoch = epoch;
  const auto& data = *in.train;
  const auto losses = per_sample_ce(params, data.features, data.observed_labels);
  double all = 0.0, clean = 0.0, noisy = 0.0;
  std::size_t n_clean = 0, n_noisy = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    all += losses[i];
    if (data.is_clean(i)) {
      clean += losses[i];
      ++n_clean;
    } else {
      noisy += losses[i];
      ++n_noisy;
    }
  }
  m.train_loss = mean_or_nan(all, losses.size());
  m.clean_loss = mean_or_nan(clean, n_clean);
  m.noisy_loss = mean_or_nan(noisy, n_noisy);
  m.aux_loss = mean_or_nan(aux_sum, aux_count);
  m.val_acc = in.validation ? accuracy(params, in.validation->features, in.validation->observed_labels)
                            : kNaN;
  m.test_acc = in.test ? accuracy(params, in.test->features, in.test->true_labels) : kNaN;
  return m;
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainInputs& inputs) {
  config.validate();
  if (inputs.train == nullptr) throw ConfigError("train: training set is required");
  const LabeledDataset& data = *inputs.train;
  data.validate();
  const int k = data.num_classes;
  const std::size_t n = data.size();
  if (n == 0) throw ConfigError("train: training set is empty");
  if (static_cast<std::size_t>(config.train_batch) > n) {
    throw ConfigError("train: train_batch exceeds the training set size");
  }
  const bool use_pool = config.uses_pool();
  const AuxiliaryPool* pool = inputs.pool;
  if (use_pool) {
    if (pool == nullptr || pool->size() == 0) throw ConfigError("train: objective needs an auxiliary pool");
    if (pool->dim() != data.dim()) throw ConfigError("train: pool dimension does not match data");
    if (static_cast<std::size_t>(config.aux_batch) > pool->size()) {
      throw ConfigError("train: aux_batch exceeds the auxiliary pool size");
    }
  }

  Rng root(config.seed, "train");
  std::vector<int> layer_sizes{data.dim()};
  layer_sizes.insert(layer_sizes.end(), config.hidden_widths.begin(), config.hidden_widths.end());
  layer_sizes.push_back(k);

  std::optional<AuxiliaryPool> labelled_pool;
  const std::vector<int>* fixed_labels = nullptr;
  if (use_pool && config.aux_label_mode == AuxLabelMode::Fixed) {
    if (pool->fixed_labels) {
      fixed_labels = &*pool->fixed_labels;
    } else {
      labelled_pool = assign_fixed_labels(*pool, k, root.split("fixed_labels"));
      fixed_labels = &*labelled_pool->fixed_labels;
    }
  }
  const std::size_t pool_size = use_pool ? pool->size() : 0;

  const bool coteach = config.regularizer == Regularizer::Coteaching;
  std::vector<Peer> peers;
  peers.push_back({NetworkParams::glorot(layer_sizes, root.split("init")), {},
                   AuxLabeler(config.aux_label_mode, k, pool_size, root.split("aux_labels"), fixed_labels)});
  if (coteach) {
    peers.push_back({NetworkParams::glorot(layer_sizes, root.split("init_peer")), {},
                     AuxLabeler(config.aux_label_mode, k, pool_size, root.split("aux_labels_peer"),
                                fixed_labels)});
  }

  std::optional<TransitionMatrix> transition;
  if (config.regularizer == Regularizer::ForwardCorrection) {
    if (inputs.transition) {
      transition = *inputs.transition;
    } else {
      std::vector<std::size_t> closed_rows;
      for (std::size_t i = 0; i < n; ++i) {
        if (!data.open_set_mask[i]) closed_rows.push_back(i);
      }
      transition = empirical_transition_matrix(data.subset(closed_rows));
    }
    transition->validate();
  }

  Rng batch_rng = root.split("batches");
  Rng sln_rng = root.split("sln");
  std::optional<AuxSampler> aux_sampler;
  if (use_pool) aux_sampler.emplace(pool_size, root.split("aux_batches"));

  const std::size_t batch = static_cast<std::size_t>(config.train_batch);
  const std::size_t iterations = (n + batch - 1) / batch;
  std::vector<std::size_t> order = iota_vector(n);

  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    SgdOptions sgd{config.lr.rate_at(epoch), config.momentum, config.weight_decay};
    shuffle(order, batch_rng);
    for (auto& peer : peers) {
      peer.labeler.begin_epoch();
      peer.aux_sum = 0.0;
    }
    std::size_t aux_count = 0;
    const double keep = coteach ? coteach_keep_fraction(config, epoch) : 1.0;

    for (std::size_t it = 0; it < iterations; ++it) {
      const auto first = order.begin() + static_cast<std::ptrdiff_t>(it * batch);
      const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(n, (it + 1) * batch));
      const std::vector<std::size_t> idx(first, last);
      const Matrix x = gather_rows(data.features, idx);
      const std::vector<int> y = gather_labels(data.observed_labels, idx);

      Matrix aux_x;
      std::vector<std::size_t> aux_idx;
      if (use_pool) {
        aux_idx = aux_sampler->next(static_cast<std::size_t>(config.aux_batch));
        aux_x = gather_rows(pool->features, aux_idx);
        ++aux_count;
      }

      CoteachSelection selection;
      if (coteach) {
        selection = coteach_select(per_sample_ce(peers[0].params, x, y),
                                   per_sample_ce(peers[1].params, x, y), keep);
      }

      for (std::size_t p = 0; p < peers.size(); ++p) {
        Peer& peer = peers[p];
        LossAndGrad base;
        switch (config.regularizer) {
          case Regularizer::Standard:
          case Regularizer::Odnl:
            base = batch_ce(peer.params, x, y, config.label_smoothing);
            break;
          case Regularizer::Sln: {
            Matrix targets(x.rows(), k);
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
              targets.row(i) = sln_target(y[static_cast<std::size_t>(i)], k, config.sigma_sln, sln_rng)
                                   .values.transpose();
            }
            base = batch_soft_ce(peer.params, x, targets);
            break;
          }
          case Regularizer::Oe: {
            base = batch_ce(peer.params, x, y, config.label_smoothing);
            if (use_pool) {
              LossAndGrad oe = oe_aux_loss(peer.params, aux_x, 1.0);
              peer.aux_sum += oe.loss;
              base.loss += config.lambda_oe * oe.loss;
              base.grad += config.lambda_oe * oe.grad;
            }
            break;
          }
          case Regularizer::ForwardCorrection:
            base = forward_correction_batch(peer.params, x, y, *transition);
            break;
          case Regularizer::Coteaching: {
            const auto& rows = p == 0 ? selection.for_a : selection.for_b;
            std::vector<std::size_t> local(rows.begin(), rows.end());
            base = batch_ce(peer.params, gather_rows(x, local), gather_labels(y, local),
                            config.label_smoothing);
            break;
          }
        }
        if (config.odnl_active()) {
          const std::vector<int> aux_labels = peer.labeler.labels_for(aux_idx);
          const LossAndGrad aux = batch_ce(peer.params, aux_x, aux_labels);
          peer.aux_sum += aux.loss;
          base.loss += config.eta * aux.loss;
          base.grad += config.eta * aux.grad;
        }
        check_finite(base.loss, epoch, it);
        sgd_step(peer.params, base.grad, sgd, peer.state);
      }
    }
    result.metrics.push_back(measure_epoch(epoch, peers[0].params, inputs, peers[0].aux_sum,
                                           use_pool ? aux_count : 0));
  }
  result.params = std::move(peers[0].params);
  return result;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(
    std::size_t n, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
    throw ConfigError("validation_fraction must lie in (0, 0.5]");
  }
  auto order = iota_vector(n);
  Rng rng(seed, "validation_split");
  shuffle(order, rng);
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(rest.begin(), rest.end());
  return {rest, val};
}

TrainConfig with_odnl_eta(TrainConfig config, double eta) {
  config.eta = eta;
  if (config.regularizer == Regularizer::Standard) {
    config.regularizer = Regularizer::Odnl;
  } else if (config.regularizer != Regularizer::Odnl) {
    config.compose_odnl = true;
  }
  return config;
}

EtaTuning tune_eta(const TrainConfig& config, const LabeledDataset& data, const AuxiliaryPool* pool,
                   double validation_fraction, const std::vector<double>& candidates) {
  if (candidates.empty()) throw ConfigError("tune_eta: no candidates");
  const auto [train_rows, val_rows] = validation_split(data.size(), validation_fraction, config.seed);
  const LabeledDataset train_part = data.subset(train_rows);
  const LabeledDataset val_part = data.subset(val_rows);

  EtaTuning out;
  bool have_best = false;
  double best_score = 0.0;
  for (double eta : candidates) {
    const TrainConfig candidate = with_odnl_eta(config, eta);
    TrainInputs in;
    in.train = &train_part;
    in.pool = pool;
    in.validation = &val_part;
    const TrainResult run = train(candidate, in);
    EtaCandidateReport report;
    report.eta = eta;
    report.final_val_acc = final_window_mean(run.metrics, &EpochMetrics::val_acc);
    report.last_val_acc = run.metrics.back().val_acc;
    report.best_val_acc = report.last_val_acc;
    for (const auto& m : run.metrics) report.best_val_acc = std::max(report.best_val_acc, m.val_acc);
    report.late_drop = report.best_val_acc - report.last_val_acc;
    out.candidates.push_back(report);
    const bool better = !have_best || report.final_val_acc > best_score ||
                        (report.final_val_acc == best_score && eta < out.best_eta);
    if (better) {
      have_best = true;
      best_score = report.final_val_acc;
      out.best_eta = eta;
    }
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& metrics,
                       const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << c << '\n';
  out << "epoch,train_loss,clean_loss,noisy_loss,aux_loss,val_acc,test_acc\n";
  for (const auto& m : metrics) {
    out << m.epoch << ',' << format_double(m.train_loss) << ',' << format_double(m.clean_loss) << ','
        << format_double(m.noisy_loss) << ',' << format_double(m.aux_loss) << ','
        << format_double(m.val_acc) << ',' << format_double(m.test_acc) << '\n';
  }
}

std::vector<EpochMetrics> read_metrics_csv(std::istream& in) {
  std::vector<EpochMetrics> metrics;
  std::string line;
  bool header_seen = false;
  auto parse = [](const std::string& s) {
    if (s == "nan") return kNaN;
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw InputError("bad number '" + s + "' in metrics CSV");
    return v;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != "epoch,train_loss,clean_loss,noisy_loss,aux_loss,val_acc,test_acc") {
        throw InputError("unexpected metrics CSV header");
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw InputError("metrics CSV row needs 7 fields");
    EpochMetrics m;
    m.epoch = std::stoi(f[0]);
    m.train_loss = parse(f[1]);
    m.clean_loss = parse(f[2]);
    m.noisy_loss = parse(f[3]);
    m.aux_loss = parse(f[4]);
    m.val_acc = parse(f[5]);
    m.test_acc = parse(f[6]);
    metrics.push_back(m);
  }
  return metrics;
}

void write_params(std::ostream& out, const NetworkParams& params) {
  out << "layers";
  for (int s : params.layer_sizes()) out << ' ' << s;
  out << '\n';
  const GradientVector flat = params.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) out << format_double(flat[i]) << '\n';
}

NetworkParams read_params(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("parameter file is empty");
  std::istringstream header(line);
  std::string tag;
  header >> tag;
  if (tag != "layers") throw InputError("parameter file must start with 'layers'");
  std::vector<int> sizes;
  int s = 0;
  while (header >> s) sizes.push_back(s);
  NetworkParams params = NetworkParams::zeros(sizes);
  GradientVector flat(static_cast<Eigen::Index>(params.parameter_count()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    if (!std::getline(in, line)) throw InputError("parameter file is truncated");
    flat[i] = std::stod(line);
  }
  params.assign(flat);
  return params;
}

}  // namespace odnl

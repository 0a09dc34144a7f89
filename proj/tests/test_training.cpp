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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "odnl/error.hpp"
#include "odnl/harness.hpp"
#include "odnl/noisegen.hpp"
#include "odnl/training.hpp"

using namespace odnl;

namespace {

NetworkParams random_params(std::vector<int> sizes, std::uint64_t seed) {
  Rng rng(seed, "test_params");
  NetworkParams p = NetworkParams::glorot(sizes, rng.split("init"));
  GradientVector flat = p.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] += 0.1 * rng.normal();
  p.assign(flat);
  return p;
}

Matrix random_matrix(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed, "test_matrix");
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

// Mean CE over rows by summing per-sample backward calls.
LossAndGrad reference_ce(const NetworkParams& params, const Matrix& x, const std::vector<int>& y) {
  LossAndGrad out{0.0, GradientVector::Zero(static_cast<Eigen::Index>(params.parameter_count()))};
  const int k = params.output_dim();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector xi = x.row(i).transpose();
    const auto trace = forward(params, xi);
    const auto t = TargetDistribution::one_hot(y[static_cast<std::size_t>(i)], k);
    out.loss += ce_loss(trace, t);
    out.grad += backward(params, trace, t);
  }
  out.loss /= static_cast<double>(x.rows());
  out.grad /= static_cast<double>(x.rows());
  return out;
}

TrainConfig quick_config(Regularizer r, std::uint64_t seed) {
  TrainConfig c;
  c.regularizer = r;
  c.epochs = 6;
  c.train_batch = 32;
  c.aux_batch = 32;
  c.hidden_widths = {8};
  c.lr.decay_epochs = {4};
  c.seed = seed;
  return c;
}

struct Fixture {
  LabeledDataset train = corrupt_symmetric(generate_blobs(4, 200, 2, 6.0, 1.0, 1), 0.4, Rng(2));
  LabeledDataset test = generate_blobs(4, 100, 2, 6.0, 1.0, 3);
  AuxiliaryPool pool = generate_openset_pool(OpenSetKind::Ring, 300, 4, BlobSpec{});
};

}  // namespace

TEST_CASE("dynamic labels are uniform and redrawn independently") {
  Rng rng(1, "labels");
  CHECK(sample_dynamic_labels(50, 1, rng) == std::vector<int>(50, 0));
  const auto labels = sample_dynamic_labels(100000, 10, rng);
  std::vector<double> hist(10, 0.0);
  for (int l : labels) hist[l] += 1.0;
  double stat = 0.0;
  for (double h : hist) stat += (h - 10000.0) * (h - 10000.0) / 10000.0;
  CHECK(stat <= 21.666);
  // The same sample in two epochs agrees with probability 1/k.
  const auto again = sample_dynamic_labels(100000, 10, rng);
  double same = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) same += labels[i] == again[i] ? 1.0 : 0.0;
  CHECK(std::abs(same / 100000.0 - 0.1) <= 3.0 * std::sqrt(0.09 / 100000.0));
}

TEST_CASE("batch cross-entropy matches per-sample backward") {
  const auto params = random_params({3, 6, 4}, 10);
  const Matrix x = random_matrix(9, 3, 11);
  const std::vector<int> y{0, 1, 2, 3, 0, 1, 2, 3, 1};
  const auto batch = batch_ce(params, x, y);
  const auto ref = reference_ce(params, x, y);
  CHECK(std::abs(batch.loss - ref.loss) <= 1e-12);
  CHECK((batch.grad - ref.grad).cwiseAbs().maxCoeff() <= 1e-12);
  const auto per = per_sample_ce(params, x, y);
  double mean = 0.0;
  for (double v : per) mean += v / 9.0;
  CHECK(mean == doctest::Approx(batch.loss).epsilon(1e-12));
}

TEST_CASE("ODNL objective decomposes into the two cross-entropy terms") {
  const auto params = random_params({3, 6, 4}, 20);
  const Matrix x = random_matrix(8, 3, 21);
  const Matrix aux = random_matrix(5, 3, 22, 4.0);
  const std::vector<int> y{0, 1, 2, 3, 3, 2, 1, 0};
  const std::vector<int> aux_y{2, 0, 3, 3, 1};
  for (double eta : {0.0, 0.5, 2.5}) {
    const auto combined = odnl_loss_and_grad(params, x, y, aux, aux_y, eta);
    const auto l1 = reference_ce(params, x, y);
    const auto l2 = reference_ce(params, aux, aux_y);
    CHECK(std::abs(combined.loss - (l1.loss + eta * l2.loss)) <= 1e-12);
    CHECK((combined.grad - (l1.grad + eta * l2.grad)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  const auto zero = NetworkParams::zeros({3, 6, 4});
  const auto uniform = odnl_loss_and_grad(zero, x, y, aux, aux_y, 2.0);
  CHECK(uniform.loss == doctest::Approx(std::log(4.0) + 2.0 * std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("stochastic label noise targets") {
  Rng rng(30, "sln");
  const auto exact = sln_target(2, 4, 0.0, rng);
  CHECK(exact.values == TargetDistribution::one_hot(2, 4).values);
  Vector mean = Vector::Zero(4);
  const int n = 100000;
  const double sigma = 0.7;
  for (int i = 0; i < n; ++i) mean += sln_target(1, 4, sigma, rng).values / n;
  const Vector e1 = TargetDistribution::one_hot(1, 4).values;
  CHECK((mean - e1).cwiseAbs().maxCoeff() <= 3.0 * sigma / std::sqrt(static_cast<double>(n)));

  // l(f, e^y + sigma z) = l(f, e^y) - sigma sum_j z_j log f_j.
  const auto params = random_params({2, 5, 4}, 31);
  const auto trace = forward(params, Vector::Constant(2, 0.3));
  const auto t = sln_target(3, 4, sigma, rng);
  const Vector z = (t.values - TargetDistribution::one_hot(3, 4).values) / sigma;
  const double expected =
      ce_loss(trace, TargetDistribution::one_hot(3, 4)) - sigma * (z.array() * trace.probs().array().log()).sum();
  CHECK(std::abs(ce_loss(trace, t) - expected) <= 1e-12);
}

TEST_CASE("outlier exposure term") {
  const Matrix aux = random_matrix(6, 3, 40, 3.0);
  const auto zero = NetworkParams::zeros({3, 4, 10});
  CHECK(oe_aux_loss(zero, aux, 1.0).loss == doctest::Approx(std::log(10.0)).epsilon(1e-14));
  const auto params = random_params({3, 5, 4}, 41);
  const auto off = oe_aux_loss(params, aux, 0.0);
  CHECK(off.loss == 0.0);
  CHECK(off.grad.isZero());
  // lambda * mean over rows of the mean over j of one-hot CE gradients.
  const auto oe = oe_aux_loss(params, aux, 0.5);
  GradientVector ref = GradientVector::Zero(static_cast<Eigen::Index>(params.parameter_count()));
  for (int j = 0; j < 4; ++j) ref += reference_ce(params, aux, std::vector<int>(6, j)).grad / 4.0;
  CHECK((oe.grad - 0.5 * ref).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("forward loss correction") {
  const auto params = random_params({3, 5, 3}, 50);
  const Vector x = (Vector(3) << 0.4, -1.2, 0.8).finished();
  const auto trace = forward(params, x);
  const auto plain = forward_correction_loss(params, x, 1, TransitionMatrix::identity(3));
  CHECK(plain.loss == doctest::Approx(ce_loss(trace, TargetDistribution::one_hot(1, 3))).epsilon(1e-14));
  CHECK((plain.grad - backward(params, trace, TargetDistribution::one_hot(1, 3))).cwiseAbs().maxCoeff() <= 1e-14);

  TransitionMatrix t;
  t.values = (Matrix(3, 3) << 0.6, 0.3, 0.1, 0.2, 0.7, 0.1, 0.25, 0.25, 0.5).finished();
  const auto zero = NetworkParams::zeros({3, 5, 3});
  // Uniform p: (T^T p)_2 is the mean of column 2.
  CHECK(forward_correction_loss(zero, x, 2, t).loss == doctest::Approx(-std::log(0.7 / 3.0)).epsilon(1e-14));

  // Finite differences of -log (T^T p)_y.
  const auto corrected = forward_correction_loss(params, x, 2, t);
  const GradientVector flat = params.flatten();
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    NetworkParams plus = params;
    NetworkParams minus = params;
    GradientVector fp = flat;
    GradientVector fm = flat;
    fp[i] += h;
    fm[i] -= h;
    plus.assign(fp);
    minus.assign(fm);
    const auto loss_of = [&](const NetworkParams& p) {
      const Vector q = t.values.transpose() * forward(p, x).probs();
      return -std::log(q[2]);
    };
    const double fd = (loss_of(plus) - loss_of(minus)) / (2 * h);
    const double scale = std::max(std::abs(fd), std::abs(corrected.grad[i]));
    if (scale > 1e-7) CHECK(std::abs(fd - corrected.grad[i]) / scale <= 1e-5);
  }
}

TEST_CASE("co-teaching small-loss selection") {
  const std::vector<double> a{0.3, 0.2, 4.0, 1.0};
  const std::vector<double> b{0.1, 5.0, 0.2, 3.0};
  const auto all = coteach_select(a, b, 1.0);
  CHECK(all.for_a.size() == 4);
  CHECK(all.for_b.size() == 4);
  const auto half = coteach_select(a, b, 0.5);
  std::vector<std::size_t> for_a = half.for_a;
  std::vector<std::size_t> for_b = half.for_b;
  std::sort(for_a.begin(), for_a.end());
  std::sort(for_b.begin(), for_b.end());
  CHECK(for_a == std::vector<std::size_t>{0, 2});
  CHECK(for_b == std::vector<std::size_t>{0, 1});
  const auto ties = coteach_select({1.0, 1.0, 1.0}, {2.0, 2.0, 2.0}, 0.5);
  std::vector<std::size_t> tie_a = ties.for_a;
  std::sort(tie_a.begin(), tie_a.end());
  CHECK(tie_a == std::vector<std::size_t>{0, 1});

  TrainConfig c;
  c.coteach_forget_rate = 0.4;
  c.coteach_warmup = 10;
  CHECK(coteach_keep_fraction(c, 0) == 1.0);
  CHECK(coteach_keep_fraction(c, 5) == doctest::Approx(0.8));
  CHECK(coteach_keep_fraction(c, 50) == doctest::Approx(0.6));
}

TEST_CASE("property: co-teaching keeps ceil(keep * n) indices") {
  Rng gen(60, "property_coteach");
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + gen.uniform_index(60);
    std::vector<double> a(n);
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(gen.uniform_index(5));
      b[i] = gen.uniform();
    }
    const double keep = gen.uniform();
    const auto sel = coteach_select(a, b, keep);
    const auto expected = static_cast<std::size_t>(std::ceil(keep * static_cast<double>(n) - 1e-9));
    CHECK(sel.for_a.size() == expected);
    CHECK(sel.for_b.size() == expected);
    // Every chosen index for A has a peer loss no larger than any unchosen one.
    std::vector<bool> chosen(n, false);
    for (auto i : sel.for_a) chosen[i] = true;
    double worst_in = -INFINITY;
    double best_out = INFINITY;
    for (std::size_t i = 0; i < n; ++i) (chosen[i] ? worst_in : best_out) = chosen[i] ? std::max(worst_in, b[i]) : std::min(best_out, b[i]);
    CHECK(worst_in <= best_out);
  }
}

TEST_CASE("learning-rate schedule") {
  LrSchedule s;
  CHECK(s.rate_at(0) == 0.1);
  CHECK(s.rate_at(79) == 0.1);
  CHECK(s.rate_at(80) == doctest::Approx(0.01));
  CHECK(s.rate_at(140) == doctest::Approx(0.001));
}

TEST_CASE("training is deterministic and eta = 0 reduces ODNL to standard") {
  Fixture f;
  TrainInputs in;
  in.train = &f.train;
  in.pool = &f.pool;
  in.test = &f.test;
  const auto a = train(quick_config(Regularizer::Odnl, 5), in);
  const auto b = train(quick_config(Regularizer::Odnl, 5), in);
  CHECK(a.params == b.params);
  std::stringstream ma;
  std::stringstream mb;
  write_metrics_csv(ma, a.metrics);
  write_metrics_csv(mb, b.metrics);
  CHECK(ma.str() == mb.str());

  auto zero_eta = quick_config(Regularizer::Odnl, 6);
  zero_eta.eta = 0.0;
  const auto odnl0 = train(zero_eta, in);
  const auto standard = train(quick_config(Regularizer::Standard, 6), in);
  CHECK(odnl0.params == standard.params);
  std::stringstream m0;
  std::stringstream ms;
  write_metrics_csv(m0, odnl0.metrics);
  write_metrics_csv(ms, standard.metrics);
  CHECK(m0.str() == ms.str());
}

TEST_CASE("every regularizer trains and records metrics") {
  Fixture f;
  TrainInputs in;
  in.train = &f.train;
  in.pool = &f.pool;
  in.test = &f.test;
  for (auto r : {Regularizer::Standard, Regularizer::Odnl, Regularizer::Sln, Regularizer::Oe,
                 Regularizer::ForwardCorrection, Regularizer::Coteaching}) {
    CAPTURE(to_string(r));
    auto c = quick_config(r, 7);
    c.epochs = 20;
    c.lr.decay_epochs = {15};
    c.hidden_widths = {32};
    c.lr.initial = 0.02;
    c.compose_odnl = r != Regularizer::Odnl && r != Regularizer::Standard;
    const auto result = train(c, in);
    REQUIRE(result.metrics.size() == 20);
    CHECK(result.params.all_finite());
    for (const auto& m : result.metrics) {
      CHECK(std::isfinite(m.train_loss));
      CHECK(std::isfinite(m.noisy_loss));
      CHECK(std::isfinite(m.aux_loss) == c.uses_pool());
      CHECK(std::isnan(m.val_acc));
      CHECK(m.test_acc >= 0.0);
    }
    CAPTURE(result.metrics.back().test_acc);
    CHECK(result.metrics.back().test_acc > 0.5);
  }
}

TEST_CASE("auxiliary loss stays near ln k when outputs on the pool are uniform") {
  Fixture f;
  TrainInputs in;
  in.train = &f.train;
  in.pool = &f.pool;
  auto c = quick_config(Regularizer::Odnl, 8);
  c.epochs = 20;
  const auto result = train(c, in);
  CHECK(result.metrics.back().aux_loss >= std::log(4.0) - 0.05);
}

TEST_CASE("training rejects bad inputs") {
  Fixture f;
  TrainInputs in;
  in.train = &f.train;
  auto c = quick_config(Regularizer::Odnl, 9);
  CHECK_THROWS_AS(train(c, in), ConfigError);  // pool required
  c.regularizer = Regularizer::Standard;
  c.train_batch = 0;
  CHECK_THROWS_AS(train(c, in), ConfigError);
  CHECK_THROWS_AS(parse_regularizer("dropout"), ConfigError);
  CHECK(parse_aux_label_mode(to_string(AuxLabelMode::Fixed)) == AuxLabelMode::Fixed);
  auto diverge = quick_config(Regularizer::Standard, 9);
  diverge.lr.initial = 1e30;
  CHECK_THROWS_AS(train(diverge, in), NumericError);
}

TEST_CASE("eta tuning") {
  Fixture f;
  auto c = quick_config(Regularizer::Standard, 10);
  const auto single = tune_eta(c, f.train, &f.pool, 0.2, {2.5});
  CHECK(single.best_eta == 2.5);
  CHECK(single.candidates.size() == 1);
  // Identical candidates tie; the smaller one wins.
  const auto tie = tune_eta(c, f.train, &f.pool, 0.2, {1.0, 1.0});
  CHECK(tie.best_eta == 1.0);
  const auto grid = tune_eta(c, f.train, &f.pool, 0.2, {0.0, 1.0});
  CHECK(grid.candidates.size() == 2);
  for (const auto& cand : grid.candidates) {
    CHECK(cand.final_val_acc >= 0.0);
    CHECK(cand.final_val_acc <= 1.0);
  }
  CHECK(with_odnl_eta(c, 1.0).regularizer == Regularizer::Odnl);
  auto cot = c;
  cot.regularizer = Regularizer::Coteaching;
  CHECK(with_odnl_eta(cot, 1.0).compose_odnl);
  const auto split = validation_split(100, 0.2, 3);
  CHECK(split.first.size() == 80);
  CHECK(split.second.size() == 20);
}

TEST_CASE("metrics and parameter files round-trip") {
  std::vector<EpochMetrics> metrics{{0, 1.5, 1.0, 2.0, std::nan(""), 0.25, 0.5}, {1, 0.1 + 0.2, 0.3, 0.4, 1.3, 0.6, 0.7}};
  std::stringstream buf;
  write_metrics_csv(buf, metrics, {"# a=b"});
  const auto back = read_metrics_csv(buf);
  REQUIRE(back.size() == 2);
  CHECK(back[1].train_loss == metrics[1].train_loss);
  CHECK(std::isnan(back[0].aux_loss));
  const auto params = random_params({3, 4, 2}, 70);
  std::stringstream pbuf;
  write_params(pbuf, params);
  CHECK(read_params(pbuf) == params);
  std::stringstream bad("layers 3 2\n1\n2\n");
  CHECK_THROWS_AS(read_params(bad), InputError);
}

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

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "odnl/error.hpp"
#include "odnl/netcore.hpp"
#include "odnl/rng.hpp"

using namespace odnl;

namespace {

NetworkParams random_params(std::vector<int> sizes, std::uint64_t seed, double bias_scale = 0.1) {
  Rng rng(seed, "test_params");
  NetworkParams p = NetworkParams::glorot(sizes, rng.split("init"));
  GradientVector flat = p.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] += bias_scale * rng.normal();
  p.assign(flat);
  return p;
}

Vector random_vector(int n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed, "test_vector");
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

bool away_from_kinks(const ForwardTrace& t, double margin) {
  for (std::size_t l = 0; l + 1 < t.layer_count(); ++l) {
    if ((t.pre_activations[l].array().abs() < margin).any()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("zero network outputs the uniform distribution") {
  const auto params = NetworkParams::zeros({3, 5, 4});
  const auto trace = forward(params, random_vector(3, 1));
  for (int j = 0; j < 4; ++j) CHECK(trace.probs()[j] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(ce_loss(trace, TargetDistribution::one_hot(2, 4)) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("single layer with zero pre-activation gives even odds") {
  auto params = NetworkParams::zeros({2, 2});
  params.layer(0).weight = Matrix::Identity(2, 2);
  Vector x = Vector::Zero(2);
  const auto trace = forward(params, x);
  CHECK(trace.probs()[0] == 0.5);
  CHECK(trace.probs()[1] == 0.5);
}

TEST_CASE("softmax is normalized and strictly positive for random nets") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto params = random_params({4, 6, 6, 5}, s);
    const auto trace = forward(params, random_vector(4, 100 + s, 5.0));
    CHECK(std::abs(trace.probs().sum() - 1.0) <= 1e-9);
    CHECK((trace.probs().array() > 0.0).all());
  }
  const Vector big = (Vector(3) << 1000.0, -1000.0, 999.0).finished();
  const Vector p = softmax(big);
  CHECK(p.allFinite());
  CHECK(p.sum() == doctest::Approx(1.0));
}

TEST_CASE("cross-entropy analytic values") {
  ForwardTrace t;
  t.activations.push_back(Vector::Zero(1));
  t.activations.push_back((Vector(4) << 0.7, 0.1, 0.1, 0.1).finished());
  CHECK(ce_loss(t, TargetDistribution::one_hot(0, 4)) == doctest::Approx(0.356675).epsilon(1e-6));
  ForwardTrace half;
  half.activations.push_back(Vector::Zero(1));
  half.activations.push_back((Vector(2) << 0.5, 0.5).finished());
  CHECK(ce_loss(half, TargetDistribution{(Vector(2) << 0.5, 0.5).finished()}) ==
        doctest::Approx(0.693147).epsilon(1e-6));
}

TEST_CASE("cross-entropy is linear in the target") {
  const auto params = random_params({3, 4, 3}, 7);
  const auto trace = forward(params, random_vector(3, 8));
  const TargetDistribution t1{(Vector(3) << 1.0, 0.0, 0.0).finished()};
  const TargetDistribution t2{(Vector(3) << -0.3, 0.8, 1.7).finished()};
  const double a = 2.5;
  const double b = -0.75;
  const TargetDistribution mix{a * t1.values + b * t2.values};
  CHECK(std::abs(ce_loss(trace, mix) - (a * ce_loss(trace, t1) + b * ce_loss(trace, t2))) <= 1e-12);
  const auto g1 = backward(params, trace, t1);
  const auto gc = backward(params, trace, TargetDistribution{3.0 * t1.values});
  CHECK((gc - 3.0 * g1).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("target equal to the prediction gives a zero logit residual") {
  const auto params = random_params({3, 5, 3}, 11);
  const auto trace = forward(params, random_vector(3, 12));
  const auto g = backward(params, trace, TargetDistribution{trace.probs()});
  // Output layer block: weights then biases of the last layer.
  const std::size_t last = params.depth() - 1;
  const auto off = static_cast<Eigen::Index>(params.layer_offset(last));
  const auto n = static_cast<Eigen::Index>(params.layer_parameter_count(last));
  CHECK(g.segment(off, n).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("backward matches central finite differences on a small net") {
  const auto params = random_params({3, 5, 3}, 21);
  Vector x;
  ForwardTrace trace;
  std::uint64_t s = 22;
  do {
    x = random_vector(3, s++);
    trace = forward(params, x);
  } while (!away_from_kinks(trace, 1e-4));
  const auto target = TargetDistribution::one_hot(1, 3);
  const auto g = backward(params, trace, target);
  const auto fd = finite_diff_gradient(params, as_span(x), target, 1e-5);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double scale = std::max(std::abs(g[i]), std::abs(fd[i]));
    if (scale > 1e-8) CHECK(std::abs(g[i] - fd[i]) / scale <= 1e-5);
  }
}

TEST_CASE("finite differences on a one-parameter logistic model") {
  // Two-class net whose only non-zero parameter is w in logit_0 = w x.
  auto params = NetworkParams::zeros({1, 2});
  params.layer(0).weight(0, 0) = 0.3;
  const Vector x = (Vector(1) << 1.7).finished();
  const auto target = TargetDistribution::one_hot(0, 2);
  const auto fd = finite_diff_gradient(params, as_span(x), target, 1e-5);
  // loss = -log sigmoid(w x); d/dw = -(1 - sigmoid(w x)) x.
  const double sig = 1.0 / (1.0 + std::exp(-0.3 * 1.7));
  CHECK(std::abs(fd[0] - (-(1.0 - sig) * 1.7)) <= 1e-8);
}

TEST_CASE("finite-difference error shrinks quadratically with h") {
  // Softmax of a linear model is smooth everywhere.
  const auto params = random_params({2, 3}, 31, 0.5);
  const Vector x = random_vector(2, 32, 2.0);
  const auto target = TargetDistribution::one_hot(2, 3);
  const auto exact = backward(params, forward(params, x), target);
  const double e1 = (finite_diff_gradient(params, as_span(x), target, 1e-2) - exact).norm();
  const double e2 = (finite_diff_gradient(params, as_span(x), target, 5e-3) - exact).norm();
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("output Jacobian rows sum to zero and match finite differences") {
  const auto params = random_params({3, 4, 4}, 41);
  Vector x;
  ForwardTrace trace;
  std::uint64_t s = 42;
  do {
    x = random_vector(3, s++);
    trace = forward(params, x);
  } while (!away_from_kinks(trace, 1e-3));
  const Matrix jac = output_jacobian(params, trace);
  CHECK(jac.colwise().sum().cwiseAbs().maxCoeff() <= 1e-9);
  const double h = 1e-6;
  GradientVector flat = params.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    NetworkParams plus = params;
    NetworkParams minus = params;
    GradientVector fp = flat;
    GradientVector fm = flat;
    fp[i] += h;
    fm[i] -= h;
    plus.assign(fp);
    minus.assign(fm);
    const Vector diff = (forward(plus, x).probs() - forward(minus, x).probs()) / (2 * h);
    for (int j = 0; j < 4; ++j) {
      const double scale = std::max(std::abs(diff[j]), std::abs(jac(j, i)));
      if (scale > 1e-7) CHECK(std::abs(diff[j] - jac(j, i)) / scale <= 1e-5);
    }
  }
}

TEST_CASE("single-output net has an all-zero Jacobian") {
  const auto params = random_params({2, 3, 1}, 51);
  const auto trace = forward(params, random_vector(2, 52));
  CHECK(trace.probs()[0] == 1.0);
  const Matrix jac = output_jacobian(params, trace);
  CHECK(jac.rows() == 1);
  CHECK(jac.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("flatten order is layer-major, weights row-major then biases") {
  auto params = NetworkParams::zeros({2, 3, 2});
  params.layer(0).weight(0, 1) = 1.0;   // index 1
  params.layer(0).weight(1, 0) = 2.0;   // index 2
  params.layer(0).bias(2) = 3.0;        // 6 weights then bias 2 -> index 8
  params.layer(1).weight(1, 2) = 4.0;   // offset 9, row 1 col 2 -> 9 + 5 = 14
  params.layer(1).bias(0) = 5.0;        // 9 + 6 = 15
  const auto flat = params.flatten();
  CHECK(flat.size() == 17);
  CHECK(flat[1] == 1.0);
  CHECK(flat[2] == 2.0);
  CHECK(flat[8] == 3.0);
  CHECK(flat[14] == 4.0);
  CHECK(flat[15] == 5.0);
  CHECK(params.layer_offset(1) == 9);
  NetworkParams copy = NetworkParams::zeros({2, 3, 2});
  copy.assign(flat);
  CHECK(copy == params);
}

TEST_CASE("glorot initialisation respects bounds and is deterministic") {
  const auto a = NetworkParams::glorot({10, 20, 5}, Rng(3, "init"));
  const auto b = NetworkParams::glorot({10, 20, 5}, Rng(3, "init"));
  CHECK(a == b);
  const double limit0 = std::sqrt(6.0 / 30.0);
  CHECK(a.layers()[0].weight.cwiseAbs().maxCoeff() <= limit0);
  CHECK(a.layers()[0].bias.isZero());
  const auto c = NetworkParams::glorot({10, 20, 5}, Rng(4, "init"));
  CHECK_FALSE(a == c);
}

TEST_CASE("forward is bit-for-bit deterministic and batch matches single rows") {
  const auto params = random_params({3, 6, 4}, 61);
  Matrix batch(5, 3);
  for (int i = 0; i < 5; ++i) batch.row(i) = random_vector(3, 70 + i).transpose();
  const Matrix probs = predict(params, batch);
  for (int i = 0; i < 5; ++i) {
    const Vector x = batch.row(i).transpose();
    const Vector p1 = forward(params, x).probs();
    const Vector p2 = forward(params, x).probs();
    CHECK(p1 == p2);
    CHECK((probs.row(i).transpose() - p1).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("forward rejects mismatched input dimension") {
  const auto params = NetworkParams::zeros({3, 2});
  CHECK_THROWS_AS(forward(params, Vector::Zero(4)), InputError);
}

TEST_CASE("sgd step closed forms") {
  auto params = random_params({2, 2}, 81);
  const GradientVector theta = params.flatten();
  const auto p = theta.size();

  SUBCASE("zero gradient and no decay leaves parameters unchanged") {
    SgdState state;
    sgd_step(params, GradientVector::Zero(p), {0.1, 0.9, 0.0}, state);
    CHECK(params.flatten() == theta);
  }
  SUBCASE("plain gradient descent without momentum") {
    SgdState state;
    const GradientVector g = GradientVector::Constant(p, 0.5);
    sgd_step(params, g, {0.2, 0.0, 0.0}, state);
    CHECK((params.flatten() - (theta - 0.2 * g)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("two momentum steps on a constant gradient move lr * 2.9 g") {
    SgdState state;
    const GradientVector g = GradientVector::Constant(p, 0.25);
    sgd_step(params, g, {0.1, 0.9, 0.0}, state);
    sgd_step(params, g, {0.1, 0.9, 0.0}, state);
    CHECK((theta - params.flatten() - 0.1 * 2.9 * g).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(state.step == 2);
  }
  SUBCASE("invalid options and non-finite gradients are rejected") {
    SgdState state;
    CHECK_THROWS_AS(sgd_step(params, GradientVector::Zero(p), {-0.1, 0.9, 0.0}, state), ConfigError);
    CHECK_THROWS_AS(sgd_step(params, GradientVector::Zero(p), {0.1, 1.0, 0.0}, state), ConfigError);
    GradientVector bad = GradientVector::Zero(p);
    bad[0] = std::nan("");
    CHECK_THROWS_AS(sgd_step(params, bad, {0.1, 0.9, 0.0}, state), NumericError);
  }
}

TEST_CASE("property: backward agrees with finite differences on random nets") {
  Rng gen(91, "property_nets");
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> sizes{1 + static_cast<int>(gen.uniform_index(5))};
    const int hidden = static_cast<int>(gen.uniform_index(3));
    for (int h = 0; h < hidden; ++h) sizes.push_back(1 + static_cast<int>(gen.uniform_index(8)));
    sizes.push_back(2 + static_cast<int>(gen.uniform_index(4)));
    const auto params = random_params(sizes, 1000 + trial);
    Vector x = random_vector(sizes.front(), 2000 + trial);
    auto trace = forward(params, x);
    if (!away_from_kinks(trace, 1e-4)) continue;
    ++checked;
    // Soft targets exercise the general residual (sum t) p - t.
    Vector t(sizes.back());
    for (int j = 0; j < t.size(); ++j) t[j] = gen.uniform();
    const TargetDistribution target{t};
    const auto g = backward(params, trace, target);
    const auto fd = finite_diff_gradient(params, as_span(x), target, 1e-5);
    const double rel = (g - fd).norm() / std::max(g.norm(), 1e-12);
    CHECK(rel <= 1e-6);
  }
  CHECK(checked >= 30);
}

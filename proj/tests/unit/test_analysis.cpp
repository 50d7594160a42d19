/*
 * Copyright 2026 The macs-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "macs/analysis.hpp"
#include "macs/data.hpp"
#include "macs/error.hpp"
#include "macs/model.hpp"
#include "macs/ops.hpp"
#include "macs/perturbations.hpp"
#include "test_util.hpp"

using namespace macs;
using test::random_tensor;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double svd_norm(const std::vector<double>& m, std::size_t rows, std::size_t cols) {
  const RowMat a = Eigen::Map<const RowMat>(m.data(), rows, cols);
  return Eigen::JacobiSVD<RowMat>(a).singularValues()(0);
}

// Dense matrix of x -> conv2d(x, w) (zero padding) on [in_c, h, w] inputs.
RowMat conv_matrix(const Tensor& w, std::size_t in_c, std::size_t h, std::size_t wd) {
  const std::size_t n_in = in_c * h * wd, n_out = w.dim(0) * h * wd;
  RowMat m(n_out, n_in);
  for (std::size_t j = 0; j < n_in; ++j) {
    std::vector<double> e(n_in, 0.0);
    e[j] = 1.0;
    const Tensor y = conv2d(Tensor::from({1, in_c, h, wd}, e), w, Padding::kZero);
    for (std::size_t i = 0; i < n_out; ++i) m(i, j) = y[i];
  }
  return m;
}

Model linear_model(std::size_t d, std::size_t k, const std::vector<double>& w,
                   const std::vector<double>& b) {
  Model m = Model::init(make_preset("linear", {d}, k), 0);
  std::copy(w.begin(), w.end(), m.params()[0].value.mutable_data().begin());
  std::copy(b.begin(), b.end(), m.params()[1].value.mutable_data().begin());
  return m;
}

DatasetSplit split_of(Tensor x, std::vector<int> y, std::size_t classes) {
  DatasetSplit ds;
  ds.inputs = std::move(x);
  ds.labels = std::move(y);
  ds.classes = classes;
  ds.source_index.resize(ds.labels.size());
  std::iota(ds.source_index.begin(), ds.source_index.end(), std::size_t{0});
  return ds;
}

}  // namespace

TEST(MarginStats, ZeroWeightModel) {
  Model m = Model::init(make_preset("mlp", {3}, 4), 0);
  for (auto& p : m.params())
    for (auto& v : p.value.mutable_data()) v = 0.0;
  const auto s = margin_stats(m, split_of(random_tensor({5, 3}, 1), {0, 1, 2, 3, 0}, 4));
  EXPECT_EQ(s.mean_margin, 0.0);
  EXPECT_EQ(s.mean_max_logit, 0.0);
  EXPECT_EQ(s.count, 5u);
}

TEST(MarginStats, HandSetLinear) {
  // W = [[1, 0], [0, 2]], b = (0, -1). x1 = (3, 1): f = (3, 1), y = 0, margin 2.
  // x2 = (1, 1): f = (1, 1), y = 1, margin 0.
  const Model m = linear_model(2, 2, {1, 0, 0, 2}, {0, -1});
  const auto s = margin_stats(m, split_of(Tensor::from({2, 2}, {3, 1, 1, 1}), {0, 1}, 2));
  EXPECT_DOUBLE_EQ(s.mean_margin, 1.0);
  EXPECT_DOUBLE_EQ(s.mean_max_logit, 2.0);
  EXPECT_DOUBLE_EQ(s.mean_logit_l2, (std::sqrt(10.0) + std::sqrt(2.0)) / 2.0);
  EXPECT_EQ(s.margins, (std::vector<double>{2.0, 0.0}));
  std::size_t total = 0;
  for (auto c : s.histogram.counts) total += c;
  EXPECT_EQ(total, 2u);
}

TEST(Sensitivity, ConstantModelIsZero) {
  Model m = Model::init(make_preset("mlp", {4}, 3), 0);
  for (auto& p : m.params())
    if (p.name.find("weight") != std::string::npos)
      for (auto& v : p.value.mutable_data()) v = 0.0;
  Rng rng(1);
  EXPECT_EQ(sensitivity_estimate(m, random_tensor({4}, 2), 10, 0.1, rng), 0.0);
}

TEST(Sensitivity, LinearBound) {
  // f(x) = Wx: ||W eps||_inf / ||eps|| <= max_j ||w_j||.
  const std::size_t d = 16, k = 5;
  const Tensor w = random_tensor({k, d}, 3);
  const Model m = linear_model(d, k, test::to_vec(w), std::vector<double>(k, 0.0));
  double max_row = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += w[j * d + i] * w[j * d + i];
    max_row = std::max(max_row, std::sqrt(s));
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const double est = sensitivity_estimate(m, random_tensor({d}, seed + 50), 10, 0.1, rng);
    EXPECT_LE(est, max_row * (1.0 + 3.0 / std::sqrt(static_cast<double>(d))));
    EXPECT_GT(est, 0.0);
  }
  // Large n: the average of ||W u||_inf over uniform directions settles.
  Rng r1(7), r2(8);
  const Tensor x = random_tensor({d}, 9);
  const double a = sensitivity_estimate(m, x, 20000, 0.1, r1);
  const double b = sensitivity_estimate(m, x, 20000, 0.1, r2);
  EXPECT_NEAR(a, b, 0.02 * a);
}

TEST(Sensitivity, Deterministic) {
  const Model m = Model::init(make_preset("mlp", {6}, 3), 4);
  const Tensor x = random_tensor({1, 6}, 5);
  Rng a(11), b(11);
  EXPECT_EQ(sensitivity_estimate(m, x, 10, 0.1, a), sensitivity_estimate(m, x, 10, 0.1, b));
  const auto ds = split_of(random_tensor({12, 6}, 6), std::vector<int>(12, 0), 3);
  const auto s1 = sensitivity_stats(m, ds, 3);
  const auto s2 = sensitivity_stats(m, ds, 3);
  EXPECT_EQ(s1.per_sample, s2.per_sample);
  EXPECT_EQ(s1.per_sample.size(), 12u);
}

TEST(Sensitivity, RejectsBatches) {
  const Model m = Model::init(make_preset("mlp", {6}, 3), 4);
  Rng rng(0);
  EXPECT_THROW(sensitivity_estimate(m, Tensor::zeros({2, 6}), 10, 0.1, rng), DimensionError);
  EXPECT_THROW(sensitivity_estimate(m, Tensor::zeros({6}), 0, 0.1, rng), InputError);
}

TEST(Ratio, TableValues) {
  EXPECT_NEAR(margin_sensitivity_ratio(2.31, 4.87).ratio, 0.47, 0.005);
  EXPECT_NEAR(margin_sensitivity_ratio(3.64, 3.52).ratio, 1.03, 0.005);
  EXPECT_EQ(margin_sensitivity_ratio(0.0, 2.0).ratio, 0.0);
  EXPECT_TRUE(margin_sensitivity_ratio(1.0, 0.0).infinite);
}

TEST(Ratio, MeanOfRatiosSeparate) {
  MarginStats ms;
  ms.margins = {1.0, 3.0};
  ms.mean_margin = 2.0;
  ms.count = 2;
  SensitivityStats ss;
  ss.per_sample = {1.0, 3.0};
  ss.mean_sensitivity = 2.0;
  const auto r = margin_sensitivity_ratio(ms, ss);
  EXPECT_DOUBLE_EQ(r.ratio, 1.0);
  EXPECT_DOUBLE_EQ(r.mean_of_ratios, 1.0);
  ss.per_sample = {0.5, 3.5};
  EXPECT_DOUBLE_EQ(margin_sensitivity_ratio(ms, ss).mean_of_ratios, (2.0 + 3.0 / 3.5) / 2.0);
}

TEST(CertifiedRadius, BinaryHandGeometry) {
  const Tensor w = Tensor::from({2, 2}, {1, 0, -1, 0});
  const Tensor b = Tensor::zeros({2});
  const std::vector<double> x{1, 0};
  const auto r = certified_radius_linear(w, b, x, 0);
  EXPECT_DOUBLE_EQ(r.margin, 2.0);
  EXPECT_DOUBLE_EQ(r.lipschitz, 2.0);
  EXPECT_DOUBLE_EQ(r.radius, 1.0);
  EXPECT_TRUE(r.exact);
  Rng rng(1);
  for (int t = 0; t < 10000; ++t) {
    double dx = rng.normal(), dy = rng.normal();
    const double s = rng.uniform(0.0, 0.999) / std::hypot(dx, dy);
    dx *= s, dy *= s;
    EXPECT_GT((1 + dx) * 1.0, (1 + dx) * -1.0);
  }
}

TEST(CertifiedRadius, BoundaryAndHomogeneity) {
  const Tensor w = random_tensor({4, 3}, 2);
  const Tensor b = random_tensor({4}, 3);
  const std::vector<double> x{0.2, -0.4, 0.9};
  const auto r = certified_radius_linear(w, b, x, 1);
  const auto r2 = certified_radius_linear(scalar_mul(w, 3.0), scalar_mul(b, 3.0), x, 1);
  EXPECT_NEAR(r2.margin, 3.0 * r.margin, 1e-12);
  EXPECT_NEAR(r2.lipschitz, 3.0 * r.lipschitz, 1e-12);
  EXPECT_NEAR(r2.radius, r.radius, 1e-12);
  const Tensor wb = Tensor::from({2, 1}, {1, -1});
  const std::vector<double> zero{0.0};
  EXPECT_EQ(certified_radius_linear(wb, Tensor::zeros({2}), zero, 0).radius, 0.0);
}

TEST(CertifiedRadius, RadiusIsTight) {
  // Stepping 1.01 * radius along -(w_y - w_j) flips to some class.
  const Tensor w = random_tensor({3, 4}, 4);
  const Tensor b = random_tensor({3}, 5);
  const std::vector<double> x{0.3, 0.1, -0.2, 0.5};
  const Tensor f = linear(Tensor::from({1, 4}, x), w, b);
  int y = 0;
  for (int j = 1; j < 3; ++j)
    if (f[j] > f[y]) y = j;
  const auto r = certified_radius_linear(w, b, x, y);
  bool flipped = false;
  for (int j = 0; j < 3; ++j) {
    if (j == y) continue;
    std::vector<double> dir(4);
    double nrm = 0.0;
    for (int i = 0; i < 4; ++i) dir[i] = w[y * 4 + i] - w[j * 4 + i], nrm += dir[i] * dir[i];
    nrm = std::sqrt(nrm);
    const double step = (f[y] - f[j]) / nrm * 1.01;
    std::vector<double> xp(4);
    for (int i = 0; i < 4; ++i) xp[i] = x[i] - step * dir[i] / nrm;
    const Tensor fp = linear(Tensor::from({1, 4}, xp), w, b);
    if (fp[j] > fp[y]) flipped = true;
    EXPECT_GE(step / 1.01, r.radius - 1e-12);
  }
  EXPECT_TRUE(flipped);
}

TEST(EmpiricalRadius, Examples) {
  const auto r = empirical_radius(3.64, 3.52);
  EXPECT_NEAR(r.radius, 0.517, 5e-4);
  EXPECT_FALSE(r.exact);
  EXPECT_EQ(empirical_radius(-1.0, 2.0).radius, 0.0);
  EXPECT_EQ(empirical_radius(0.0, 2.0).radius, 0.0);
  EXPECT_DOUBLE_EQ(empirical_radius(2.0, 4.0).radius, empirical_radius(2.0, 2.0).radius / 2.0);
}

TEST(PowerIteration, MatchesSvd) {
  Rng rng(10);
  for (int t = 0; t < 10; ++t) {
    const std::size_t rows = 1 + rng.index(50), cols = 1 + rng.index(50);
    std::vector<double> m(rows * cols);
    for (auto& v : m) v = rng.normal();
    const double ref = svd_norm(m, rows, cols);
    EXPECT_NEAR(power_iteration_norm(m, rows, cols, t), ref, 1e-6 * ref) << rows << "x" << cols;
  }
}

TEST(PowerIteration, ZeroMatrix) {
  EXPECT_EQ(power_iteration_norm(std::vector<double>(6, 0.0), 2, 3), 0.0);
}

TEST(Spectral, ClosedForms) {
  const std::vector<std::vector<double>> eye{{1, 0, 0, 1}};
  const std::vector<std::pair<std::size_t, std::size_t>> d2{{2, 2}};
  EXPECT_NEAR(spectral_complexity(eye, d2).complexity, std::sqrt(2.0), 1e-9);
  const std::vector<std::vector<double>> diag{{3, 0, 0, 0, 0, 0, 0, 0, 0}};
  const std::vector<std::pair<std::size_t, std::size_t>> d3{{3, 3}};
  EXPECT_NEAR(spectral_complexity(diag, d3).complexity, 3.0, 1e-9);
  // Random orthogonal k x k: R_f = sqrt(k).
  for (std::size_t k : {3u, 7u, 12u}) {
    const RowMat a = RowMat::Random(k, k);
    const RowMat q = Eigen::HouseholderQR<RowMat>(a).householderQ();
    const std::vector<std::vector<double>> qm{std::vector<double>(q.data(), q.data() + k * k)};
    const std::vector<std::pair<std::size_t, std::size_t>> dk{{k, k}};
    EXPECT_NEAR(spectral_complexity(qm, dk).complexity, std::sqrt(static_cast<double>(k)), 1e-9);
  }
}

TEST(Spectral, TenLayerMlpMatchesSvd) {
  ModelSpec s;
  s.input_shape = {8};
  std::size_t width = 8;
  Rng rng(3);
  for (int l = 0; l < 10; ++l) {
    const std::size_t out = l == 9 ? 3 : 4 + rng.index(12);
    s.layers.push_back({LayerKind::kDense, width, out, 0});
    if (l < 9) s.layers.push_back({LayerKind::kRelu});
    width = out;
  }
  const Model m = Model::init(s, 5);
  const auto r = spectral_complexity(m);
  ASSERT_EQ(r.layers.size(), 10u);
  double prod = 1.0, sum = 0.0;
  std::size_t li = 0;
  for (const auto& p : m.params()) {
    if (p.name.find("weight") == std::string::npos) continue;
    const std::vector<double> w(p.value.data().begin(), p.value.data().end());
    const double ref = svd_norm(w, p.value.dim(0), p.value.dim(1));
    EXPECT_NEAR(r.layers[li].spectral, ref, 1e-6 * ref);
    double fro = 0.0;
    for (double v : w) fro += v * v;
    fro = std::sqrt(fro);
    EXPECT_NEAR(r.layers[li].frobenius, fro, 1e-12 * fro);
    prod *= ref;
    sum += std::pow(fro / ref, 2.0 / 3.0);
    ++li;
  }
  EXPECT_NEAR(r.complexity, prod * std::pow(sum, 1.5), 1e-5 * r.complexity);
}

TEST(Spectral, ConvLayersMatchDenseOperator) {
  const Model m = Model::init(make_preset("tinycnn", {2, 6, 6}, 3), 6);
  const auto r = spectral_complexity(m);
  ASSERT_EQ(r.layers.size(), 3u);
  const Tensor& w0 = m.params()[0].value;
  const RowMat c0 = conv_matrix(w0, 2, 6, 6);
  const double s0 = Eigen::JacobiSVD<RowMat>(c0).singularValues()(0);
  // The 200-iteration budget converges slowly when the top singular values
  // of a small conv operator nearly coincide.
  EXPECT_NEAR(r.layers[0].spectral, s0, 1e-4 * s0);
  EXPECT_NEAR(r.layers[0].frobenius, c0.norm(), 1e-10 * c0.norm());
  // Second conv sees the pooled 3 x 3 map.
  const Tensor& w1 = m.params()[2].value;
  const RowMat c1 = conv_matrix(w1, w1.dim(1), 3, 3);
  const double s1 = Eigen::JacobiSVD<RowMat>(c1).singularValues()(0);
  EXPECT_NEAR(r.layers[1].spectral, s1, 1e-4 * s1);
  EXPECT_NEAR(r.layers[1].frobenius, c1.norm(), 1e-10 * c1.norm());
}

TEST(Spectral, ConvFrobeniusClosedForm) {
  const Tensor w = random_tensor({2, 3, 3, 3}, 7);
  for (auto [h, wd] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 5}, {4, 4}}) {
    const double ref = conv_matrix(w, 3, h, wd).norm();
    EXPECT_NEAR(conv_operator_frobenius(w, h, wd), ref, 1e-12 * ref);
  }
}

TEST(MarginFraction, Examples) {
  const std::vector<double> m{-1, 0.5, 2};
  EXPECT_DOUBLE_EQ(margin_fraction(m, 1.0), 2.0 / 3.0);
  EXPECT_EQ(margin_fraction(m, std::numeric_limits<double>::infinity()), 1.0);
  const std::vector<double> pos{0.1, 0.5, 2};
  EXPECT_EQ(margin_fraction(pos, 0.0), 0.0);
  const std::vector<double> tie{0.0, 1.0};
  EXPECT_EQ(margin_fraction(tie, 0.0), 0.0);  // strict inequality
  EXPECT_THROW(margin_fraction(m, -1.0), InputError);
  EXPECT_THROW(margin_fraction(m, std::nan("")), InputError);
}

TEST(MarginFraction, ModelReport) {
  const Model m = linear_model(2, 2, {1, 0, 0, 2}, {0, -1});
  const auto ds = split_of(Tensor::from({2, 2}, {3, 1, 1, 1}), {0, 1}, 2);
  const auto r = margin_fraction(m, ds, 1.0);
  EXPECT_DOUBLE_EQ(r.fraction, 0.5);
  EXPECT_DOUBLE_EQ(r.input_bound, std::sqrt(10.0));
  EXPECT_NEAR(r.spectral_complexity, 2.0 * std::pow(std::sqrt(5.0) / 2.0, 1.0), 1e-9);
  EXPECT_EQ(r.n, 2u);
}

TEST(Pinsker, Analytic) {
  const std::vector<double> p{0.3, 0.7};
  const auto same = pinsker_audit_probs(p, p, 1, 2);
  EXPECT_EQ(same.max_l1, 0.0);
  EXPECT_EQ(same.max_bound, 0.0);
  const std::vector<double> a{1, 0}, b{0.5, 0.5};
  const auto r = pinsker_audit_probs(a, b, 1, 2);
  EXPECT_DOUBLE_EQ(r.max_l1, 1.0);
  EXPECT_NEAR(r.max_bound, std::sqrt(2 * std::numbers::ln2), 1e-12);
  EXPECT_LE(r.max_slack, 1e-9);
}

TEST(Pinsker, RandomSoftmaxPairs) {
  const Tensor p = random_tensor({10000, 6}, 20, false, -6, 6);
  const Tensor q = random_tensor({10000, 6}, 21, false, -6, 6);
  const auto r = pinsker_audit_logits(p, q);
  EXPECT_EQ(r.samples, 10000u);
  EXPECT_LE(r.max_slack, 1e-9);
}

TEST(Pinsker, ViolationNamesSample) {
  // Not probability-consistent on purpose: l1 = 2 with KL 0 on row 3.
  std::vector<double> p(8, 0.5), q(8, 0.5);
  p[6] = 1.5, p[7] = -0.5;
  try {
    pinsker_audit_probs(p, q, 4, 2, 10);
    FAIL() << "expected PropertyError";
  } catch (const PropertyError& e) {
    EXPECT_NE(std::string(e.what()).find("13"), std::string::npos);
  }
}

TEST(Pinsker, ModelAudit) {
  const Model m = Model::init(make_preset("mlp", {5}, 4), 1);
  const auto ds = split_of(random_tensor({300, 5}, 22), std::vector<int>(300, 0), 4);
  Rng rng(3);
  const auto r = pinsker_audit(m, ds, [&](const Tensor& x) { return gaussian_noise(x, 0.1, rng); }, 64);
  EXPECT_EQ(r.samples, 300u);
  EXPECT_LE(r.max_slack, 1e-9);
}

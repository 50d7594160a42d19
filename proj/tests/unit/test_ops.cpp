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

#include <cmath>
#include <functional>
#include <numbers>

#include "macs/error.hpp"
#include "macs/gradcheck.hpp"
#include "macs/objectives.hpp"
#include "macs/ops.hpp"
#include "test_util.hpp"

using namespace macs;
using test::random_tensor;
using test::to_vec;

namespace {

using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

constexpr double kTol = 1e-6;

double check(const Fn& op, std::vector<Tensor> inputs, std::uint64_t seed = 11) {
  return gradcheck(project_to_scalar(op, seed), std::move(inputs)).max_rel_error;
}

// Values bounded away from 0 so kinks stay outside the h-neighbourhood.
Tensor away_from_zero(Shape shape, std::uint64_t seed) {
  Tensor t = random_tensor(std::move(shape), seed, true, 0.2, 1.0);
  Rng rng(seed + 1);
  for (auto& v : t.mutable_data()) v = rng.coin() ? v : -v;
  return t;
}

}  // namespace

TEST(Matmul, Identity) {
  const Tensor i2 = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(to_vec(matmul(i2, m)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, RowTimesColumn) {
  const Tensor r = matmul(Tensor::from({1, 2}, {1, 0}), Tensor::from({2, 1}, {0, 1}));
  ASSERT_EQ(r.shape(), (Shape{1, 1}));
  EXPECT_EQ(r[0], 0.0);
}

TEST(Matmul, ShapeMismatch) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST(Matmul, Gradcheck) {
  EXPECT_LT(check([](const auto& in) { return matmul(in[0], in[1]); },
                  {random_tensor({5, 4}, 1, true), random_tensor({4, 3}, 2, true)}),
            kTol);
}

TEST(Linear, MatchesMatmulPlusBias) {
  const Tensor x = random_tensor({3, 4}, 3);
  const Tensor w = random_tensor({2, 4}, 4);
  const Tensor b = Tensor::from({2}, {0.5, -1.0});
  const Tensor y = linear(x, w, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t o = 0; o < 2; ++o) {
      double acc = b[o];
      for (std::size_t k = 0; k < 4; ++k) acc += x[i * 4 + k] * w[o * 4 + k];
      EXPECT_NEAR(y[i * 2 + o], acc, 1e-14);
    }
  }
}

TEST(Linear, Gradcheck) {
  EXPECT_LT(check([](const auto& in) { return linear(in[0], in[1], in[2]); },
                  {random_tensor({3, 4}, 5, true), random_tensor({2, 4}, 6, true),
                   random_tensor({2}, 7, true)}),
            kTol);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  const Tensor x = random_tensor({1, 1, 3, 3}, 8);
  std::vector<double> k(9, 0.0);
  k[4] = 1.0;
  const Tensor y = conv2d(x, Tensor::from({1, 1, 3, 3}, k), Padding::kReflect);
  EXPECT_EQ(to_vec(y), to_vec(x));
}

TEST(Conv2d, ConstantImageUnderAveragingKernel) {
  const Tensor x = Tensor::full({1, 1, 5, 5}, 0.3);
  const Tensor k = random_tensor({1, 1, 3, 3}, 9, false, 0.0, 1.0);
  double s = 0.0;
  for (double v : k.data()) s += v;
  const Tensor kn = scalar_mul(k, 1.0 / s);
  for (double v : to_vec(conv2d(x, kn, Padding::kReflect))) EXPECT_NEAR(v, 0.3, 1e-14);
}

TEST(Conv2d, ZeroPaddingCorner) {
  // All-ones 3x3 kernel on all-ones 3x3 image: corner sees 4 pixels, edge 6, center 9.
  const Tensor y = conv2d(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0),
                          Padding::kZero);
  EXPECT_EQ(to_vec(y), (std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4}));
}

TEST(Conv2d, EvenKernelRejected) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 2, 2}), Padding::kZero),
               DimensionError);
}

TEST(Conv2d, GradcheckZeroPadding) {
  EXPECT_LT(check([](const auto& in) { return conv2d(in[0], in[1], Padding::kZero); },
                  {random_tensor({1, 2, 5, 5}, 10, true), random_tensor({2, 2, 3, 3}, 11, true)}),
            kTol);
}

TEST(Conv2d, GradcheckReflectPadding) {
  EXPECT_LT(check([](const auto& in) { return conv2d(in[0], in[1], Padding::kReflect); },
                  {random_tensor({2, 2, 4, 5}, 12, true), random_tensor({3, 2, 3, 3}, 13, true)}),
            kTol);
}

TEST(AddChannelBias, Gradcheck) {
  EXPECT_LT(check([](const auto& in) { return add_channel_bias(in[0], in[1]); },
                  {random_tensor({2, 3, 2, 2}, 14, true), random_tensor({3}, 15, true)}),
            kTol);
}

TEST(Elementwise, GradcheckBinary) {
  const Tensor a = random_tensor({3, 4}, 16, true);
  const Tensor b = random_tensor({3, 4}, 17, true);
  EXPECT_LT(check([](const auto& in) { return add(in[0], in[1]); }, {a, b}), kTol);
  EXPECT_LT(check([](const auto& in) { return subtract(in[0], in[1]); }, {a, b}), kTol);
  EXPECT_LT(check([](const auto& in) { return mul(in[0], in[1]); }, {a, b}), kTol);
}

TEST(Elementwise, GradcheckUnary) {
  const Tensor a = away_from_zero({3, 4}, 18);
  EXPECT_LT(check([](const auto& in) { return scalar_mul(in[0], -2.5); }, {a}), kTol);
  EXPECT_LT(check([](const auto& in) { return add_scalar(in[0], 0.7); }, {a}), kTol);
  EXPECT_LT(check([](const auto& in) { return relu(in[0]); }, {a}), kTol);
  EXPECT_LT(check([](const auto& in) { return exp(in[0]); }, {a}), kTol);
  EXPECT_LT(check([](const auto& in) { return square(in[0]); }, {a}), kTol);
}

TEST(Elementwise, PowScalar) {
  const Tensor a = random_tensor({6}, 19, true, 0.2, 2.0);
  EXPECT_LT(check([](const auto& in) { return pow_scalar(in[0], 2.0); }, {a}), kTol);
  EXPECT_LT(check([](const auto& in) { return pow_scalar(in[0], 0.5); }, {a}), kTol);
  const Tensor z = Tensor::from({1}, {0.0}, true);
  sum(pow_scalar(z, 2.0)).backward();
  EXPECT_EQ(z.grad()[0], 0.0);
}

TEST(Elementwise, ShapeMismatch) {
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST(Reductions, SumMeanRowSum) {
  const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(sum(a).item(), 21.0);
  EXPECT_EQ(mean(a).item(), 3.5);
  EXPECT_EQ(to_vec(row_sum(a)), (std::vector<double>{6, 15}));
}

TEST(Reductions, Gradcheck) {
  const Tensor a = random_tensor({3, 4}, 20, true);
  EXPECT_LT(check([](const auto& in) { return sum(in[0]); }, {a}), kTol);
  EXPECT_LT(check([](const auto& in) { return mean(in[0]); }, {a}), kTol);
  EXPECT_LT(check([](const auto& in) { return row_sum(in[0]); }, {a}), kTol);
}

TEST(MaxOverAxis, ValuesAndGradcheck) {
  const Tensor a = Tensor::from({2, 3}, {1, 5, 2, 7, 0, 3});
  EXPECT_EQ(to_vec(max_over_axis(a, 1)), (std::vector<double>{5, 7}));
  EXPECT_EQ(to_vec(max_over_axis(a, 0)), (std::vector<double>{7, 5, 3}));
  const Tensor r = random_tensor({4, 5}, 21, true);
  EXPECT_LT(check([](const auto& in) { return max_over_axis(in[0], 1); }, {r}), kTol);
  EXPECT_LT(check([](const auto& in) { return max_over_axis(in[0], 0); }, {r}), kTol);
}

TEST(MaxOverAxis, TieRoutesToFirstIndex) {
  Tensor a = Tensor::from({1, 3}, {2, 2, 1}, true);
  sum(max_over_axis(a, 1)).backward();
  EXPECT_EQ(to_vec(Tensor::from({3}, {a.grad()[0], a.grad()[1], a.grad()[2]})),
            (std::vector<double>{1, 0, 0}));
}

TEST(Softmax, Symmetric) {
  const Tensor s = softmax(Tensor::from({2}, {0, 0}));
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(LogSumExp, NoOverflow) {
  const double v = log_sum_exp(Tensor::from({2}, {1000, 1000})).item();
  EXPECT_NEAR(v, 1000.0 + std::numbers::ln2, 1e-12);
}

TEST(LogSoftmax, ConsistentWithSoftmax) {
  const Tensor a = random_tensor({3, 5}, 22, false, -5, 5);
  const Tensor ls = log_softmax(a);
  const Tensor s = softmax(a);
  for (std::size_t i = 0; i < 15; ++i) EXPECT_NEAR(std::exp(ls[i]), s[i], 1e-14);
}

TEST(RowWise, Gradcheck) {
  const Tensor a = random_tensor({3, 5}, 23, true, -3, 3);
  EXPECT_LT(check([](const auto& in) { return log_sum_exp(in[0]); }, {a}), kTol);
  EXPECT_LT(check([](const auto& in) { return softmax(in[0]); }, {a}), kTol);
  EXPECT_LT(check([](const auto& in) { return log_softmax(in[0]); }, {a}), kTol);
}

TEST(Maxpool2, ValuesAndGradcheck) {
  const Tensor x = Tensor::from({1, 1, 2, 4}, {1, 4, 2, 0, 3, 2, 5, 1});
  EXPECT_EQ(to_vec(maxpool2(x)), (std::vector<double>{4, 5}));
  const Tensor odd = Tensor::zeros({1, 1, 5, 5});
  EXPECT_EQ(maxpool2(odd).shape(), (Shape{1, 1, 2, 2}));
  EXPECT_LT(check([](const auto& in) { return maxpool2(in[0]); },
                  {random_tensor({2, 2, 4, 4}, 24, true)}),
            kTol);
}

TEST(Flatten, ShapeAndGradcheck) {
  const Tensor x = random_tensor({2, 3, 2, 2}, 25, true);
  EXPECT_EQ(flatten(x).shape(), (Shape{2, 12}));
  EXPECT_LT(check([](const auto& in) { return flatten(in[0]); }, {x}), kTol);
}

TEST(Pick, ValuesAndGradcheck) {
  const std::vector<int> y{2, 0, 1};
  const Tensor a = random_tensor({3, 4}, 26, true);
  const Tensor p = pick(a, y);
  EXPECT_EQ(p[0], a[2]);
  EXPECT_EQ(p[1], a[4]);
  EXPECT_EQ(p[2], a[9]);
  EXPECT_LT(check([&](const auto& in) { return pick(in[0], y); }, {a}), kTol);
  EXPECT_LT(check([&](const auto& in) { return max_excluding(in[0], y); }, {a}), kTol);
}

TEST(Pick, LabelOutOfRange) {
  const std::vector<int> y{4};
  EXPECT_THROW(pick(Tensor::zeros({1, 4}), y), InputError);
}

TEST(MaxExcluding, SkipsLabel) {
  const std::vector<int> y{0, 1};
  const Tensor a = Tensor::from({2, 3}, {9, 1, 2, 1, 9, 2});
  EXPECT_EQ(to_vec(max_excluding(a, y)), (std::vector<double>{2, 2}));
}

TEST(Composite, CeOfDenseReluDense) {
  const std::vector<int> y{0, 2, 1, 2};
  const Fn f = [&](const std::vector<Tensor>& in) {
    return cross_entropy(linear(relu(linear(in[0], in[1], in[2])), in[3], in[4]), y);
  };
  const double err = gradcheck(f, {random_tensor({4, 3}, 27, true), away_from_zero({5, 3}, 28),
                                   random_tensor({5}, 29, true), random_tensor({3, 5}, 30, true),
                                   random_tensor({3}, 31, true)})
                         .max_rel_error;
  EXPECT_LT(err, 1e-4);
}

TEST(Gradcheck, DetectsWrongBackward) {
  // A deliberately wrong rule (derivative 1 instead of 2x) must be reported.
  const Fn bad = [](const std::vector<Tensor>& in) {
    const Tensor& x = in[0];
    std::vector<double> v(x.data().begin(), x.data().end());
    for (auto& e : v) e *= e;
    return sum(Tensor::make_result(x.shape(), std::move(v), {x}, "bad_square",
                                   [](const auto&, std::span<const double> g, auto grad_in) {
                                     for (std::size_t i = 0; i < g.size(); ++i)
                                       (*grad_in[0])[i] += g[i];
                                   }));
  };
  EXPECT_GT(gradcheck(bad, {random_tensor({3}, 32, true, 1.0, 2.0)}).max_rel_error, 0.1);
}

TEST(Padding, Parse) {
  EXPECT_EQ(parse_padding("zero"), Padding::kZero);
  EXPECT_EQ(parse_padding("reflect"), Padding::kReflect);
  EXPECT_THROW(parse_padding("wrap"), ConfigError);
}

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
#include <omp.h>

#include <Eigen/Dense>
#include <vector>

#include "macs/kernels.hpp"
#include "macs/rng.hpp"

using namespace macs;
using namespace macs::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class KernelThreads : public ::testing::Test {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(4);
  }
  void TearDown() override { omp_set_num_threads(saved_); }
  int saved_ = 1;
};

// Naive direct sum over the padded input.
std::vector<double> conv_oracle(const ConvShape& s, const std::vector<double>& xpad,
                                const std::vector<double>& w) {
  std::vector<double> y(s.batch * s.out_ch * s.h * s.w, 0.0);
  const std::size_t ph = s.padded_h(), pw = s.padded_w();
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t o = 0; o < s.out_ch; ++o)
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < s.in_ch; ++c)
            for (std::size_t a = 0; a < s.kh; ++a)
              for (std::size_t b = 0; b < s.kw; ++b)
                acc += xpad[((n * s.in_ch + c) * ph + i + a) * pw + j + b] *
                       w[((o * s.in_ch + c) * s.kh + a) * s.kw + b];
          y[((n * s.out_ch + o) * s.h + i) * s.w + j] = acc;
        }
  return y;
}

}  // namespace

TEST_F(KernelThreads, ParallelRuns) { EXPECT_GE(max_threads(), 1); }

TEST_F(KernelThreads, GemmMatchesEigenAllTransposes) {
  for (int ta = 0; ta < 2; ++ta) {
    for (int tb = 0; tb < 2; ++tb) {
      const GemmShape s{7, 5, 6, ta == 1, tb == 1};
      const auto a = random_vec(s.m * s.k, 1 + ta);
      const auto b = random_vec(s.k * s.n, 3 + tb);
      std::vector<double> c(s.m * s.n);
      serial::gemm(s, a, b, c);
      RowMat ea = s.trans_a ? RowMat(Eigen::Map<const RowMat>(a.data(), s.k, s.m).transpose())
                            : RowMat(Eigen::Map<const RowMat>(a.data(), s.m, s.k));
      RowMat eb = s.trans_b ? RowMat(Eigen::Map<const RowMat>(b.data(), s.n, s.k).transpose())
                            : RowMat(Eigen::Map<const RowMat>(b.data(), s.k, s.n));
      const RowMat ec = ea * eb;
      for (std::size_t i = 0; i < s.m; ++i)
        for (std::size_t j = 0; j < s.n; ++j) EXPECT_NEAR(c[i * s.n + j], ec(i, j), 1e-13);
    }
  }
}

TEST_F(KernelThreads, GemmSerialParallelBitwise) {
  for (int ta = 0; ta < 2; ++ta) {
    for (int tb = 0; tb < 2; ++tb) {
      const GemmShape s{61, 37, 43, ta == 1, tb == 1};
      const auto a = random_vec(s.m * s.k, 10 + ta);
      const auto b = random_vec(s.k * s.n, 20 + tb);
      std::vector<double> c1(s.m * s.n), c2(s.m * s.n, 99.0), c3(s.m * s.n);
      serial::gemm(s, a, b, c1);
      parallel::gemm(s, a, b, c2);
      gemm(s, a, b, c3);
      EXPECT_EQ(c1, c2);
      EXPECT_EQ(c1, c3);
    }
  }
}

TEST_F(KernelThreads, GemmOverwritesOutput) {
  const GemmShape s{2, 2, 1};
  const std::vector<double> a{1, 2}, b{3, 4};
  std::vector<double> c(4, 100.0);
  serial::gemm(s, a, b, c);
  EXPECT_EQ(c, (std::vector<double>{3, 4, 6, 8}));
}

TEST_F(KernelThreads, ConvForwardMatchesOracle) {
  ConvShape s;
  s.batch = 2, s.in_ch = 3, s.out_ch = 4, s.h = 6, s.w = 5, s.kh = 3, s.kw = 3;
  const auto xpad = random_vec(s.batch * s.in_ch * s.padded_h() * s.padded_w(), 30);
  const auto w = random_vec(s.out_ch * s.in_ch * s.kh * s.kw, 31);
  std::vector<double> y(s.batch * s.out_ch * s.h * s.w);
  serial::conv2d_forward(s, xpad, w, y);
  const auto ref = conv_oracle(s, xpad, w);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-13);
}

TEST_F(KernelThreads, ConvBackwardIsAdjoint) {
  // <conv(x), g> == <x, conv_backward_input(g)>, and the weight gradient
  // satisfies the same identity in w.
  ConvShape s;
  s.batch = 2, s.in_ch = 2, s.out_ch = 3, s.h = 5, s.w = 4, s.kh = 3, s.kw = 3;
  const std::size_t nx = s.batch * s.in_ch * s.padded_h() * s.padded_w();
  const std::size_t nw = s.out_ch * s.in_ch * s.kh * s.kw;
  const std::size_t ny = s.batch * s.out_ch * s.h * s.w;
  const auto xpad = random_vec(nx, 40), w = random_vec(nw, 41), g = random_vec(ny, 42);
  std::vector<double> y(ny), gx(nx, 0.0), gw(nw, 0.0);
  serial::conv2d_forward(s, xpad, w, y);
  serial::conv2d_backward_input(s, g, w, gx);
  serial::conv2d_backward_weight(s, g, xpad, gw);
  double lhs = 0, rx = 0, rw = 0;
  for (std::size_t i = 0; i < ny; ++i) lhs += y[i] * g[i];
  for (std::size_t i = 0; i < nx; ++i) rx += xpad[i] * gx[i];
  for (std::size_t i = 0; i < nw; ++i) rw += w[i] * gw[i];
  EXPECT_NEAR(lhs, rx, 1e-11);
  EXPECT_NEAR(lhs, rw, 1e-11);
}

TEST_F(KernelThreads, ConvSerialParallelBitwise) {
  ConvShape s;
  s.batch = 5, s.in_ch = 3, s.out_ch = 7, s.h = 9, s.w = 8, s.kh = 3, s.kw = 5;
  const std::size_t nx = s.batch * s.in_ch * s.padded_h() * s.padded_w();
  const std::size_t nw = s.out_ch * s.in_ch * s.kh * s.kw;
  const std::size_t ny = s.batch * s.out_ch * s.h * s.w;
  const auto xpad = random_vec(nx, 50), w = random_vec(nw, 51), g = random_vec(ny, 52);

  std::vector<double> y1(ny), y2(ny);
  serial::conv2d_forward(s, xpad, w, y1);
  parallel::conv2d_forward(s, xpad, w, y2);
  EXPECT_EQ(y1, y2);

  std::vector<double> gx1(nx, 0.0), gx2(nx, 0.0);
  serial::conv2d_backward_input(s, g, w, gx1);
  parallel::conv2d_backward_input(s, g, w, gx2);
  EXPECT_EQ(gx1, gx2);

  std::vector<double> gw1(nw, 0.0), gw2(nw, 0.0);
  serial::conv2d_backward_weight(s, g, xpad, gw1);
  parallel::conv2d_backward_weight(s, g, xpad, gw2);
  EXPECT_EQ(gw1, gw2);
}

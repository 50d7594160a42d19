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

#ifndef MACS_KERNELS_HPP
#define MACS_KERNELS_HPP

#include <cstddef>
#include <span>

// Dense inner loops behind matmul and conv2d.
//
// Each kernel exists twice: `serial` is the reference, `parallel` splits the
// outermost independent loop across OpenMP threads. Every output element is
// written by exactly one thread and accumulated in the same order as the
// serial loop, so both variants are bitwise identical for any thread count.
// The dispatching functions in `kernels::` pick one by problem size.

namespace macs::kernels {

/// Row-major GEMM: c[m x n] = op(a) * op(b), overwriting c.
/// op(a) is m x k (a stored k x m when trans_a), op(b) is k x n (b stored
/// n x k when trans_b).
struct GemmShape {
  std::size_t m = 0, n = 0, k = 0;
  bool trans_a = false, trans_b = false;
};

/// Stride-1 "same" cross-correlation geometry. Input tensors are passed
/// already padded: [batch, in_ch, h + 2*pad_h, w + 2*pad_w].
struct ConvShape {
  std::size_t batch = 0, in_ch = 0, out_ch = 0;
  std::size_t h = 0, w = 0;    // unpadded (= output) spatial size
  std::size_t kh = 0, kw = 0;  // odd kernel extents
  std::size_t padded_h() const { return h + kh - 1; }
  std::size_t padded_w() const { return w + kw - 1; }
};

namespace serial {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void conv2d_forward(const ConvShape& s, std::span<const double> xpad,
                    std::span<const double> weight, std::span<double> y);
void conv2d_backward_input(const ConvShape& s, std::span<const double> gy,
                           std::span<const double> weight, std::span<double> gxpad);
void conv2d_backward_weight(const ConvShape& s, std::span<const double> gy,
                            std::span<const double> xpad, std::span<double> gweight);
}  // namespace serial

namespace parallel {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void conv2d_forward(const ConvShape& s, std::span<const double> xpad,
                    std::span<const double> weight, std::span<double> y);
void conv2d_backward_input(const ConvShape& s, std::span<const double> gy,
                           std::span<const double> weight, std::span<double> gxpad);
void conv2d_backward_weight(const ConvShape& s, std::span<const double> gy,
                            std::span<const double> xpad, std::span<double> gweight);
}  // namespace parallel

/// Number of threads the parallel variants will use (1 without OpenMP).
int max_threads();

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void conv2d_forward(const ConvShape& s, std::span<const double> xpad,
                    std::span<const double> weight, std::span<double> y);
void conv2d_backward_input(const ConvShape& s, std::span<const double> gy,
                           std::span<const double> weight, std::span<double> gxpad);
void conv2d_backward_weight(const ConvShape& s, std::span<const double> gy,
                            std::span<const double> xpad, std::span<double> gweight);

}  // namespace macs::kernels

#endif  // MACS_KERNELS_HPP

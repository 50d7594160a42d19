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

#include "macs/kernels.hpp"

#include <algorithm>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace macs::kernels {

namespace {

// One output row of the GEMM. Both variants call this with identical
// arguments, which is what makes them bitwise equal.
inline void gemm_row(const GemmShape& s, const double* a, const double* b, double* c,
                     std::size_t i) {
  const std::size_t m = s.m, n = s.n, k = s.k;
  double* crow = c + i * n;
  if (!s.trans_b) {
    std::fill(crow, crow + n, 0.0);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = s.trans_a ? a[kk * m + i] : a[i * k + kk];
      const double* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  } else if (!s.trans_a) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = acc;
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += a[kk * m + i] * brow[kk];
      crow[j] = acc;
    }
  }
}

inline void conv_forward_plane(const ConvShape& s, const double* xpad, const double* weight,
                               double* y, std::size_t n, std::size_t o) {
  const std::size_t ph = s.padded_h(), pw = s.padded_w();
  double* yplane = y + (n * s.out_ch + o) * s.h * s.w;
  std::fill(yplane, yplane + s.h * s.w, 0.0);
  for (std::size_t c = 0; c < s.in_ch; ++c) {
    const double* xplane = xpad + (n * s.in_ch + c) * ph * pw;
    const double* wk = weight + (o * s.in_ch + c) * s.kh * s.kw;
    for (std::size_t i = 0; i < s.kh; ++i) {
      for (std::size_t j = 0; j < s.kw; ++j) {
        const double wv = wk[i * s.kw + j];
        for (std::size_t r = 0; r < s.h; ++r) {
          const double* xr = xplane + (r + i) * pw + j;
          double* yr = yplane + r * s.w;
          for (std::size_t q = 0; q < s.w; ++q) yr[q] += wv * xr[q];
        }
      }
    }
  }
}

inline void conv_backward_input_image(const ConvShape& s, const double* gy, const double* weight,
                                      double* gxpad, std::size_t n) {
  const std::size_t ph = s.padded_h(), pw = s.padded_w();
  double* gimg = gxpad + n * s.in_ch * ph * pw;
  std::fill(gimg, gimg + s.in_ch * ph * pw, 0.0);
  for (std::size_t o = 0; o < s.out_ch; ++o) {
    const double* gplane = gy + (n * s.out_ch + o) * s.h * s.w;
    for (std::size_t c = 0; c < s.in_ch; ++c) {
      double* gxplane = gimg + c * ph * pw;
      const double* wk = weight + (o * s.in_ch + c) * s.kh * s.kw;
      for (std::size_t i = 0; i < s.kh; ++i) {
        for (std::size_t j = 0; j < s.kw; ++j) {
          const double wv = wk[i * s.kw + j];
          for (std::size_t r = 0; r < s.h; ++r) {
            double* gxr = gxplane + (r + i) * pw + j;
            const double* gr = gplane + r * s.w;
            for (std::size_t q = 0; q < s.w; ++q) gxr[q] += wv * gr[q];
          }
        }
      }
    }
  }
}

inline void conv_backward_weight_filter(const ConvShape& s, const double* gy, const double* xpad,
                                        double* gweight, std::size_t o) {
  const std::size_t ph = s.padded_h(), pw = s.padded_w();
  for (std::size_t c = 0; c < s.in_ch; ++c) {
    for (std::size_t i = 0; i < s.kh; ++i) {
      for (std::size_t j = 0; j < s.kw; ++j) {
        double acc = 0.0;
        for (std::size_t n = 0; n < s.batch; ++n) {
          const double* gplane = gy + (n * s.out_ch + o) * s.h * s.w;
          const double* xplane = xpad + (n * s.in_ch + c) * ph * pw;
          for (std::size_t r = 0; r < s.h; ++r) {
            const double* xr = xplane + (r + i) * pw + j;
            const double* gr = gplane + r * s.w;
            for (std::size_t q = 0; q < s.w; ++q) acc += gr[q] * xr[q];
          }
        }
        gweight[((o * s.in_ch + c) * s.kh + i) * s.kw + j] = acc;
      }
    }
  }
}

constexpr std::size_t kParallelWork = std::size_t{1} << 16;

}  // namespace

namespace serial {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  for (std::size_t i = 0; i < s.m; ++i) gemm_row(s, a.data(), b.data(), c.data(), i);
}

void conv2d_forward(const ConvShape& s, std::span<const double> xpad,
                    std::span<const double> weight, std::span<double> y) {
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t o = 0; o < s.out_ch; ++o)
      conv_forward_plane(s, xpad.data(), weight.data(), y.data(), n, o);
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> gy,
                           std::span<const double> weight, std::span<double> gxpad) {
  for (std::size_t n = 0; n < s.batch; ++n)
    conv_backward_input_image(s, gy.data(), weight.data(), gxpad.data(), n);
}

void conv2d_backward_weight(const ConvShape& s, std::span<const double> gy,
                            std::span<const double> xpad, std::span<double> gweight) {
  for (std::size_t o = 0; o < s.out_ch; ++o)
    conv_backward_weight_filter(s, gy.data(), xpad.data(), gweight.data(), o);
}

}  // namespace serial

namespace parallel {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  const auto m = static_cast<std::int64_t>(s.m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    gemm_row(s, a.data(), b.data(), c.data(), static_cast<std::size_t>(i));
}

void conv2d_forward(const ConvShape& s, std::span<const double> xpad,
                    std::span<const double> weight, std::span<double> y) {
  const auto planes = static_cast<std::int64_t>(s.batch * s.out_ch);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    const auto up = static_cast<std::size_t>(p);
    conv_forward_plane(s, xpad.data(), weight.data(), y.data(), up / s.out_ch, up % s.out_ch);
  }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> gy,
                           std::span<const double> weight, std::span<double> gxpad) {
  const auto batch = static_cast<std::int64_t>(s.batch);
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < batch; ++n)
    conv_backward_input_image(s, gy.data(), weight.data(), gxpad.data(),
                              static_cast<std::size_t>(n));
}

void conv2d_backward_weight(const ConvShape& s, std::span<const double> gy,
                            std::span<const double> xpad, std::span<double> gweight) {
  const auto filters = static_cast<std::int64_t>(s.out_ch);
#pragma omp parallel for schedule(static)
  for (std::int64_t o = 0; o < filters; ++o)
    conv_backward_weight_filter(s, gy.data(), xpad.data(), gweight.data(),
                                static_cast<std::size_t>(o));
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {
bool use_parallel(std::size_t work) { return work >= kParallelWork && max_threads() > 1; }
std::size_t conv_work(const ConvShape& s) {
  return s.batch * s.in_ch * s.out_ch * s.h * s.w * s.kh * s.kw;
}
}  // namespace

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  if (use_parallel(s.m * s.n * s.k)) {
    parallel::gemm(s, a, b, c);
  } else {
    serial::gemm(s, a, b, c);
  }
}

void conv2d_forward(const ConvShape& s, std::span<const double> xpad,
                    std::span<const double> weight, std::span<double> y) {
  if (use_parallel(conv_work(s))) {
    parallel::conv2d_forward(s, xpad, weight, y);
  } else {
    serial::conv2d_forward(s, xpad, weight, y);
  }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> gy,
                           std::span<const double> weight, std::span<double> gxpad) {
  if (use_parallel(conv_work(s))) {
    parallel::conv2d_backward_input(s, gy, weight, gxpad);
  } else {
    serial::conv2d_backward_input(s, gy, weight, gxpad);
  }
}

void conv2d_backward_weight(const ConvShape& s, std::span<const double> gy,
                            std::span<const double> xpad, std::span<double> gweight) {
  if (use_parallel(conv_work(s))) {
    parallel::conv2d_backward_weight(s, gy, xpad, gweight);
  } else {
    serial::conv2d_backward_weight(s, gy, xpad, gweight);
  }
}

}  // namespace macs::kernels

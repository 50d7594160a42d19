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

#ifndef MACS_OPS_HPP
#define MACS_OPS_HPP

#include <span>
#include <string_view>

#include "macs/tensor.hpp"

// Differentiable ops. Row-wise ops (softmax, log_sum_exp, ...) treat a rank-1
// tensor as a single row and a rank-2 tensor [N, K] as N rows.

namespace macs {

enum class Padding { kZero, kReflect };

Padding parse_padding(std::string_view name);

/// a[m, k] * b[k, n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[N, in] * weight[out, in]^T + bias[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Stride-1 cross-correlation with "same" output size.
/// x[N, C, H, W], kernel[O, C, kh, kw] with odd kh, kw.
Tensor conv2d(const Tensor& x, const Tensor& kernel, Padding padding);
/// x[N, C, H, W] + bias[C] broadcast over batch and space.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
/// a^p for a >= 0, p >= 0. The derivative at a == 0 is taken as 0 unless p == 1.
Tensor pow_scalar(const Tensor& a, double p);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [N, K] -> [N].
Tensor row_sum(const Tensor& a);

/// Max of a rank-2 tensor along `axis` (0 or 1). Ties go to the first index;
/// backward routes the whole gradient there.
Tensor max_over_axis(const Tensor& a, std::size_t axis = 1);
/// Row-wise log(sum(exp)), computed with the max shift.
Tensor log_sum_exp(const Tensor& a);
Tensor softmax(const Tensor& a);
/// Row-wise x - log_sum_exp(x).
Tensor log_softmax(const Tensor& a);

/// 2x2 max pooling with stride 2 (odd trailing rows/cols are dropped).
Tensor maxpool2(const Tensor& x);
/// [N, ...] -> [N, prod(...)].
Tensor flatten(const Tensor& x);

/// out[i] = a[i, labels[i]].
Tensor pick(const Tensor& a, std::span<const int> labels);
/// out[i] = max_{j != labels[i]} a[i, j] (first index on ties).
Tensor max_excluding(const Tensor& a, std::span<const int> labels);

}  // namespace macs

#endif  // MACS_OPS_HPP

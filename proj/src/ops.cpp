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

#include "macs/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "macs/error.hpp"
#include "macs/kernels.hpp"

namespace macs {

using detail::Node;
using GradIn = std::span<std::vector<double>* const>;
using Grad = std::span<const double>;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Rows x cols view used by the row-wise ops.
struct RowView {
  std::size_t rows, cols;
};

RowView row_view(const Tensor& a, const char* op) {
  if (a.rank() == 1) return {1, a.dim(0)};
  if (a.rank() == 2) return {a.dim(0), a.dim(1)};
  throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_str(a.shape()));
}

template <class F, class DF>
Tensor unary(const Tensor& a, const char* op, F f, DF df) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a}, op,
                             [df](const Node& self, Grad g, GradIn gin) {
                               const auto& xin = self.inputs[0]->data;
                               auto& gx = *gin[0];
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 gx[i] += g[i] * df(xin[i], self.data[i]);
                             });
}

Shape row_shape(const Tensor& a) {
  return a.rank() == 1 ? Shape{1} : Shape{a.dim(0)};
}

// Reflect index in [0, n): -1 -> 1, n -> n - 2.
std::size_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return static_cast<std::size_t>(i);
}

constexpr std::size_t kOutside = std::numeric_limits<std::size_t>::max();

// For each position of a padded plane, the source index in the unpadded
// plane, or kOutside for zero padding.
std::vector<std::size_t> pad_map(std::size_t h, std::size_t w, std::size_t pad_h,
                                 std::size_t pad_w, Padding mode) {
  const std::size_t ph = h + 2 * pad_h, pw = w + 2 * pad_w;
  std::vector<std::size_t> map(ph * pw);
  for (std::size_t r = 0; r < ph; ++r) {
    for (std::size_t c = 0; c < pw; ++c) {
      const auto sr = static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(pad_h);
      const auto sc = static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(pad_w);
      const bool inside = sr >= 0 && sc >= 0 && sr < static_cast<std::ptrdiff_t>(h) &&
                          sc < static_cast<std::ptrdiff_t>(w);
      if (inside) {
        map[r * pw + c] = static_cast<std::size_t>(sr) * w + static_cast<std::size_t>(sc);
      } else if (mode == Padding::kZero) {
        map[r * pw + c] = kOutside;
      } else {
        map[r * pw + c] = reflect_index(sr, static_cast<std::ptrdiff_t>(h)) * w +
                          reflect_index(sc, static_cast<std::ptrdiff_t>(w));
      }
    }
  }
  return map;
}

}  // namespace

Padding parse_padding(std::string_view name) {
  if (name == "zero") return Padding::kZero;
  if (name == "reflect") return Padding::kReflect;
  throw ConfigError("unknown padding mode '" + std::string(name) + "'");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::gemm({m, n, k, false, false}, a.data(), b.data(), out);
  return Tensor::make_result(
      {m, n}, std::move(out), {a, b}, "matmul", [m, n, k](const Node& self, Grad g, GradIn gin) {
        const auto& av = self.inputs[0]->data;
        const auto& bv = self.inputs[1]->data;
        if (gin[0]) {
          std::vector<double> tmp(m * k);
          kernels::gemm({m, k, n, false, true}, g, bv, tmp);
          auto& ga = *gin[0];
          for (std::size_t i = 0; i < tmp.size(); ++i) ga[i] += tmp[i];
        }
        if (gin[1]) {
          std::vector<double> tmp(k * n);
          kernels::gemm({k, n, m, true, false}, av, g, tmp);
          auto& gb = *gin[1];
          for (std::size_t i = 0; i < tmp.size(); ++i) gb[i] += tmp[i];
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 || x.dim(1) != weight.dim(1) ||
      bias.dim(0) != weight.dim(0)) {
    throw DimensionError("linear: incompatible shapes x" + shape_str(x.shape()) + " w" +
                         shape_str(weight.shape()) + " b" + shape_str(bias.shape()));
  }
  const std::size_t batch = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
  std::vector<double> out(batch * out_f);
  kernels::gemm({batch, out_f, in, false, true}, x.data(), weight.data(), out);
  auto bv = bias.data();
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < out_f; ++j) out[i * out_f + j] += bv[j];

  return Tensor::make_result(
      {batch, out_f}, std::move(out), {x, weight, bias}, "linear",
      [batch, in, out_f](const Node& self, Grad g, GradIn gin) {
        const auto& xv = self.inputs[0]->data;
        const auto& wv = self.inputs[1]->data;
        if (gin[0]) {
          std::vector<double> tmp(batch * in);
          kernels::gemm({batch, in, out_f, false, false}, g, wv, tmp);
          auto& gx = *gin[0];
          for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
        }
        if (gin[1]) {
          std::vector<double> tmp(out_f * in);
          kernels::gemm({out_f, in, batch, true, false}, g, xv, tmp);
          auto& gw = *gin[1];
          for (std::size_t i = 0; i < tmp.size(); ++i) gw[i] += tmp[i];
        }
        if (gin[2]) {
          auto& gb = *gin[2];
          for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t j = 0; j < out_f; ++j) gb[j] += g[i * out_f + j];
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, Padding padding) {
  if (x.rank() != 4 || kernel.rank() != 4) {
    throw DimensionError("conv2d: expected rank-4 input and kernel, got " + shape_str(x.shape()) +
                         " and " + shape_str(kernel.shape()));
  }
  if (x.dim(1) != kernel.dim(1)) {
    throw DimensionError("conv2d: channel mismatch " + shape_str(x.shape()) + " vs kernel " +
                         shape_str(kernel.shape()));
  }
  const std::size_t kh = kernel.dim(2), kw = kernel.dim(3);
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw DimensionError("conv2d: kernel extents must be odd, got " + shape_str(kernel.shape()));
  }
  kernels::ConvShape s;
  s.batch = x.dim(0);
  s.in_ch = x.dim(1);
  s.out_ch = kernel.dim(0);
  s.h = x.dim(2);
  s.w = x.dim(3);
  s.kh = kh;
  s.kw = kw;
  const std::size_t pad_h = kh / 2, pad_w = kw / 2;
  if (padding == Padding::kReflect && (pad_h >= s.h || pad_w >= s.w)) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) +
                         " larger than reflect-padded input " + shape_str(x.shape()));
  }

  const std::size_t ph = s.padded_h(), pw = s.padded_w();
  const auto map = pad_map(s.h, s.w, pad_h, pad_w, padding);
  const std::size_t planes = s.batch * s.in_ch;
  std::vector<double> xpad(planes * ph * pw);
  auto xv = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xv.data() + p * s.h * s.w;
    double* dst = xpad.data() + p * ph * pw;
    for (std::size_t i = 0; i < ph * pw; ++i) dst[i] = map[i] == kOutside ? 0.0 : src[map[i]];
  }

  std::vector<double> out(s.batch * s.out_ch * s.h * s.w);
  kernels::conv2d_forward(s, xpad, kernel.data(), out);

  return Tensor::make_result(
      {s.batch, s.out_ch, s.h, s.w}, std::move(out), {x, kernel}, "conv2d",
      [s, map, xpad = std::move(xpad)](const Node& self, Grad g, GradIn gin) {
        const std::size_t ph = s.padded_h(), pw = s.padded_w();
        if (gin[0]) {
          std::vector<double> gxpad(s.batch * s.in_ch * ph * pw);
          kernels::conv2d_backward_input(s, g, self.inputs[1]->data, gxpad);
          auto& gx = *gin[0];
          for (std::size_t p = 0; p < s.batch * s.in_ch; ++p) {
            const double* src = gxpad.data() + p * ph * pw;
            double* dst = gx.data() + p * s.h * s.w;
            for (std::size_t i = 0; i < ph * pw; ++i)
              if (map[i] != kOutside) dst[map[i]] += src[i];
          }
        }
        if (gin[1]) {
          std::vector<double> gk(self.inputs[1]->data.size());
          kernels::conv2d_backward_weight(s, g, xpad, gk);
          auto& gw = *gin[1];
          for (std::size_t i = 0; i < gk.size(); ++i) gw[i] += gk[i];
        }
      });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 4 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_channel_bias: incompatible " + shape_str(x.shape()) + " and " +
                         shape_str(bias.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) out[(i * c + ch) * hw + p] += bv[ch];
  return Tensor::make_result(x.shape(), std::move(out), {x, bias}, "add_channel_bias",
                             [n, c, hw](const Node&, Grad g, GradIn gin) {
                               if (gin[0]) {
                                 auto& gx = *gin[0];
                                 for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                               }
                               if (gin[1]) {
                                 auto& gb = *gin[1];
                                 for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t ch = 0; ch < c; ++ch)
                                     for (std::size_t p = 0; p < hw; ++p)
                                       gb[ch] += g[(i * c + ch) * hw + p];
                               }
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "add",
                             [](const Node&, Grad g, GradIn gin) {
                               for (auto* gx : gin) {
                                 if (!gx) continue;
                                 for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
                               }
                             });
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "subtract",
                             [](const Node&, Grad g, GradIn gin) {
                               if (gin[0])
                                 for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                               if (gin[1])
                                 for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "mul",
                             [](const Node& self, Grad g, GradIn gin) {
                               const auto& x = self.inputs[0]->data;
                               const auto& y = self.inputs[1]->data;
                               if (gin[0])
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   (*gin[0])[i] += g[i] * y[i];
                               if (gin[1])
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   (*gin[1])[i] += g[i] * x[i];
                             });
}

Tensor scalar_mul(const Tensor& a, double s) {
  return unary(
      a, "scalar_mul", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor pow_scalar(const Tensor& a, double p) {
  if (p < 0.0) throw InputError("pow_scalar: negative exponent");
  for (double v : a.data()) {
    if (v < 0.0) throw InputError("pow_scalar: negative base");
  }
  return unary(
      a, "pow_scalar", [p](double x) { return std::pow(x, p); },
      [p](double x, double) {
        if (p == 0.0) return 0.0;
        if (p == 1.0) return 1.0;
        return x == 0.0 ? 0.0 : p * std::pow(x, p - 1.0);
      });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return Tensor::make_result({1}, {acc}, {a}, "sum", [](const Node&, Grad g, GradIn gin) {
    auto& gx = *gin[0];
    for (auto& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  const double n = static_cast<double>(a.numel());
  return Tensor::make_result({1}, {acc / n}, {a}, "mean", [n](const Node&, Grad g, GradIn gin) {
    auto& gx = *gin[0];
    const double share = g[0] / n;
    for (auto& v : gx) v += share;
  });
}

Tensor row_sum(const Tensor& a) {
  const auto [rows, cols] = row_view(a, "row_sum");
  auto x = a.data();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r] += x[r * cols + c];
  return Tensor::make_result(row_shape(a), std::move(out), {a}, "row_sum",
                             [rows = rows, cols = cols](const Node&, Grad g, GradIn gin) {
                               auto& gx = *gin[0];
                               for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r];
                             });
}

Tensor max_over_axis(const Tensor& a, std::size_t axis) {
  if (a.rank() != 2 || axis > 1) {
    throw DimensionError("max_over_axis: expected rank-2 input and axis 0/1, got " +
                         shape_str(a.shape()));
  }
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const std::size_t outer = axis == 1 ? rows : cols;
  const std::size_t inner = axis == 1 ? cols : rows;
  auto x = a.data();
  std::vector<double> out(outer);
  std::vector<std::size_t> arg(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t best = axis == 1 ? o * cols : o;
    for (std::size_t i = 1; i < inner; ++i) {
      const std::size_t idx = axis == 1 ? o * cols + i : i * cols + o;
      if (x[idx] > x[best]) best = idx;
    }
    arg[o] = best;
    out[o] = x[best];
  }
  return Tensor::make_result({outer}, std::move(out), {a}, "max_over_axis",
                             [arg = std::move(arg)](const Node&, Grad g, GradIn gin) {
                               auto& gx = *gin[0];
                               for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += g[o];
                             });
}

Tensor log_sum_exp(const Tensor& a) {
  const auto [rows, cols] = row_view(a, "log_sum_exp");
  auto x = a.data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += std::exp(row[c] - mx);
    out[r] = mx + std::log(acc);
  }
  return Tensor::make_result(row_shape(a), std::move(out), {a}, "log_sum_exp",
                             [rows = rows, cols = cols](const Node& self, Grad g, GradIn gin) {
                               const auto& xin = self.inputs[0]->data;
                               auto& gx = *gin[0];
                               for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t c = 0; c < cols; ++c)
                                   gx[r * cols + c] +=
                                       g[r] * std::exp(xin[r * cols + c] - self.data[r]);
                             });
}

Tensor log_softmax(const Tensor& a) {
  const auto [rows, cols] = row_view(a, "log_softmax");
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += std::exp(row[c] - mx);
    const double lse = mx + std::log(acc);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - lse;
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, "log_softmax",
                             [rows = rows, cols = cols](const Node& self, Grad g, GradIn gin) {
                               auto& gx = *gin[0];
                               for (std::size_t r = 0; r < rows; ++r) {
                                 double gsum = 0.0;
                                 for (std::size_t c = 0; c < cols; ++c) gsum += g[r * cols + c];
                                 for (std::size_t c = 0; c < cols; ++c) {
                                   const std::size_t i = r * cols + c;
                                   gx[i] += g[i] - std::exp(self.data[i]) * gsum;
                                 }
                               }
                             });
}

Tensor softmax(const Tensor& a) {
  const auto [rows, cols] = row_view(a, "softmax");
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = std::exp(row[c] - mx);
      acc += out[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= acc;
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, "softmax",
                             [rows = rows, cols = cols](const Node& self, Grad g, GradIn gin) {
                               const auto& p = self.data;
                               auto& gx = *gin[0];
                               for (std::size_t r = 0; r < rows; ++r) {
                                 double dot = 0.0;
                                 for (std::size_t c = 0; c < cols; ++c)
                                   dot += g[r * cols + c] * p[r * cols + c];
                                 for (std::size_t c = 0; c < cols; ++c) {
                                   const std::size_t i = r * cols + c;
                                   gx[i] += p[i] * (g[i] - dot);
                                 }
                               }
                             });
}

Tensor maxpool2(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
    throw DimensionError("maxpool2: expected [N, C, H>=2, W>=2], got " + shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  auto xv = x.data();
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        std::size_t best = base + (2 * r) * w + 2 * c;
        for (std::size_t dr = 0; dr < 2; ++dr)
          for (std::size_t dc = 0; dc < 2; ++dc) {
            const std::size_t idx = base + (2 * r + dr) * w + 2 * c + dc;
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::size_t o = (p * oh + r) * ow + c;
        arg[o] = best;
        out[o] = xv[best];
      }
    }
  }
  return Tensor::make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x}, "maxpool2",
                             [arg = std::move(arg)](const Node&, Grad g, GradIn gin) {
                               auto& gx = *gin[0];
                               for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += g[o];
                             });
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("flatten: rank-0 input");
  const std::size_t n = x.dim(0);
  return x.reshape({n, x.numel() / n});
}

Tensor pick(const Tensor& a, std::span<const int> labels) {
  if (a.rank() != 2 || labels.size() != a.dim(0)) {
    throw DimensionError("pick: " + std::to_string(labels.size()) + " labels for " +
                         shape_str(a.shape()));
  }
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<std::size_t> idx(rows);
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= cols) {
      throw InputError("label " + std::to_string(labels[r]) + " out of range [0, " +
                       std::to_string(cols) + ")");
    }
    idx[r] = r * cols + static_cast<std::size_t>(labels[r]);
    out[r] = a.data()[idx[r]];
  }
  return Tensor::make_result({rows}, std::move(out), {a}, "pick",
                             [idx = std::move(idx)](const Node&, Grad g, GradIn gin) {
                               auto& gx = *gin[0];
                               for (std::size_t r = 0; r < idx.size(); ++r) gx[idx[r]] += g[r];
                             });
}

Tensor max_excluding(const Tensor& a, std::span<const int> labels) {
  if (a.rank() != 2 || labels.size() != a.dim(0)) {
    throw DimensionError("max_excluding: " + std::to_string(labels.size()) + " labels for " +
                         shape_str(a.shape()));
  }
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (cols < 2) throw InputError("max_excluding: need at least 2 classes");
  auto x = a.data();
  std::vector<std::size_t> idx(rows);
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= cols) {
      throw InputError("label " + std::to_string(labels[r]) + " out of range [0, " +
                       std::to_string(cols) + ")");
    }
    const auto y = static_cast<std::size_t>(labels[r]);
    std::size_t best = kOutside;
    for (std::size_t c = 0; c < cols; ++c) {
      if (c == y) continue;
      if (best == kOutside || x[r * cols + c] > x[r * cols + best]) best = c;
    }
    idx[r] = r * cols + best;
    out[r] = x[idx[r]];
  }
  return Tensor::make_result({rows}, std::move(out), {a}, "max_excluding",
                             [idx = std::move(idx)](const Node&, Grad g, GradIn gin) {
                               auto& gx = *gin[0];
                               for (std::size_t r = 0; r < idx.size(); ++r) gx[idx[r]] += g[r];
                             });
}

}  // namespace macs

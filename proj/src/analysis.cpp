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

#include "macs/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>

#include "macs/error.hpp"
#include "macs/ops.hpp"

namespace macs {

namespace {

using LinearMap = std::function<std::vector<double>(const std::vector<double>&)>;

double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Power iteration on A^T A; returns ||A v|| for the converged unit v.
double power_norm(const LinearMap& apply, const LinearMap& adjoint, std::size_t n_in,
                  std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "analysis.power_iteration");
  std::vector<double> v(n_in);
  for (auto& x : v) x = rng.normal();
  double nv = l2(v);
  for (auto& x : v) x /= nv;
  double sigma = 0.0;
  for (int it = 0; it < 200; ++it) {
    const auto u = apply(v);
    const double next = l2(u);
    if (next == 0.0) return 0.0;
    const bool done = it > 0 && std::abs(next - sigma) <= 1e-10 * next;
    sigma = next;
    if (done) break;
    v = adjoint(u);
    nv = l2(v);
    if (nv == 0.0) return 0.0;
    for (auto& x : v) x /= nv;
  }
  return sigma;
}

Tensor logits_of(const Model& model, const DatasetSplit& ds, std::size_t batch = 512) {
  ds.validate();
  std::vector<double> out;
  out.reserve(ds.size() * model.num_classes());
  std::vector<std::size_t> idx;
  for (std::size_t lo = 0; lo < ds.size(); lo += batch) {
    const std::size_t hi = std::min(ds.size(), lo + batch);
    idx.resize(hi - lo);
    std::iota(idx.begin(), idx.end(), lo);
    Tensor logits = model.forward(ds.batch_inputs(idx), false);
    out.insert(out.end(), logits.data().begin(), logits.data().end());
  }
  return Tensor::from({ds.size(), model.num_classes()}, std::move(out));
}

Tensor as_batch_of_one(const Model& model, const Tensor& x) {
  const Shape& want = model.spec().input_shape;
  if (x.shape() == want) {
    Shape s{1};
    s.insert(s.end(), want.begin(), want.end());
    return x.detach().reshape(s).detach();
  }
  if (x.rank() == want.size() + 1 && x.dim(0) == 1) return x.detach();
  throw DimensionError("expected a single sample of shape " + shape_str(want) + ", got " +
                       shape_str(x.shape()));
}

void finish_spectral(SpectralReport& r) {
  r.product = 1.0;
  double ratio_sum = 0.0;
  for (const auto& layer : r.layers) {
    r.product *= layer.spectral;
    if (layer.spectral == 0.0) {
      r.warnings.push_back(layer.name + ": zero weight, ratio term skipped");
      continue;
    }
    ratio_sum += std::pow(layer.frobenius / layer.spectral, 2.0 / 3.0);
  }
  r.ratio_term = std::pow(ratio_sum, 1.5);
  r.complexity = r.product * r.ratio_term;
}

}  // namespace

MarginStats margin_stats_from_logits(const Tensor& logits, std::span<const int> labels,
                                     std::size_t bins) {
  if (labels.empty()) throw InputError("margin statistics need a nonempty split");
  if (bins < 1) throw InputError("margin histogram needs at least one bin");
  MarginStats s;
  s.count = labels.size();
  s.margins = logit_margin_values(logits, labels);
  const std::size_t k = logits.dim(1);
  auto v = logits.data();
  for (std::size_t i = 0; i < s.count; ++i) {
    const double* row = v.data() + i * k;
    double sq = 0.0;
    for (std::size_t j = 0; j < k; ++j) sq += row[j] * row[j];
    s.mean_logit_l2 += std::sqrt(sq);
    s.mean_max_logit += *std::max_element(row, row + k);
    s.mean_margin += s.margins[i];
  }
  const double n = static_cast<double>(s.count);
  s.mean_margin /= n;
  s.mean_logit_l2 /= n;
  s.mean_max_logit /= n;

  const auto [mn, mx] = std::minmax_element(s.margins.begin(), s.margins.end());
  s.histogram.lo = *mn;
  s.histogram.hi = *mx;
  s.histogram.counts.assign(bins, 0);
  const double width = (*mx - *mn) / static_cast<double>(bins);
  for (double m : s.margins) {
    std::size_t b = 0;
    if (width > 0.0) b = std::min(bins - 1, static_cast<std::size_t>((m - *mn) / width));
    s.histogram.counts[b] += 1;
  }
  return s;
}

MarginStats margin_stats(const Model& model, const DatasetSplit& ds, std::size_t bins) {
  return margin_stats_from_logits(logits_of(model, ds), ds.labels, bins);
}

double sensitivity_estimate(const Model& model, const Tensor& x, std::size_t n, double sigma,
                            Rng& rng) {
  if (n < 1) throw InputError("sensitivity estimate needs n >= 1");
  if (!(sigma > 0.0)) throw InputError("sensitivity estimate needs sigma > 0");
  const Tensor one = as_batch_of_one(model, x);
  const std::size_t d = one.numel();
  const std::size_t k = model.num_classes();
  const Tensor base = model.forward(one, false);

  Shape shape = one.shape();
  shape[0] = n;
  std::vector<double> noisy(n * d);
  std::vector<double> eps_norm(n, 0.0);
  auto src = one.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double e = rng.normal(0.0, sigma);
      noisy[i * d + j] = src[j] + e;
      eps_norm[i] += e * e;
    }
    eps_norm[i] = std::sqrt(eps_norm[i]);
  }
  const Tensor out = model.forward(Tensor::from(shape, std::move(noisy)), false);
  auto o = out.data();
  auto b = base.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double inf = 0.0;
    for (std::size_t j = 0; j < k; ++j) inf = std::max(inf, std::abs(o[i * k + j] - b[j]));
    total += inf / eps_norm[i];
  }
  return total / static_cast<double>(n);
}

SensitivityStats sensitivity_stats(const Model& model, const DatasetSplit& ds,
                                   std::uint64_t seed, std::size_t n, double sigma) {
  ds.validate();
  if (n < 1) throw InputError("sensitivity estimate needs n >= 1");
  if (!(sigma > 0.0)) throw InputError("sensitivity estimate needs sigma > 0");
  SensitivityStats s;
  s.n_samples = n;
  s.sigma = sigma;
  s.per_sample.assign(ds.size(), 0.0);
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(ds.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const std::size_t idx = static_cast<std::size_t>(i);
      Rng rng = Rng::stream(seed, "analysis.sensitivity." + std::to_string(idx));
      s.per_sample[idx] = sensitivity_estimate(model, ds.batch_inputs({&idx, 1}), n, sigma, rng);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  s.mean_sensitivity = std::accumulate(s.per_sample.begin(), s.per_sample.end(), 0.0) /
                       static_cast<double>(ds.size());
  return s;
}

RatioReport margin_sensitivity_ratio(double mean_margin, double mean_sensitivity) {
  RatioReport r;
  r.mean_margin = mean_margin;
  r.mean_sensitivity = mean_sensitivity;
  if (mean_sensitivity == 0.0) {
    r.infinite = mean_margin != 0.0;
    r.ratio = mean_margin == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(),
                                                       mean_margin);
  } else {
    r.ratio = mean_margin / mean_sensitivity;
  }
  r.mean_of_ratios = r.ratio;
  return r;
}

RatioReport margin_sensitivity_ratio(const MarginStats& margins, const SensitivityStats& sens) {
  if (margins.margins.size() != sens.per_sample.size()) {
    throw DimensionError("margin and sensitivity statistics cover different samples");
  }
  RatioReport r = margin_sensitivity_ratio(margins.mean_margin, sens.mean_sensitivity);
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < sens.per_sample.size(); ++i) {
    if (sens.per_sample[i] == 0.0) continue;
    acc += margins.margins[i] / sens.per_sample[i];
    ++used;
  }
  r.mean_of_ratios = used ? acc / static_cast<double>(used) : r.ratio;
  return r;
}

RatioReport margin_sensitivity_ratio(const Model& model, const DatasetSplit& ds,
                                     std::uint64_t seed, std::size_t n, double sigma) {
  return margin_sensitivity_ratio(margin_stats(model, ds), sensitivity_stats(model, ds, seed, n, sigma));
}

RadiusReport certified_radius_linear(const Tensor& weight, const Tensor& bias,
                                     std::span<const double> x, int y) {
  if (weight.rank() != 2) throw DimensionError("linear certificate needs W: [K, d]");
  const std::size_t k = weight.dim(0), d = weight.dim(1);
  if (k < 2) throw InputError("linear certificate needs K >= 2");
  if (x.size() != d || bias.numel() != k) {
    throw DimensionError("linear certificate: x or b does not match W " +
                         shape_str(weight.shape()));
  }
  if (y < 0 || static_cast<std::size_t>(y) >= k) throw InputError("label out of range");
  auto w = weight.data();
  auto b = bias.data();
  std::vector<double> f(k);
  for (std::size_t i = 0; i < k; ++i) {
    double acc = b[i];
    for (std::size_t j = 0; j < d; ++j) acc += w[i * d + j] * x[j];
    f[i] = acc;
  }
  const auto yy = static_cast<std::size_t>(y);
  RadiusReport r;
  r.exact = true;
  r.margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    if (i == yy) continue;
    r.margin = std::min(r.margin, f[yy] - f[i]);
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = w[yy * d + j] - w[i * d + j];
      sq += diff * diff;
    }
    r.lipschitz = std::max(r.lipschitz, std::sqrt(sq));
  }
  r.radius = (r.margin > 0.0 && r.lipschitz > 0.0) ? r.margin / r.lipschitz : 0.0;
  return r;
}

RadiusReport empirical_radius(double margin, double sensitivity) {
  RadiusReport r;
  r.exact = false;
  r.margin = margin;
  r.lipschitz = 2.0 * sensitivity;
  if (margin > 0.0) {
    if (!(sensitivity > 0.0)) throw InputError("empirical radius needs a positive sensitivity");
    r.radius = margin / r.lipschitz;
  }
  return r;
}

RadiusReport empirical_radius(const Model& model, const Tensor& x, int y, double sensitivity) {
  const Tensor logits = model.forward(as_batch_of_one(model, x), false);
  const int labels[1] = {y};
  return empirical_radius(logit_margin_values(logits, labels)[0], sensitivity);
}

double power_iteration_norm(std::span<const double> m, std::size_t rows, std::size_t cols,
                            std::uint64_t seed) {
  if (m.size() != rows * cols || rows == 0 || cols == 0) {
    throw DimensionError("power iteration: matrix size does not match its dims");
  }
  auto apply = [&](const std::vector<double>& v) {
    std::vector<double> u(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) u[i] += m[i * cols + j] * v[j];
    return u;
  };
  auto adjoint = [&](const std::vector<double>& u) {
    std::vector<double> v(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) v[j] += m[i * cols + j] * u[i];
    return v;
  };
  return power_norm(apply, adjoint, cols, seed);
}

double conv_operator_frobenius(const Tensor& kernel, std::size_t h, std::size_t w) {
  if (kernel.rank() != 4 || kernel.dim(2) % 2 == 0 || kernel.dim(2) != kernel.dim(3)) {
    throw DimensionError("conv Frobenius needs an odd square kernel [out, in, k, k]");
  }
  const std::size_t kk = kernel.dim(2);
  const auto p = static_cast<std::ptrdiff_t>(kk / 2);
  auto kv = kernel.data();
  double total = 0.0;
  for (std::size_t idx = 0; idx < kv.size(); ++idx) {
    const auto i = static_cast<std::ptrdiff_t>((idx / kk) % kk);
    const auto j = static_cast<std::ptrdiff_t>(idx % kk);
    // Number of output positions whose receptive tap (i, j) lands inside the image.
    const double rows = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(h) - std::abs(i - p));
    const double cols = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(w) - std::abs(j - p));
    total += kv[idx] * kv[idx] * rows * cols;
  }
  return std::sqrt(total);
}

SpectralReport spectral_complexity(const Model& model) {
  const auto& spec = model.spec();
  const auto shapes = spec.layer_output_shapes();
  SpectralReport r;
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const auto& layer = spec.layers[li];
    if (!layer.has_params()) continue;
    const std::string name = "layers." + std::to_string(li) + ".weight";
    const auto it = std::find_if(model.params().begin(), model.params().end(),
                                 [&](const NamedParam& p) { return p.name == name; });
    if (it == model.params().end()) throw UsageError("model has no parameter " + name);
    const Tensor w = Tensor::from(it->value.shape(),
                                  std::vector<double>(it->value.data().begin(), it->value.data().end()));
    LayerNorms norms{name, 0.0, 0.0};
    if (layer.kind == LayerKind::kDense) {
      norms.spectral = power_iteration_norm(w.data(), w.dim(0), w.dim(1), li);
      double sq = 0.0;
      for (double v : w.data()) sq += v * v;
      norms.frobenius = std::sqrt(sq);
    } else {
      const Shape in = li == 0 ? spec.input_shape : shapes[li - 1];
      const Shape x_shape{1, in[0], in[1], in[2]};
      const Shape y_shape{1, layer.out, in[1], in[2]};
      auto apply = [&](const std::vector<double>& v) {
        Tensor y = conv2d(Tensor::from(x_shape, v), w, Padding::kZero);
        return std::vector<double>(y.data().begin(), y.data().end());
      };
      auto adjoint = [&](const std::vector<double>& u) {
        Tensor x = Tensor::zeros(x_shape, true);
        Tensor y = conv2d(x, w, Padding::kZero);
        sum(mul(y, Tensor::from(y_shape, u))).backward();
        return std::vector<double>(x.grad().begin(), x.grad().end());
      };
      norms.spectral = power_norm(apply, adjoint, numel(x_shape), li);
      norms.frobenius = conv_operator_frobenius(w, in[1], in[2]);
    }
    r.layers.push_back(norms);
  }
  if (r.layers.empty()) throw InputError("spectral complexity needs a dense or conv layer");
  finish_spectral(r);
  return r;
}

SpectralReport spectral_complexity(std::span<const std::vector<double>> matrices,
                                   std::span<const std::pair<std::size_t, std::size_t>> dims) {
  if (matrices.empty() || matrices.size() != dims.size()) {
    throw InputError("spectral complexity needs one dims entry per matrix");
  }
  SpectralReport r;
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    LayerNorms norms{"matrix." + std::to_string(i), 0.0, 0.0};
    norms.spectral = power_iteration_norm(matrices[i], dims[i].first, dims[i].second, i);
    double sq = 0.0;
    for (double v : matrices[i]) sq += v * v;
    norms.frobenius = std::sqrt(sq);
    r.layers.push_back(norms);
  }
  finish_spectral(r);
  return r;
}

double margin_fraction(std::span<const double> margins, double gamma) {
  if (!(gamma >= 0.0)) throw InputError("margin fraction needs gamma >= 0");
  if (margins.empty()) throw InputError("margin fraction needs samples");
  const auto below = std::count_if(margins.begin(), margins.end(), [&](double m) { return m < gamma; });
  return static_cast<double>(below) / static_cast<double>(margins.size());
}

MarginFractionReport margin_fraction(const Model& model, const DatasetSplit& ds, double gamma) {
  MarginFractionReport r;
  r.gamma = gamma;
  r.fraction = margin_fraction(margin_stats(model, ds).margins, gamma);
  r.spectral_complexity = spectral_complexity(model).complexity;
  r.input_bound = ds.max_input_norm();
  r.n = ds.size();
  return r;
}

PinskerReport pinsker_audit_probs(std::span<const double> p, std::span<const double> q,
                                  std::size_t rows, std::size_t k, std::size_t first_index) {
  if (p.size() != rows * k || q.size() != rows * k) {
    throw DimensionError("pinsker audit: probability tables do not match [N, K]");
  }
  PinskerReport r;
  r.samples = rows;
  r.max_slack = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows; ++i) {
    double l1 = 0.0, kl = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double a = p[i * k + j], b = q[i * k + j];
      l1 += std::abs(a - b);
      // a log(a/b) + (b - a): sums to KL for normalized rows, and every term
      // is >= 0, so near-identical rows do not cancel to a negative KL.
      if (a > 0.0) {
        const double r = (b - a) / a;
        kl += b > 0.0 ? a * (r - std::log1p(r)) : std::numeric_limits<double>::infinity();
      } else {
        kl += b;
      }
    }
    const double bound = std::sqrt(2.0 * std::max(kl, 0.0));
    r.max_l1 = std::max(r.max_l1, l1);
    r.max_bound = std::max(r.max_bound, bound);
    r.max_slack = std::max(r.max_slack, l1 - bound);
    if (l1 > bound + 1e-9) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "Pinsker violation at sample %zu: l1 = %.6e > sqrt(2 KL) = %.6e",
                    first_index + i, l1, bound);
      throw PropertyError(buf);
    }
  }
  return r;
}

PinskerReport pinsker_audit_logits(const Tensor& p_logits, const Tensor& q_logits,
                                   std::size_t first_index) {
  if (p_logits.rank() != 2 || p_logits.shape() != q_logits.shape()) {
    throw DimensionError("pinsker audit needs two [N, K] logit tables of one shape");
  }
  const Tensor p = softmax(p_logits.detach());
  const Tensor q = softmax(q_logits.detach());
  return pinsker_audit_probs(p.data(), q.data(), p.dim(0), p.dim(1), first_index);
}

PinskerReport pinsker_audit(const Model& model, const DatasetSplit& ds, const PerturbFn& perturb,
                            std::size_t batch) {
  ds.validate();
  PinskerReport total;
  std::vector<std::size_t> idx;
  for (std::size_t lo = 0; lo < ds.size(); lo += batch) {
    const std::size_t hi = std::min(ds.size(), lo + batch);
    idx.resize(hi - lo);
    std::iota(idx.begin(), idx.end(), lo);
    const Tensor x = ds.batch_inputs(idx);
    const Tensor clean = model.forward(x, false);
    const Tensor pert = model.forward(perturb(x), false);
    merge_into(total, pinsker_audit_logits(clean, pert, lo));
  }
  return total;
}

void merge_into(PinskerReport& total, const PinskerReport& part) {
  if (total.samples == 0) {
    total = part;
    return;
  }
  total.samples += part.samples;
  total.max_l1 = std::max(total.max_l1, part.max_l1);
  total.max_bound = std::max(total.max_bound, part.max_bound);
  total.max_slack = std::max(total.max_slack, part.max_slack);
}

}  // namespace macs

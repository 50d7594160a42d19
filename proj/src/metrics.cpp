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

#include "macs/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "macs/error.hpp"

namespace macs {

namespace {

struct RowStats {
  std::size_t argmax;
  double confidence;  // max softmax probability
};

RowStats row_stats(const double* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (row[j] > row[best]) best = j;
  double denom = 0.0;
  for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - row[best]);
  return {best, 1.0 / denom};
}

std::size_t bin_index(double conf, std::size_t n_bins) {
  const double nb = static_cast<double>(n_bins);
  auto b = static_cast<std::size_t>(std::min(std::max(conf * nb, 0.0), nb - 1.0));
  // Agree with explicit edge comparisons at exact boundaries.
  while (b > 0 && conf < static_cast<double>(b) / nb) --b;
  while (b + 1 < n_bins && conf >= static_cast<double>(b + 1) / nb) ++b;
  return b;
}

}  // namespace

void PredictionSet::validate() const {
  if (!logits.defined() || logits.rank() != 2) throw InputError("predictions need [N, K] logits");
  if (labels.empty()) throw InputError("prediction set is empty");
  if (labels.size() != logits.dim(0)) {
    throw DimensionError(std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.dim(1)) {
      throw InputError("label " + std::to_string(y) + " out of range");
    }
  }
}

double top1_accuracy(const PredictionSet& preds) {
  preds.validate();
  const std::size_t k = preds.classes();
  auto v = preds.logits.data();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (row_stats(v.data() + i * k, k).argmax == static_cast<std::size_t>(preds.labels[i])) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

std::vector<ReliabilityBin> reliability_bins(const PredictionSet& preds, std::size_t n_bins) {
  preds.validate();
  if (n_bins < 1) throw InputError("ece needs at least one bin");
  std::vector<ReliabilityBin> bins(n_bins);
  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<std::size_t> hits(n_bins, 0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    bins[b].lo = static_cast<double>(b) / static_cast<double>(n_bins);
    bins[b].hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
  }
  const std::size_t k = preds.classes();
  auto v = preds.logits.data();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto s = row_stats(v.data() + i * k, k);
    const std::size_t b = bin_index(s.confidence, n_bins);
    bins[b].count += 1;
    conf_sum[b] += s.confidence;
    if (s.argmax == static_cast<std::size_t>(preds.labels[i])) hits[b] += 1;
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (bins[b].count == 0) continue;
    const double n = static_cast<double>(bins[b].count);
    bins[b].mean_confidence = conf_sum[b] / n;
    bins[b].accuracy = static_cast<double>(hits[b]) / n;
  }
  return bins;
}

double ece(const PredictionSet& preds, std::size_t n_bins) {
  const auto bins = reliability_bins(preds, n_bins);
  const double total = static_cast<double>(preds.size());
  double out = 0.0;
  for (const auto& b : bins) {
    if (b.count == 0) continue;
    out += (static_cast<double>(b.count) / total) * std::abs(b.accuracy - b.mean_confidence);
  }
  return out;
}

double nll(const PredictionSet& preds) {
  preds.validate();
  const std::size_t k = preds.classes();
  auto v = preds.logits.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double* row = v.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    acc += mx + std::log(s) - row[preds.labels[i]];
  }
  return acc / static_cast<double>(preds.size());
}

PredictionSet scale_logits(const PredictionSet& preds, double temperature) {
  if (!(temperature > 0.0)) throw InputError("temperature must be > 0");
  std::vector<double> v(preds.logits.data().begin(), preds.logits.data().end());
  for (auto& x : v) x /= temperature;
  return {Tensor::from(preds.logits.shape(), std::move(v)), preds.labels};
}

TemperatureFit fit_temperature(const PredictionSet& val, std::size_t n_bins) {
  val.validate();
  TemperatureFit fit;
  fit.nll_before = nll(val);
  fit.ece_before = ece(val, n_bins);

  const std::size_t k = val.classes();
  auto v = val.logits.data();
  bool constant = true;
  for (std::size_t i = 0; i < val.size() && constant; ++i)
    for (std::size_t j = 1; j < k; ++j)
      if (v[i * k + j] != v[i * k]) {
        constant = false;
        break;
      }
  if (constant) {
    fit.degenerate = true;
    fit.nll_after = fit.nll_before;
    fit.ece_after = fit.ece_before;
    return fit;
  }

  auto objective = [&](double log_t) { return nll(scale_logits(val, std::exp(log_t))); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(0.05), b = std::log(20.0);
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = objective(c), fd = objective(d);
  while (b - a > 1e-4) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = objective(d);
    }
  }
  const double t = std::exp(0.5 * (a + b));
  const double nll_t = objective(std::log(t));
  if (nll_t <= fit.nll_before) {
    fit.temperature = t;
    fit.nll_after = nll_t;
  } else {
    fit.temperature = 1.0;
    fit.nll_after = fit.nll_before;
  }
  fit.ece_after = ece(scale_logits(val, fit.temperature), n_bins);
  return fit;
}

}  // namespace macs

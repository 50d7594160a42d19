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

#include "macs/objectives.hpp"

#include <string>

#include "macs/error.hpp"
#include "macs/ops.hpp"

namespace macs {

void MacsConfig::validate() const {
  if (!(delta > 0.0)) throw ConfigError("macs.delta must be > 0");
  if (!(lambda_m >= 0.0)) throw ConfigError("macs.lambda_m must be >= 0");
  if (!(lambda_c >= 0.0)) throw ConfigError("macs.lambda_c must be >= 0");
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  return scalar_mul(mean(pick(log_softmax(logits), labels)), -1.0);
}

Tensor logit_margin(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(1) < 2) {
    throw InputError("logit margin needs [N, K >= 2] logits, got " + shape_str(logits.shape()));
  }
  return subtract(pick(logits, labels), max_excluding(logits, labels));
}

std::vector<double> logit_margin_values(const Tensor& logits, std::span<const int> labels) {
  Tensor g = logit_margin(logits.detach(), labels);
  return {g.data().begin(), g.data().end()};
}

Tensor margin_loss(const Tensor& logits, std::span<const int> labels, double delta) {
  if (!(delta > 0.0)) throw InputError("margin_loss: delta must be > 0");
  Tensor shortfall = relu(add_scalar(scalar_mul(logit_margin(logits, labels), -1.0), delta));
  return mean(square(shortfall));
}

Tensor kl_consistency(const Tensor& clean_logits, const Tensor& perturbed_logits) {
  if (clean_logits.shape() != perturbed_logits.shape()) {
    throw DimensionError("kl_consistency: shape mismatch " + shape_str(clean_logits.shape()) +
                         " vs " + shape_str(perturbed_logits.shape()));
  }
  Tensor log_p = log_softmax(clean_logits);
  Tensor log_q = log_softmax(perturbed_logits);
  return mean(row_sum(mul(exp(log_p), subtract(log_p, log_q))));
}

LossBreakdown macs_loss(const Model& model, const Tensor& x, std::span<const int> labels,
                        const PerturbFn& perturb, const MacsConfig& cfg) {
  cfg.validate();
  LossBreakdown out;
  out.clean_logits = model.forward(x);
  Tensor ce = cross_entropy(out.clean_logits, labels);
  Tensor margin = margin_loss(out.clean_logits, labels, cfg.delta);

  Tensor x_tilde = perturb(x);
  if (x_tilde.shape() != x.shape()) {
    throw DimensionError("perturbation changed input shape " + shape_str(x.shape()) + " -> " +
                         shape_str(x_tilde.shape()));
  }
  out.perturbed_logits = model.forward(x_tilde);
  Tensor consistency = kl_consistency(out.clean_logits, out.perturbed_logits);

  out.total = add(add(ce, scalar_mul(margin, cfg.lambda_m)), scalar_mul(consistency, cfg.lambda_c));
  out.ce = ce.item();
  out.margin = margin.item();
  out.consistency = consistency.item();
  out.total_value = out.total.item();
  return out;
}

Tensor label_smoothing_ce(const Tensor& logits, std::span<const int> labels, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw InputError("label smoothing eps must be in [0, 1)");
  if (logits.rank() != 2 || labels.size() != logits.dim(0)) {
    throw DimensionError("label_smoothing_ce: " + std::to_string(labels.size()) + " labels for " +
                         shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<double> target(n * k, eps / static_cast<double>(k));
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw InputError("label " + std::to_string(labels[i]) + " out of range [0, " +
                       std::to_string(k) + ")");
    }
    target[i * k + static_cast<std::size_t>(labels[i])] += 1.0 - eps;
  }
  Tensor t = Tensor::from(logits.shape(), std::move(target));
  return scalar_mul(mean(row_sum(mul(t, log_softmax(logits)))), -1.0);
}

Tensor focal_loss(const Tensor& logits, std::span<const int> labels, double gamma) {
  if (!(gamma >= 0.0)) throw InputError("focal gamma must be >= 0");
  Tensor log_py = pick(log_softmax(logits), labels);
  Tensor weight = pow_scalar(add_scalar(scalar_mul(exp(log_py), -1.0), 1.0), gamma);
  return scalar_mul(mean(mul(weight, log_py)), -1.0);
}

MixupBatch mixup_with(const Tensor& x, std::span<const int> labels, double lambda,
                      std::span<const std::size_t> perm) {
  const std::size_t n = x.dim(0);
  if (n < 2) throw InputError("mixup needs a batch of at least 2");
  if (labels.size() != n || perm.size() != n) {
    throw DimensionError("mixup: labels/permutation do not match batch size");
  }
  const std::size_t row = x.numel() / n;
  auto xv = x.data();
  std::vector<double> mixed(xv.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = perm[i];
    for (std::size_t c = 0; c < row; ++c) {
      mixed[i * row + c] = lambda * xv[i * row + c] + (1.0 - lambda) * xv[j * row + c];
    }
  }
  MixupBatch b;
  b.x = Tensor::from(x.shape(), std::move(mixed));
  b.labels_a.assign(labels.begin(), labels.end());
  b.labels_b.resize(n);
  for (std::size_t i = 0; i < n; ++i) b.labels_b[i] = labels[perm[i]];
  b.lambda = lambda;
  return b;
}

MixupBatch mixup_batch(const Tensor& x, std::span<const int> labels, double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw InputError("mixup alpha must be > 0");
  if (x.dim(0) < 2) throw InputError("mixup needs a batch of at least 2");
  const double lambda = rng.beta(alpha, alpha);
  const auto perm = rng.permutation(x.dim(0));
  return mixup_with(x, labels, lambda, perm);
}

Tensor mixup_loss(const Tensor& logits, const MixupBatch& batch) {
  return add(scalar_mul(cross_entropy(logits, batch.labels_a), batch.lambda),
             scalar_mul(cross_entropy(logits, batch.labels_b), 1.0 - batch.lambda));
}

}  // namespace macs

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

#ifndef MACS_OBJECTIVES_HPP
#define MACS_OBJECTIVES_HPP

#include <functional>
#include <span>
#include <vector>

#include "macs/model.hpp"
#include "macs/rng.hpp"
#include "macs/tensor.hpp"

namespace macs {

struct MacsConfig {
  double delta = 1.0;     // target margin
  double lambda_m = 0.1;  // margin weight
  double lambda_c = 0.5;  // consistency weight

  void validate() const;
};

/// Loss terms of one MaCS step. `total` carries the tape.
struct LossBreakdown {
  Tensor total;
  double ce = 0.0;
  double margin = 0.0;
  double consistency = 0.0;
  double total_value = 0.0;
  Tensor clean_logits;
  Tensor perturbed_logits;
};

using PerturbFn = std::function<Tensor(const Tensor&)>;

/// mean_i -log softmax(logits_i)[y_i].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// gamma_i = logit[y_i] - max_{j != y_i} logit[j], differentiable.
Tensor logit_margin(const Tensor& logits, std::span<const int> labels);
std::vector<double> logit_margin_values(const Tensor& logits, std::span<const int> labels);

/// mean_i max(0, delta - gamma_i)^2.
Tensor margin_loss(const Tensor& logits, std::span<const int> labels, double delta);

/// mean_i KL(softmax(clean_i) || softmax(perturbed_i)), both branches
/// differentiable.
Tensor kl_consistency(const Tensor& clean_logits, const Tensor& perturbed_logits);

/// CE + lambda_m * margin + lambda_c * consistency with exactly two forwards
/// of `model` (clean, then perturb(x)).
LossBreakdown macs_loss(const Model& model, const Tensor& x, std::span<const int> labels,
                        const PerturbFn& perturb, const MacsConfig& cfg);

/// CE against (1 - eps) * onehot + eps / K.
Tensor label_smoothing_ce(const Tensor& logits, std::span<const int> labels, double eps = 0.1);

/// mean_i -(1 - p_{y_i})^gamma log p_{y_i}.
Tensor focal_loss(const Tensor& logits, std::span<const int> labels, double gamma = 2.0);

struct MixupBatch {
  Tensor x;
  std::vector<int> labels_a;  // original labels
  std::vector<int> labels_b;  // labels of the permuted partners
  double lambda = 1.0;
};

/// lambda ~ Beta(alpha, alpha); x_mixed = lambda x + (1 - lambda) x[perm].
MixupBatch mixup_batch(const Tensor& x, std::span<const int> labels, double alpha, Rng& rng);
/// Same with an explicit mixing weight and partner permutation.
MixupBatch mixup_with(const Tensor& x, std::span<const int> labels, double lambda,
                      std::span<const std::size_t> perm);
/// lambda CE(y) + (1 - lambda) CE(y[perm]).
Tensor mixup_loss(const Tensor& logits, const MixupBatch& batch);

}  // namespace macs

#endif  // MACS_OBJECTIVES_HPP

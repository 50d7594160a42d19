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

#ifndef MACS_METRICS_HPP
#define MACS_METRICS_HPP

#include <cstddef>
#include <vector>

#include "macs/tensor.hpp"

namespace macs {

/// Logits [N, K] and their labels.
struct PredictionSet {
  Tensor logits;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t classes() const { return logits.dim(1); }
  void validate() const;
};

/// Argmax (lowest index on ties) equals label.
double top1_accuracy(const PredictionSet& preds);

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

/// Equal-width bins over max-softmax confidence; [lo, hi), last bin closed.
std::vector<ReliabilityBin> reliability_bins(const PredictionSet& preds, std::size_t n_bins = 15);

/// sum_b (n_b / N) |acc_b - conf_b|.
double ece(const PredictionSet& preds, std::size_t n_bins = 15);

/// Mean -log softmax(logits)[label] in nats.
double nll(const PredictionSet& preds);

/// Copy of `preds` with logits divided by `temperature`.
PredictionSet scale_logits(const PredictionSet& preds, double temperature);

struct TemperatureFit {
  double temperature = 1.0;
  double nll_before = 0.0;
  double nll_after = 0.0;
  double ece_before = 0.0;
  double ece_after = 0.0;
  bool degenerate = false;  // every row constant: NLL does not depend on T
};

/// Golden-section search for the NLL-minimizing T over log T in
/// [log 0.05, log 20] (tolerance 1e-4 on log T). Never returns a T whose NLL
/// is worse than T = 1.
TemperatureFit fit_temperature(const PredictionSet& val, std::size_t n_bins = 15);

}  // namespace macs

#endif  // MACS_METRICS_HPP

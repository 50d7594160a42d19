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

#ifndef MACS_OPTIMIZER_HPP
#define MACS_OPTIMIZER_HPP

#include <cstddef>
#include <string_view>
#include <vector>

#include "macs/model.hpp"

namespace macs {

enum class OptimKind { kSgdMomentum, kAdam };

std::string_view optim_kind_name(OptimKind kind);
OptimKind parse_optim_kind(std::string_view name);

struct OptimConfig {
  OptimKind kind = OptimKind::kAdam;
  double lr_max = 1e-3;
  double lr_min = 0.0;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

/// Linear warmup to lr_max over warmup_steps, then cosine decay to lr_min at
/// total_steps.
double lr_at(std::size_t step, const OptimConfig& cfg);

/// SGD with momentum or Adam (bias-corrected). Weight decay is added to the
/// gradient. State buffers are indexed like `model.params()`.
class Optimizer {
 public:
  explicit Optimizer(OptimConfig cfg);

  /// Updates every trainable parameter of `model` from its accumulated
  /// gradient with learning rate `lr`.
  void step(Model& model, double lr);

  std::size_t steps_taken() const { return t_; }
  const OptimConfig& config() const { return cfg_; }

 private:
  OptimConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

}  // namespace macs

#endif  // MACS_OPTIMIZER_HPP

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

#include "macs/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "macs/error.hpp"

namespace macs {

std::string_view optim_kind_name(OptimKind kind) {
  return kind == OptimKind::kAdam ? "adam" : "sgd_momentum";
}

OptimKind parse_optim_kind(std::string_view name) {
  if (name == "adam") return OptimKind::kAdam;
  if (name == "sgd_momentum" || name == "sgd") return OptimKind::kSgdMomentum;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void OptimConfig::validate() const {
  if (!(warmup_steps < total_steps)) {
    throw ConfigError("optimizer needs 0 <= warmup_steps < total_steps (got " +
                      std::to_string(warmup_steps) + ", " + std::to_string(total_steps) + ")");
  }
  if (!(lr_min <= lr_max) || lr_min < 0.0) throw ConfigError("optimizer needs 0 <= lr_min <= lr_max");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("optim.momentum must be in [0, 1)");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("optim.eps must be > 0");
  if (weight_decay < 0.0) throw ConfigError("optim.weight_decay must be >= 0");
}

double lr_at(std::size_t step, const OptimConfig& cfg) {
  if (step > cfg.total_steps) {
    throw UsageError("lr_at: step " + std::to_string(step) + " beyond total_steps " +
                     std::to_string(cfg.total_steps));
  }
  if (step < cfg.warmup_steps) {
    return cfg.lr_max * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.lr_min +
         0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

Optimizer::Optimizer(OptimConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Optimizer::step(Model& model, double lr) {
  auto& params = model.params();
  if (first_.empty()) {
    first_.resize(params.size());
    second_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      first_[i].assign(params[i].value.numel(), 0.0);
      if (cfg_.kind == OptimKind::kAdam) second_[i].assign(params[i].value.numel(), 0.0);
    }
  }
  if (first_.size() != params.size()) throw UsageError("optimizer bound to a different model");
  ++t_;

  const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value;
    if (!p.requires_grad()) continue;
    if (!p.has_grad()) throw UsageError("parameter " + params[i].name + " has no gradient");
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = first_[i];
    if (cfg_.kind == OptimKind::kSgdMomentum) {
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g[j] + cfg_.weight_decay * w[j];
        m[j] = cfg_.momentum * m[j] + gj;
        w[j] -= lr * m[j];
      }
    } else {
      auto& v = second_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g[j] + cfg_.weight_decay * w[j];
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        const double mhat = m[j] / bias1;
        const double vhat = v[j] / bias2;
        w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }
}

}  // namespace macs

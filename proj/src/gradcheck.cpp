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

#include "macs/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "macs/ops.hpp"
#include "macs/rng.hpp"

namespace macs {

GradCheckResult gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                          std::vector<Tensor> inputs, double h, double floor) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor root = fn(inputs);
  root.backward();

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& t = inputs[k];
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = fn(inputs).item();
      values[i] = saved - h;
      const double down = fn(inputs).item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_input = k;
        result.worst_index = i;
        result.analytic = analytic[i];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

std::function<Tensor(const std::vector<Tensor>&)> project_to_scalar(
    std::function<Tensor(const std::vector<Tensor>&)> op, std::uint64_t seed) {
  return [op = std::move(op), seed](const std::vector<Tensor>& in) {
    Tensor out = op(in);
    Rng rng(seed);
    std::vector<double> r(out.numel());
    for (auto& v : r) v = rng.uniform(-1.0, 1.0);
    return sum(mul(out, Tensor::from(out.shape(), std::move(r))));
  };
}

}  // namespace macs

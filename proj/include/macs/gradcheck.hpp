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

#ifndef MACS_GRADCHECK_HPP
#define MACS_GRADCHECK_HPP

#include <functional>
#include <vector>

#include "macs/tensor.hpp"

namespace macs {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares backward() against central differences for a scalar-valued
/// `fn`. Inputs are perturbed in place (and restored). Relative error is
/// |a - n| / max(|a|, |n|, floor).
GradCheckResult gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                          std::vector<Tensor> inputs, double h = 1e-5, double floor = 1e-6);

/// Wraps a tensor-valued op into a scalar by a fixed random projection
/// sum_i r_i * out_i, r_i ~ U[-1, 1] from `seed`.
std::function<Tensor(const std::vector<Tensor>&)> project_to_scalar(
    std::function<Tensor(const std::vector<Tensor>&)> op, std::uint64_t seed);

}  // namespace macs

#endif  // MACS_GRADCHECK_HPP

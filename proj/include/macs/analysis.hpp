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

#ifndef MACS_ANALYSIS_HPP
#define MACS_ANALYSIS_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "macs/data.hpp"
#include "macs/model.hpp"
#include "macs/objectives.hpp"
#include "macs/rng.hpp"

namespace macs {

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;  // equal-width bins over [lo, hi]
};

struct MarginStats {
  std::size_t count = 0;
  double mean_margin = 0.0;
  double mean_logit_l2 = 0.0;
  double mean_max_logit = 0.0;
  Histogram histogram;
  std::vector<double> margins;
};

MarginStats margin_stats_from_logits(const Tensor& logits, std::span<const int> labels,
                                     std::size_t bins = 20);
MarginStats margin_stats(const Model& model, const DatasetSplit& ds, std::size_t bins = 20);

/// Mean over n draws eps ~ N(0, sigma^2 I) of ||f(x+eps) - f(x)||_inf / ||eps||_2
/// for a single sample x ([1, ...] or the bare sample shape).
double sensitivity_estimate(const Model& model, const Tensor& x, std::size_t n, double sigma,
                            Rng& rng);

struct SensitivityStats {
  double mean_sensitivity = 0.0;
  std::vector<double> per_sample;
  std::size_t n_samples = 10;
  double sigma = 0.1;
};

/// Per-sample estimates with independent rng streams (sample i uses stream
/// "analysis.sensitivity.i" of `seed`), so the result does not depend on the
/// thread count.
SensitivityStats sensitivity_stats(const Model& model, const DatasetSplit& ds,
                                   std::uint64_t seed, std::size_t n = 10, double sigma = 0.1);

struct RatioReport {
  double mean_margin = 0.0;
  double mean_sensitivity = 0.0;
  double ratio = 0.0;           // mean margin / mean sensitivity
  double mean_of_ratios = 0.0;  // over samples with nonzero sensitivity
  bool infinite = false;        // mean sensitivity is zero
};

/// Ratio of the two means.
RatioReport margin_sensitivity_ratio(double mean_margin, double mean_sensitivity);
RatioReport margin_sensitivity_ratio(const MarginStats& margins, const SensitivityStats& sens);
RatioReport margin_sensitivity_ratio(const Model& model, const DatasetSplit& ds,
                                     std::uint64_t seed, std::size_t n = 10, double sigma = 0.1);

struct RadiusReport {
  double margin = 0.0;
  double lipschitz = 0.0;
  double radius = 0.0;
  bool exact = false;
};

/// f(x) = W x + b, W: [K, d]. L_g = max_{j != y} ||w_y - w_j||_2, radius
/// gamma / L_g (0 when gamma <= 0).
RadiusReport certified_radius_linear(const Tensor& weight, const Tensor& bias,
                                     std::span<const double> x, int y);

/// gamma / (2 L_f) from a sampled sensitivity; never a certificate.
RadiusReport empirical_radius(double margin, double sensitivity);
RadiusReport empirical_radius(const Model& model, const Tensor& x, int y, double sensitivity);

/// Largest singular value of a dense row-major [rows, cols] matrix.
double power_iteration_norm(std::span<const double> matrix, std::size_t rows, std::size_t cols,
                            std::uint64_t seed = 0);

struct LayerNorms {
  std::string name;
  double spectral = 0.0;
  double frobenius = 0.0;
};

struct SpectralReport {
  std::vector<LayerNorms> layers;
  double product = 0.0;      // prod ||W||_2
  double ratio_term = 0.0;   // (sum (||W||_F / ||W||_2)^(2/3))^(3/2)
  double complexity = 0.0;   // R_f
  std::vector<std::string> warnings;
};

/// Product of spectral norms times the Frobenius/spectral ratio term. Conv
/// layers are taken as the linear map on their actual input size (zero
/// "same" padding); their norms come from power iteration on the conv and
/// its adjoint.
SpectralReport spectral_complexity(const Model& model);

/// Same quantity for a chain of dense matrices (row-major [rows, cols]).
SpectralReport spectral_complexity(std::span<const std::vector<double>> matrices,
                                   std::span<const std::pair<std::size_t, std::size_t>> dims);

/// Frobenius norm of a stride-1 zero-padded conv [out, in, k, k] viewed as a
/// matrix on h x w inputs.
double conv_operator_frobenius(const Tensor& kernel, std::size_t h, std::size_t w);

struct MarginFractionReport {
  double gamma = 0.0;
  double fraction = 0.0;      // fraction with margin strictly below gamma
  double spectral_complexity = 0.0;
  double input_bound = 0.0;   // B = max ||x||_2
  std::size_t n = 0;
};

double margin_fraction(std::span<const double> margins, double gamma);
MarginFractionReport margin_fraction(const Model& model, const DatasetSplit& ds, double gamma);

struct PinskerReport {
  std::size_t samples = 0;
  double max_l1 = 0.0;
  double max_bound = 0.0;
  double max_slack = 0.0;  // max over samples of l1 - sqrt(2 KL); <= 1e-9 when passing
};

/// Checks ||p - q||_1 <= sqrt(2 KL(p || q)) + 1e-9 row by row on two
/// probability tables [N, K]. Throws PropertyError naming the first
/// violating row (offset by `first_index`).
PinskerReport pinsker_audit_probs(std::span<const double> p, std::span<const double> q,
                                  std::size_t rows, std::size_t k, std::size_t first_index = 0);
/// Same on logits, using softmax of each row.
PinskerReport pinsker_audit_logits(const Tensor& p_logits, const Tensor& q_logits,
                                   std::size_t first_index = 0);
/// Audits model predictions on every sample of `ds` against perturb(x).
PinskerReport pinsker_audit(const Model& model, const DatasetSplit& ds, const PerturbFn& perturb,
                            std::size_t batch = 256);
void merge_into(PinskerReport& total, const PinskerReport& part);

}  // namespace macs

#endif  // MACS_ANALYSIS_HPP

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

#ifndef MACS_PERTURBATIONS_HPP
#define MACS_PERTURBATIONS_HPP

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "macs/rng.hpp"
#include "macs/tensor.hpp"

namespace macs {

// Training-time views T(x) are unclamped; evaluation corruptions work on raw
// [0, 1] pixels and clamp their output back to [0, 1].

enum class PerturbMode { kNoise, kBlur, kBoth };

std::string_view perturb_mode_name(PerturbMode mode);
PerturbMode parse_perturb_mode(std::string_view name);

struct PerturbConfig {
  double noise_sigma = 0.1;
  double blur_sigma_lo = 0.1;
  double blur_sigma_hi = 2.0;
  std::size_t blur_kernel = 3;
  PerturbMode mode = PerturbMode::kBoth;

  void validate() const;
};

/// x + eps, eps ~ N(0, sigma^2 I).
Tensor gaussian_noise(const Tensor& x, double sigma, Rng& rng);

/// size x size kernel w(i, j) ~ exp(-(i^2 + j^2) / (2 sigma^2)), summing to 1.
std::vector<double> gaussian_kernel(std::size_t size, double sigma);

/// Depthwise Gaussian blur of an image batch [N, C, H, W], reflect padding.
Tensor gaussian_blur(const Tensor& x, double sigma, std::size_t kernel = 3);
/// Depthwise width x width mean filter, reflect padding.
Tensor box_blur(const Tensor& x, std::size_t width);

/// One training view T(x). In `kBoth` mode every sample independently picks
/// noise or blur with a fair coin; `chose_noise`, when given, receives the
/// per-sample choice.
Tensor sample_perturbation(const Tensor& x, const PerturbConfig& cfg, Rng& rng,
                           std::vector<bool>* chose_noise = nullptr);

enum class CorruptionFamily {
  kGaussianNoise,
  kShotNoise,
  kImpulseNoise,
  kGaussianBlur,
  kBoxBlur,
  kBrightness,
  kContrast,
  kPixelate,
};

inline constexpr std::array<CorruptionFamily, 8> kAllCorruptions = {
    CorruptionFamily::kGaussianNoise, CorruptionFamily::kShotNoise,
    CorruptionFamily::kImpulseNoise,  CorruptionFamily::kGaussianBlur,
    CorruptionFamily::kBoxBlur,       CorruptionFamily::kBrightness,
    CorruptionFamily::kContrast,      CorruptionFamily::kPixelate};

std::string_view corruption_name(CorruptionFamily family);
CorruptionFamily parse_corruption(std::string_view name);

struct CorruptionSpec {
  CorruptionFamily family = CorruptionFamily::kGaussianNoise;
  int severity = 1;  // 1..5
};

/// Severity table lookup: sigma, photon scale, impulse fraction, blur sigma,
/// box width, brightness offset, contrast factor or pixelate factor.
double severity_parameter(CorruptionFamily family, int severity);

/// Corrupts raw [0, 1] pixels of an image batch [N, C, H, W]; output clamped.
Tensor corrupt(const Tensor& x, const CorruptionSpec& spec, Rng& rng);

}  // namespace macs

#endif  // MACS_PERTURBATIONS_HPP

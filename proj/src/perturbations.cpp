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

#include "macs/perturbations.hpp"

#include <algorithm>
#include <cmath>

#include "macs/error.hpp"
#include "macs/ops.hpp"

namespace macs {

namespace {

void require_images(const Tensor& x, const char* op) {
  if (x.rank() != 4) {
    throw DimensionError(std::string(op) + " needs an image batch [N, C, H, W], got " +
                         shape_str(x.shape()));
  }
}

// Applies a single-channel 2D kernel to every plane of x via conv2d.
Tensor depthwise(const Tensor& x, const std::vector<double>& kernel2d, std::size_t k) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor planes = x.detach().reshape({n * c, 1, h, w});
  Tensor kt = Tensor::from({1, 1, k, k}, kernel2d);
  return conv2d(planes, kt, Padding::kReflect).reshape({n, c, h, w}).detach();
}

Tensor clamp01(std::vector<double> values, const Shape& shape) {
  for (auto& v : values) v = std::clamp(v, 0.0, 1.0);
  return Tensor::from(shape, std::move(values));
}

// First source row (or col) of low-res cell a when n pixels map onto m cells.
std::size_t cell_begin(std::size_t a, std::size_t m, std::size_t n) { return a * n / m; }

}  // namespace

std::string_view perturb_mode_name(PerturbMode mode) {
  switch (mode) {
    case PerturbMode::kNoise: return "noise";
    case PerturbMode::kBlur: return "blur";
    case PerturbMode::kBoth: return "both";
  }
  return "?";
}

PerturbMode parse_perturb_mode(std::string_view name) {
  if (name == "noise") return PerturbMode::kNoise;
  if (name == "blur") return PerturbMode::kBlur;
  if (name == "both") return PerturbMode::kBoth;
  throw ConfigError("unknown perturbation mode '" + std::string(name) + "'");
}

void PerturbConfig::validate() const {
  if (!(noise_sigma >= 0.0)) throw ConfigError("perturb.noise_sigma must be >= 0");
  if (!(blur_sigma_lo > 0.0 && blur_sigma_lo <= blur_sigma_hi)) {
    throw ConfigError("perturb blur sigma range must satisfy 0 < lo <= hi");
  }
  if (blur_kernel < 3 || blur_kernel % 2 == 0) {
    throw ConfigError("perturb.blur_kernel must be odd and >= 3");
  }
}

Tensor gaussian_noise(const Tensor& x, double sigma, Rng& rng) {
  if (sigma < 0.0) throw InputError("gaussian_noise: sigma must be >= 0");
  std::vector<double> out(x.data().begin(), x.data().end());
  if (sigma == 0.0) return Tensor::from(x.shape(), std::move(out));
  for (auto& v : out) v += rng.normal(0.0, sigma);
  return Tensor::from(x.shape(), std::move(out));
}

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
  if (size % 2 == 0) throw InputError("gaussian_kernel: size must be odd");
  if (!(sigma > 0.0)) throw InputError("gaussian_kernel: sigma must be > 0");
  const auto r = static_cast<std::ptrdiff_t>(size / 2);
  std::vector<double> k(size * size);
  double total = 0.0;
  for (std::ptrdiff_t i = -r; i <= r; ++i) {
    for (std::ptrdiff_t j = -r; j <= r; ++j) {
      const double v = std::exp(-static_cast<double>(i * i + j * j) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>((i + r) * static_cast<std::ptrdiff_t>(size) + (j + r))] = v;
      total += v;
    }
  }
  for (auto& v : k) v /= total;
  return k;
}

Tensor gaussian_blur(const Tensor& x, double sigma, std::size_t kernel) {
  require_images(x, "gaussian_blur");
  return depthwise(x, gaussian_kernel(kernel, sigma), kernel);
}

Tensor box_blur(const Tensor& x, std::size_t width) {
  require_images(x, "box_blur");
  if (width % 2 == 0) throw InputError("box_blur: width must be odd");
  std::vector<double> k(width * width, 1.0 / static_cast<double>(width * width));
  return depthwise(x, k, width);
}

Tensor sample_perturbation(const Tensor& x, const PerturbConfig& cfg, Rng& rng,
                           std::vector<bool>* chose_noise) {
  cfg.validate();
  if (cfg.mode == PerturbMode::kNoise) {
    if (chose_noise) chose_noise->assign(x.dim(0), true);
    return gaussian_noise(x, cfg.noise_sigma, rng);
  }
  require_images(x, "blur perturbation");
  const std::size_t n = x.dim(0);
  const std::size_t per = x.numel() / n;
  const Shape one{1, x.dim(1), x.dim(2), x.dim(3)};
  std::vector<double> out(x.data().begin(), x.data().end());
  if (chose_noise) chose_noise->assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const bool noise = cfg.mode == PerturbMode::kBoth && rng.coin(0.5);
    double* sample = out.data() + i * per;
    if (noise) {
      if (chose_noise) (*chose_noise)[i] = true;
      for (std::size_t j = 0; j < per; ++j) sample[j] += rng.normal(0.0, cfg.noise_sigma);
      continue;
    }
    const double sigma = rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi);
    Tensor img = Tensor::from(one, std::vector<double>(sample, sample + per));
    Tensor blurred = gaussian_blur(img, sigma, cfg.blur_kernel);
    std::copy(blurred.data().begin(), blurred.data().end(), sample);
  }
  return Tensor::from(x.shape(), std::move(out));
}

std::string_view corruption_name(CorruptionFamily family) {
  switch (family) {
    case CorruptionFamily::kGaussianNoise: return "gaussian_noise";
    case CorruptionFamily::kShotNoise: return "shot_noise";
    case CorruptionFamily::kImpulseNoise: return "impulse_noise";
    case CorruptionFamily::kGaussianBlur: return "gaussian_blur";
    case CorruptionFamily::kBoxBlur: return "box_blur";
    case CorruptionFamily::kBrightness: return "brightness";
    case CorruptionFamily::kContrast: return "contrast";
    case CorruptionFamily::kPixelate: return "pixelate";
  }
  return "?";
}

CorruptionFamily parse_corruption(std::string_view name) {
  for (auto f : kAllCorruptions) {
    if (corruption_name(f) == name) return f;
  }
  throw ConfigError("unknown corruption family '" + std::string(name) + "'");
}

double severity_parameter(CorruptionFamily family, int severity) {
  if (severity < 1 || severity > 5) {
    throw ConfigError("corruption severity must be in 1..5, got " + std::to_string(severity));
  }
  static constexpr double kTable[8][5] = {
      {0.04, 0.08, 0.12, 0.18, 0.26},      // gaussian_noise sigma
      {500, 250, 100, 75, 50},             // shot_noise photon scale
      {0.01, 0.03, 0.06, 0.10, 0.17},      // impulse_noise fraction
      {0.5, 1.0, 1.5, 2.0, 2.5},           // gaussian_blur sigma
      {3, 3, 5, 5, 7},                     // box_blur width
      {0.05, 0.10, 0.15, 0.20, 0.30},      // brightness offset
      {0.75, 0.6, 0.45, 0.3, 0.2},         // contrast factor
      {1.3, 1.6, 2.0, 2.5, 3.0},           // pixelate downscale factor
  };
  return kTable[static_cast<int>(family)][severity - 1];
}

Tensor corrupt(const Tensor& x, const CorruptionSpec& spec, Rng& rng) {
  require_images(x, "corrupt");
  const double param = severity_parameter(spec.family, spec.severity);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<double> v(x.data().begin(), x.data().end());

  switch (spec.family) {
    case CorruptionFamily::kGaussianNoise:
      for (auto& p : v) p += rng.normal(0.0, param);
      break;
    case CorruptionFamily::kShotNoise:
      for (auto& p : v) p = rng.poisson(std::max(p, 0.0) * param) / param;
      break;
    case CorruptionFamily::kImpulseNoise:
      for (auto& p : v) {
        if (rng.coin(param)) p = rng.coin(0.5) ? 1.0 : 0.0;
      }
      break;
    case CorruptionFamily::kGaussianBlur: {
      const auto k = static_cast<std::size_t>(2 * std::ceil(2.0 * param) + 1);
      Tensor b = gaussian_blur(x, param, k);
      v.assign(b.data().begin(), b.data().end());
      break;
    }
    case CorruptionFamily::kBoxBlur: {
      Tensor b = box_blur(x, static_cast<std::size_t>(param));
      v.assign(b.data().begin(), b.data().end());
      break;
    }
    case CorruptionFamily::kBrightness:
      for (auto& p : v) p += param;
      break;
    case CorruptionFamily::kContrast: {
      const std::size_t hw = h * w;
      for (std::size_t plane = 0; plane < n * c; ++plane) {
        double* px = v.data() + plane * hw;
        double mean = 0.0;
        for (std::size_t i = 0; i < hw; ++i) mean += px[i];
        mean /= static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) px[i] = mean + (px[i] - mean) * param;
      }
      break;
    }
    case CorruptionFamily::kPixelate: {
      const std::size_t mh = std::max<std::size_t>(1, static_cast<std::size_t>(h / param));
      const std::size_t mw = std::max<std::size_t>(1, static_cast<std::size_t>(w / param));
      const std::size_t hw = h * w;
      for (std::size_t plane = 0; plane < n * c; ++plane) {
        double* px = v.data() + plane * hw;
        for (std::size_t a = 0; a < mh; ++a) {
          const std::size_t r0 = cell_begin(a, mh, h), r1 = cell_begin(a + 1, mh, h);
          for (std::size_t b = 0; b < mw; ++b) {
            const std::size_t c0 = cell_begin(b, mw, w), c1 = cell_begin(b + 1, mw, w);
            double acc = 0.0;
            for (std::size_t r = r0; r < r1; ++r)
              for (std::size_t q = c0; q < c1; ++q) acc += px[r * w + q];
            const double avg = acc / static_cast<double>((r1 - r0) * (c1 - c0));
            for (std::size_t r = r0; r < r1; ++r)
              for (std::size_t q = c0; q < c1; ++q) px[r * w + q] = avg;
          }
        }
      }
      break;
    }
  }
  return clamp01(std::move(v), x.shape());
}

}  // namespace macs

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

#ifndef MACS_DATA_HPP
#define MACS_DATA_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "macs/tensor.hpp"

namespace macs {

/// Per-channel standardization record. For [N, d] data every feature is its
/// own channel.
struct Normalization {
  bool applied = false;
  std::vector<double> mean;
  std::vector<double> std;
};

struct DatasetSplit {
  Tensor inputs;            // [N, d] or [N, C, H, W]
  std::vector<int> labels;  // in [0, classes)
  std::size_t classes = 0;
  Normalization norm;
  std::vector<std::size_t> source_index;  // row of each sample in the loaded dataset

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  std::size_t channels() const;
  void validate() const;

  /// Rows `idx` as a batch.
  Tensor batch_inputs(std::span<const std::size_t> idx) const;
  std::vector<int> batch_labels(std::span<const std::size_t> idx) const;
  /// Rows `idx` as a new split (normalization record carried over).
  DatasetSplit select(std::span<const std::size_t> idx) const;

  /// max_i ||x_i||_2.
  double max_input_norm() const;
};

/// IDX pair: images magic 0x00000803 (u8, count, rows, cols), labels magic
/// 0x00000801 (u8, count). Big-endian. Pixels scaled to [0, 1]; result is
/// [N, 1, rows, cols].
DatasetSplit load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// CIFAR binary batches: 1 label byte (2 for CIFAR-100: coarse, fine) then
/// 3072 bytes of R, G, B 32x32 planes. The fine label is used.
DatasetSplit load_cifar_bin(std::span<const std::filesystem::path> paths, bool cifar100 = false);

/// Interleaved half-circles in R^2, K = 2. Points are evenly spaced along
/// each arc, then shuffled; `noise` is the stddev of added Gaussian jitter.
DatasetSplit synth_two_moons(std::size_t n, double noise, std::uint64_t seed);

struct BlobOptions {
  double radius = 0.25;        // class centers on a circle, fraction of size
  double blob_sigma = 0.125;   // blob width, fraction of size
  double jitter = 0.0625;      // center jitter stddev, fraction of size
  double amplitude_lo = 0.6;   // blob peak ~ U[lo, hi]
  double amplitude_hi = 1.0;
  double pixel_noise = 0.05;   // additive N(0, s^2), then clamped to [0, 1]
  std::size_t distractors = 0; // extra blobs at random positions
};

/// K single-channel Gaussian intensity blobs at class-specific centers on
/// size x size canvases, balanced classes, shuffled.
DatasetSplit synth_blob_images(std::size_t n, std::size_t classes, std::size_t size,
                               std::uint64_t seed, const BlobOptions& opts = {});

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct Splits {
  DatasetSplit train;
  DatasetSplit val;
  DatasetSplit test;
};

/// Seeded shuffle, then contiguous train/val/test blocks.
Splits split(const DatasetSplit& ds, const SplitFractions& fractions, std::uint64_t seed);

/// Stratified: class k keeps ceil(p * n_k) seeded-random samples, in their
/// original order. p = 1 returns the split unchanged.
DatasetSplit subset_fraction(const DatasetSplit& train, double p, std::uint64_t seed);

/// Per-channel statistics of `train` (std floored at 1e-8).
Normalization channel_stats(const DatasetSplit& train);

/// Standardizes with its own statistics.
DatasetSplit normalize(const DatasetSplit& train);
/// Standardizes with previously computed (train) statistics.
DatasetSplit normalize(const DatasetSplit& ds, const Normalization& stats);
/// Applies a normalization record to a raw batch of the same layout.
Tensor normalize_inputs(const Tensor& raw, const Normalization& stats);
/// Inverse of `normalize_inputs`.
Tensor denormalize_inputs(const Tensor& x, const Normalization& stats);

}  // namespace macs

#endif  // MACS_DATA_HPP

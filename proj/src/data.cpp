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

#include "macs/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <string>

#include "macs/error.hpp"
#include "macs/rng.hpp"

namespace macs {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& file) {
  if (off + 4 > b.size()) throw FormatError(file + ": truncated header", off);
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

std::size_t per_sample(const Tensor& x) { return x.numel() / x.dim(0); }

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

DatasetSplit finish(Shape shape, std::vector<double> pixels, std::vector<int> labels,
                    std::size_t classes) {
  DatasetSplit ds;
  ds.inputs = Tensor::from(std::move(shape), std::move(pixels));
  ds.source_index = iota_n(labels.size());
  ds.labels = std::move(labels);
  ds.classes = classes;
  ds.validate();
  return ds;
}

DatasetSplit shuffled(const DatasetSplit& ds, Rng& rng) {
  const auto perm = rng.permutation(ds.size());
  DatasetSplit out = ds.select(perm);
  out.source_index = iota_n(ds.size());
  return out;
}

}  // namespace

Shape DatasetSplit::sample_shape() const {
  const auto& s = inputs.shape();
  return Shape(s.begin() + 1, s.end());
}

std::size_t DatasetSplit::channels() const {
  return inputs.rank() == 4 ? inputs.dim(1) : per_sample(inputs);
}

void DatasetSplit::validate() const {
  if (!inputs.defined() || labels.empty()) throw InputError("dataset split is empty");
  if (inputs.rank() != 2 && inputs.rank() != 4) {
    throw DimensionError("dataset inputs must be [N, d] or [N, C, H, W], got " +
                         shape_str(inputs.shape()));
  }
  if (inputs.dim(0) != labels.size()) throw DimensionError("inputs and labels disagree on N");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) +
                       ")");
    }
  }
}

Tensor DatasetSplit::batch_inputs(std::span<const std::size_t> idx) const {
  const std::size_t per = per_sample(inputs);
  auto src = inputs.data();
  std::vector<double> out(idx.size() * per);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= size()) throw InputError("batch index out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                out.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  Shape shape = inputs.shape();
  shape[0] = idx.size();
  return Tensor::from(std::move(shape), std::move(out));
}

std::vector<int> DatasetSplit::batch_labels(std::span<const std::size_t> idx) const {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels.at(idx[i]);
  return out;
}

DatasetSplit DatasetSplit::select(std::span<const std::size_t> idx) const {
  if (idx.empty()) throw ConfigError("selection produced an empty split");
  DatasetSplit out;
  out.inputs = batch_inputs(idx);
  out.labels = batch_labels(idx);
  out.classes = classes;
  out.norm = norm;
  out.source_index.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out.source_index[i] = source_index.at(idx[i]);
  return out;
}

double DatasetSplit::max_input_norm() const {
  const std::size_t per = per_sample(inputs);
  auto v = inputs.data();
  double best = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < per; ++j) s += v[i * per + j] * v[i * per + j];
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

DatasetSplit load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  const std::string in = images.string(), ln = labels.string();

  const std::uint32_t img_magic = be32(img, 0, in);
  if (img_magic != 0x00000803) throw FormatError(in + ": expected image magic 0x00000803", 0);
  const std::uint32_t lab_magic = be32(lab, 0, ln);
  if (lab_magic != 0x00000801) throw FormatError(ln + ": expected label magic 0x00000801", 0);

  const std::size_t count = be32(img, 4, in);
  const std::size_t rows = be32(img, 8, in);
  const std::size_t cols = be32(img, 12, in);
  const std::size_t n_labels = be32(lab, 4, ln);
  if (count == 0 || rows == 0 || cols == 0) throw FormatError(in + ": zero dimension", 4);
  if (n_labels != count) {
    throw FormatError(ln + ": " + std::to_string(n_labels) + " labels for " +
                          std::to_string(count) + " images",
                      4);
  }
  const std::size_t need_img = 16 + count * rows * cols;
  if (img.size() < need_img) throw FormatError(in + ": truncated pixel payload", img.size());
  if (img.size() > need_img) throw FormatError(in + ": trailing bytes", need_img);
  const std::size_t need_lab = 8 + count;
  if (lab.size() < need_lab) throw FormatError(ln + ": truncated label payload", lab.size());
  if (lab.size() > need_lab) throw FormatError(ln + ": trailing bytes", need_lab);

  std::vector<double> px(count * rows * cols);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = img[16 + i] / 255.0;
  std::vector<int> y(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    y[i] = lab[8 + i];
    max_label = std::max(max_label, y[i]);
  }
  const std::size_t classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  return finish({count, 1, rows, cols}, std::move(px), std::move(y), classes);
}

DatasetSplit load_cifar_bin(std::span<const std::filesystem::path> paths, bool cifar100) {
  if (paths.empty()) throw InputError("load_cifar_bin needs at least one file");
  const std::size_t label_bytes = cifar100 ? 2 : 1;
  const std::size_t record = label_bytes + 3072;
  std::vector<double> px;
  std::vector<int> y;
  for (const auto& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % record != 0) {
      throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                            " is not a multiple of " + std::to_string(record),
                        bytes.size() - bytes.size() % record);
    }
    for (std::size_t off = 0; off < bytes.size(); off += record) {
      y.push_back(bytes[off + label_bytes - 1]);
      for (std::size_t j = 0; j < 3072; ++j) px.push_back(bytes[off + label_bytes + j] / 255.0);
    }
  }
  const std::size_t n = y.size();
  const std::size_t classes = cifar100 ? 100 : 10;
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<std::size_t>(y[i]) >= classes) {
      throw FormatError("label byte " + std::to_string(y[i]) + " out of range", i * record);
    }
  }
  return finish({n, 3, 32, 32}, std::move(px), std::move(y), classes);
}

DatasetSplit synth_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  if (n < 2) throw InputError("two_moons needs n >= 2");
  if (noise < 0.0) throw InputError("two_moons noise must be >= 0");
  Rng rng = Rng::stream(seed, "data.two_moons");
  const std::size_t n_outer = (n + 1) / 2, n_inner = n - n_outer;
  std::vector<double> pts;
  std::vector<int> y;
  pts.reserve(2 * n);
  auto arc = [](std::size_t i, std::size_t m) {
    return m > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(m - 1) : 0.0;
  };
  for (std::size_t i = 0; i < n_outer; ++i) {
    const double t = arc(i, n_outer);
    pts.push_back(std::cos(t));
    pts.push_back(std::sin(t));
    y.push_back(0);
  }
  for (std::size_t i = 0; i < n_inner; ++i) {
    const double t = arc(i, n_inner);
    pts.push_back(1.0 - std::cos(t));
    pts.push_back(0.5 - std::sin(t));
    y.push_back(1);
  }
  if (noise > 0.0)
    for (auto& v : pts) v += rng.normal(0.0, noise);
  DatasetSplit ds = finish({n, 2}, std::move(pts), std::move(y), 2);
  return shuffled(ds, rng);
}

DatasetSplit synth_blob_images(std::size_t n, std::size_t classes, std::size_t size,
                               std::uint64_t seed, const BlobOptions& opts) {
  if (classes < 2 || n < classes) throw InputError("blob_images needs n >= K >= 2");
  if (size < 2) throw InputError("blob_images needs size >= 2");
  if (!(opts.blob_sigma > 0.0) || opts.amplitude_lo > opts.amplitude_hi) {
    throw InputError("blob_images: invalid options");
  }
  Rng rng = Rng::stream(seed, "data.blob_images");
  const double s = static_cast<double>(size);
  const double mid = (s - 1.0) / 2.0;
  const double width = opts.blob_sigma * s;
  std::vector<double> px(n * size * size, 0.0);
  std::vector<int> y(n);

  auto stamp = [&](double* canvas, double cy, double cx, double amp) {
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) {
        const double dr = static_cast<double>(r) - cy, dc = static_cast<double>(c) - cx;
        canvas[r * size + c] += amp * std::exp(-(dr * dr + dc * dc) / (2.0 * width * width));
      }
  };

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    y[i] = static_cast<int>(k);
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(classes);
    const double cy = mid + opts.radius * s * std::sin(angle) + rng.normal(0.0, opts.jitter * s);
    const double cx = mid + opts.radius * s * std::cos(angle) + rng.normal(0.0, opts.jitter * s);
    double* canvas = px.data() + i * size * size;
    stamp(canvas, cy, cx, rng.uniform(opts.amplitude_lo, opts.amplitude_hi));
    for (std::size_t d = 0; d < opts.distractors; ++d) {
      const double dy = rng.uniform(0.0, s - 1.0), dx = rng.uniform(0.0, s - 1.0);
      stamp(canvas, dy, dx, rng.uniform(opts.amplitude_lo, opts.amplitude_hi) * 0.5);
    }
    for (std::size_t j = 0; j < size * size; ++j) {
      if (opts.pixel_noise > 0.0) canvas[j] += rng.normal(0.0, opts.pixel_noise);
      canvas[j] = std::clamp(canvas[j], 0.0, 1.0);
    }
  }
  DatasetSplit ds = finish({n, 1, size, size}, std::move(px), std::move(y), classes);
  return shuffled(ds, rng);
}

Splits split(const DatasetSplit& ds, const SplitFractions& f, std::uint64_t seed) {
  ds.validate();
  if (f.train < 0.0 || f.val < 0.0 || f.test < 0.0 ||
      std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  }
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw ConfigError("split of " + std::to_string(n) + " samples leaves an empty part");
  }
  Rng rng = Rng::stream(seed, "data.split");
  const auto perm = rng.permutation(n);
  auto part = [&](std::size_t lo, std::size_t hi) {
    return ds.select(std::span<const std::size_t>(perm).subspan(lo, hi - lo));
  };
  return {part(0, n_train), part(n_train, n_train + n_val), part(n_train + n_val, n)};
}

DatasetSplit subset_fraction(const DatasetSplit& train, double p, std::uint64_t seed) {
  train.validate();
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("data fraction must be in (0, 1]");
  if (p == 1.0) return train;
  std::vector<std::vector<std::size_t>> by_class(train.classes);
  for (std::size_t i = 0; i < train.size(); ++i) by_class[train.labels[i]].push_back(i);
  Rng rng = Rng::stream(seed, "data.subset");
  std::vector<std::size_t> keep;
  for (auto& members : by_class) {
    if (members.empty()) continue;
    const double want = p * static_cast<double>(members.size());
    // Guard against p * n landing a hair above an integer.
    const auto take = static_cast<std::size_t>(std::ceil(want - 1e-9));
    std::shuffle(members.begin(), members.end(), rng.engine());
    keep.insert(keep.end(), members.begin(),
                members.begin() + static_cast<std::ptrdiff_t>(std::min(take, members.size())));
  }
  std::sort(keep.begin(), keep.end());
  return train.select(keep);
}

Normalization channel_stats(const DatasetSplit& train) {
  train.validate();
  const std::size_t n = train.size();
  const std::size_t c = train.channels();
  const std::size_t per = per_sample(train.inputs);
  const std::size_t plane = per / c;
  auto v = train.inputs.data();
  Normalization s;
  s.mean.assign(c, 0.0);
  s.std.assign(c, 0.0);
  const double count = static_cast<double>(n * plane);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < plane; ++j) s.mean[ch] += v[i * per + ch * plane + j];
  for (auto& m : s.mean) m /= count;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < plane; ++j) {
        const double d = v[i * per + ch * plane + j] - s.mean[ch];
        s.std[ch] += d * d;
      }
  for (auto& sd : s.std) sd = std::max(std::sqrt(sd / count), 1e-8);
  s.applied = true;
  return s;
}

Tensor normalize_inputs(const Tensor& raw, const Normalization& stats) {
  if (!stats.applied) throw UsageError("normalization record is empty");
  const std::size_t per = per_sample(raw);
  const std::size_t c = raw.rank() == 4 ? raw.dim(1) : per;
  if (c != stats.mean.size()) {
    throw DimensionError("normalization has " + std::to_string(stats.mean.size()) +
                         " channels, input " + shape_str(raw.shape()));
  }
  const std::size_t plane = per / c;
  std::vector<double> v(raw.data().begin(), raw.data().end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t ch = (i % per) / plane;
    v[i] = (v[i] - stats.mean[ch]) / stats.std[ch];
  }
  return Tensor::from(raw.shape(), std::move(v));
}

Tensor denormalize_inputs(const Tensor& raw, const Normalization& stats) {
  if (!stats.applied) throw UsageError("normalization record is empty");
  const std::size_t per = per_sample(raw);
  const std::size_t c = raw.rank() == 4 ? raw.dim(1) : per;
  if (c != stats.mean.size()) {
    throw DimensionError("normalization has " + std::to_string(stats.mean.size()) +
                         " channels, input " + shape_str(raw.shape()));
  }
  const std::size_t plane = per / c;
  std::vector<double> v(raw.data().begin(), raw.data().end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t ch = (i % per) / plane;
    v[i] = v[i] * stats.std[ch] + stats.mean[ch];
  }
  return Tensor::from(raw.shape(), std::move(v));
}

DatasetSplit normalize(const DatasetSplit& train) { return normalize(train, channel_stats(train)); }

DatasetSplit normalize(const DatasetSplit& ds, const Normalization& stats) {
  if (ds.norm.applied) throw UsageError("dataset split is already normalized");
  DatasetSplit out = ds;
  out.inputs = normalize_inputs(ds.inputs, stats);
  out.norm = stats;
  return out;
}

}  // namespace macs

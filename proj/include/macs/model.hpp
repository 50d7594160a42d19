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

#ifndef MACS_MODEL_HPP
#define MACS_MODEL_HPP

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "macs/tensor.hpp"

namespace macs {

enum class LayerKind { kDense, kConv2d, kRelu, kMaxPool2, kFlatten };

std::string_view layer_kind_name(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

/// dense: in/out features. conv2d: in/out channels and an odd kernel extent
/// (zero "same" padding). Other kinds carry no dims.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;

  bool has_params() const { return kind == LayerKind::kDense || kind == LayerKind::kConv2d; }
  bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
  std::string preset;  // informational; empty for hand-built specs
  Shape input_shape;   // per-sample: {d} or {C, H, W}
  std::vector<LayerSpec> layers;

  /// Per-sample output shape of every layer; throws ConfigError when
  /// consecutive layers do not compose or the head is not [K >= 2].
  std::vector<Shape> layer_output_shapes() const;
  std::size_t num_classes() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Reference architectures: "linear", "mlp" (d-256-128-K), "tinycnn".
/// Dense presets flatten spatial inputs first.
ModelSpec make_preset(std::string_view preset, const Shape& input_shape, std::size_t classes);

struct NamedParam {
  std::string name;
  Tensor value;
};

/// Evaluates f(x; theta) for a batch and counts forward invocations.
///
/// Copies are deep (parameters are cloned); the forward counter is copied by
/// value. Inference through `forward(x, false)` never touches the tape and is
/// safe to call concurrently on a frozen model.
class Model {
 public:
  Model() = default;
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;

  /// He-normal weights N(0, 2/fan_in), zero biases, fully determined by seed.
  static Model init(const ModelSpec& spec, std::uint64_t seed);

  /// x: [N, input_shape...] -> logits [N, K]. With `record` the result is
  /// attached to the parameters' tape.
  Tensor forward(const Tensor& x, bool record = true) const;

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t num_classes() const { return spec_.num_classes(); }
  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }
  std::size_t param_count() const;
  void zero_grad();

  std::uint64_t forward_count() const { return forward_count_.load(); }
  void reset_forward_count() { forward_count_.store(0); }

 private:
  ModelSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<NamedParam> params_;
  mutable std::atomic<std::uint64_t> forward_count_{0};
};

/// Checkpoint layout: "MACS0001", u64 little-endian header length, UTF-8
/// JSON header (spec, parameter names and shapes, seed), then every
/// parameter as little-endian float64 in header order.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

/// Bytes before the payload for this model's checkpoint.
std::size_t checkpoint_header_bytes(const Model& model);

}  // namespace macs

#endif  // MACS_MODEL_HPP

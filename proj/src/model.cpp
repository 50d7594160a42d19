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

#include "macs/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "macs/error.hpp"
#include "macs/ops.hpp"
#include "macs/rng.hpp"

namespace macs {

using nlohmann::json;

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool2: return "maxpool2";
    case LayerKind::kFlatten: return "flatten";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "dense") return LayerKind::kDense;
  if (name == "conv2d") return LayerKind::kConv2d;
  if (name == "relu") return LayerKind::kRelu;
  if (name == "maxpool2") return LayerKind::kMaxPool2;
  if (name == "flatten") return LayerKind::kFlatten;
  throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

std::vector<Shape> ModelSpec::layer_output_shapes() const {
  if (input_shape.empty()) throw ConfigError("model spec has no input shape");
  if (layers.empty()) throw ConfigError("model spec has no layers");
  std::vector<Shape> shapes;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" +
                              std::string(layer_kind_name(l.kind)) + ") on input " +
                              shape_str(cur);
    switch (l.kind) {
      case LayerKind::kDense:
        if (cur.size() != 1 || cur[0] != l.in || l.out == 0)
          throw ConfigError(where + ": expects [" + std::to_string(l.in) + "]");
        cur = {l.out};
        break;
      case LayerKind::kConv2d:
        if (cur.size() != 3 || cur[0] != l.in || l.out == 0 || l.kernel % 2 == 0)
          throw ConfigError(where + ": expects [" + std::to_string(l.in) +
                            ", H, W] and an odd kernel");
        cur = {l.out, cur[1], cur[2]};
        break;
      case LayerKind::kRelu:
        break;
      case LayerKind::kMaxPool2:
        if (cur.size() != 3 || cur[1] < 2 || cur[2] < 2)
          throw ConfigError(where + ": expects [C, H>=2, W>=2]");
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::kFlatten:
        cur = {numel(cur)};
        break;
    }
    shapes.push_back(cur);
  }
  if (cur.size() != 1 || cur[0] < 2) {
    throw ConfigError("model head must output K >= 2 logits, got " + shape_str(cur));
  }
  return shapes;
}

std::size_t ModelSpec::num_classes() const { return layer_output_shapes().back()[0]; }

ModelSpec make_preset(std::string_view preset, const Shape& input_shape, std::size_t classes) {
  ModelSpec spec;
  spec.preset = std::string(preset);
  spec.input_shape = input_shape;
  const std::size_t d = numel(input_shape);
  const bool spatial = input_shape.size() == 3;
  auto dense = [](std::size_t in, std::size_t out) {
    return LayerSpec{LayerKind::kDense, in, out, 0};
  };
  const LayerSpec relu{LayerKind::kRelu, 0, 0, 0};
  if (preset == "linear" || preset == "mlp") {
    if (spatial) spec.layers.push_back({LayerKind::kFlatten, 0, 0, 0});
    if (preset == "linear") {
      spec.layers.push_back(dense(d, classes));
    } else {
      spec.layers.insert(spec.layers.end(),
                         {dense(d, 256), relu, dense(256, 128), relu, dense(128, classes)});
    }
  } else if (preset == "tinycnn") {
    if (!spatial) throw ConfigError("tinycnn needs [C, H, W] inputs, got " + shape_str(input_shape));
    const std::size_t c = input_shape[0];
    const LayerSpec pool{LayerKind::kMaxPool2, 0, 0, 0};
    spec.layers = {{LayerKind::kConv2d, c, 16, 3}, relu, pool, {LayerKind::kConv2d, 16, 32, 3},
                   relu, pool, {LayerKind::kFlatten, 0, 0, 0}};
    const Shape after = spec.layer_output_shapes().back();
    spec.layers.push_back(dense(after[0], classes));
  } else {
    throw ConfigError("unknown model preset '" + std::string(preset) + "'");
  }
  spec.layer_output_shapes();
  return spec;
}

Model::Model(const Model& other)
    : spec_(other.spec_), seed_(other.seed_), forward_count_(other.forward_count()) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) {
    Tensor copy = p.value.detach();
    copy.set_requires_grad(p.value.requires_grad());
    params_.push_back({p.name, copy});
  }
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

Model::Model(Model&& other) noexcept
    : spec_(std::move(other.spec_)),
      seed_(other.seed_),
      params_(std::move(other.params_)),
      forward_count_(other.forward_count()) {}

Model& Model::operator=(Model&& other) noexcept {
  spec_ = std::move(other.spec_);
  seed_ = other.seed_;
  params_ = std::move(other.params_);
  forward_count_.store(other.forward_count());
  return *this;
}

Model Model::init(const ModelSpec& spec, std::uint64_t seed) {
  const auto shapes = spec.layer_output_shapes();
  Model m;
  m.spec_ = spec;
  m.seed_ = seed;
  Rng rng = Rng::stream(seed, "init");
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (!l.has_params()) continue;
    Shape wshape;
    std::size_t fan_in = 0;
    if (l.kind == LayerKind::kDense) {
      wshape = {l.out, l.in};
      fan_in = l.in;
    } else {
      wshape = {l.out, l.in, l.kernel, l.kernel};
      fan_in = l.in * l.kernel * l.kernel;
    }
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> w(numel(wshape));
    for (auto& v : w) v = rng.normal(0.0, stddev);
    const std::string prefix = "layers." + std::to_string(i) + ".";
    m.params_.push_back({prefix + "weight", Tensor::from(wshape, std::move(w), true)});
    m.params_.push_back({prefix + "bias", Tensor::zeros({l.out}, true)});
  }
  return m;
}

Tensor Model::forward(const Tensor& x, bool record) const {
  if (x.rank() != spec_.input_shape.size() + 1 ||
      !std::equal(spec_.input_shape.begin(), spec_.input_shape.end(), x.shape().begin() + 1)) {
    throw DimensionError("model expects [N, " + shape_str(spec_.input_shape).substr(1) +
                         " input, got " + shape_str(x.shape()));
  }
  forward_count_.fetch_add(1);
  std::size_t next_param = 0;
  auto param = [&]() -> Tensor {
    const Tensor& p = params_[next_param++].value;
    return record ? p : p.detach();
  };
  Tensor h = x;
  for (const auto& l : spec_.layers) {
    switch (l.kind) {
      case LayerKind::kDense: {
        Tensor w = param();
        Tensor b = param();
        h = linear(h, w, b);
        break;
      }
      case LayerKind::kConv2d: {
        Tensor w = param();
        Tensor b = param();
        h = add_channel_bias(conv2d(h, w, Padding::kZero), b);
        break;
      }
      case LayerKind::kRelu: h = relu(h); break;
      case LayerKind::kMaxPool2: h = maxpool2(h); break;
      case LayerKind::kFlatten: h = flatten(h); break;
    }
  }
  return h;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void Model::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

namespace {

constexpr char kMagic[8] = {'M', 'A', 'C', 'S', '0', '0', '0', '1'};

json header_json(const Model& model) {
  json layers = json::array();
  for (const auto& l : model.spec().layers) {
    json jl = {{"kind", layer_kind_name(l.kind)}};
    if (l.has_params()) {
      jl["in"] = l.in;
      jl["out"] = l.out;
    }
    if (l.kind == LayerKind::kConv2d) jl["kernel"] = l.kernel;
    layers.push_back(jl);
  }
  json params = json::array();
  for (const auto& p : model.params()) params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  return {{"preset", model.spec().preset},
          {"input_shape", model.spec().input_shape},
          {"layers", layers},
          {"params", params},
          {"seed", model.seed()}};
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::size_t checkpoint_header_bytes(const Model& model) {
  return sizeof(kMagic) + 8 + header_json(model).dump().size();
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const std::string header = header_json(model).dump();
  std::string bytes(kMagic, sizeof(kMagic));
  put_u64(bytes, header.size());
  bytes += header;
  for (const auto& p : model.params()) {
    for (double v : p.value.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      put_u64(bytes, bits);
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw UsageError("short write on checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic, expected MACS0001", 0);
  }
  if (bytes.size() < 16) throw FormatError("checkpoint: truncated header length", 8);
  const std::uint64_t header_len = get_u64(u + 8);
  if (header_len > bytes.size() - 16) {
    throw FormatError("checkpoint: header length " + std::to_string(header_len) +
                          " exceeds file size",
                      8);
  }
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed JSON header: ") + e.what(), 16);
  }

  ModelSpec spec;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Shape>> declared;
  try {
    spec.preset = header.at("preset").get<std::string>();
    spec.input_shape = header.at("input_shape").get<Shape>();
    for (const auto& jl : header.at("layers")) {
      LayerSpec l;
      l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
      if (l.has_params()) {
        l.in = jl.at("in").get<std::size_t>();
        l.out = jl.at("out").get<std::size_t>();
      }
      if (l.kind == LayerKind::kConv2d) l.kernel = jl.at("kernel").get<std::size_t>();
      spec.layers.push_back(l);
    }
    for (const auto& jp : header.at("params"))
      declared.emplace_back(jp.at("name").get<std::string>(), jp.at("shape").get<Shape>());
    seed = header.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: incomplete header: ") + e.what(), 16);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what(), 16);
  }

  Model model;
  try {
    model = Model::init(spec, seed);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid model spec: ") + e.what(), 16);
  }
  if (declared.size() != model.params().size()) {
    throw FormatError("checkpoint: header declares " + std::to_string(declared.size()) +
                          " parameters, spec implies " + std::to_string(model.params().size()),
                      16);
  }
  std::size_t payload = 0;
  for (std::size_t i = 0; i < declared.size(); ++i) {
    const auto& p = model.params()[i];
    if (declared[i].first != p.name || declared[i].second != p.value.shape()) {
      throw FormatError("checkpoint: parameter " + declared[i].first + " " +
                            shape_str(declared[i].second) + " does not match spec (" + p.name +
                            " " + shape_str(p.value.shape()) + ")",
                        16);
    }
    payload += 8 * p.value.numel();
  }
  const std::size_t start = 16 + header_len;
  if (bytes.size() - start != payload) {
    throw FormatError("checkpoint: payload is " + std::to_string(bytes.size() - start) +
                          " bytes, header declares " + std::to_string(payload),
                      std::min(bytes.size(), start + payload));
  }
  std::size_t off = start;
  for (auto& p : model.params()) {
    auto values = p.value.mutable_data();
    for (auto& v : values) {
      const std::uint64_t bits = get_u64(u + off);
      std::memcpy(&v, &bits, sizeof(v));
      off += 8;
    }
  }
  return model;
}

}  // namespace macs

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

#include "macs/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "macs/error.hpp"

namespace macs {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

struct Binding {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define MACS_DOUBLE(KEY, FIELD)                                                              \
  Binding {                                                                                  \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_double(KEY, v); },     \
        [](const ExperimentConfig& c) { return fmt(c.FIELD); }                               \
  }
#define MACS_SIZE(KEY, FIELD)                                                                \
  Binding {                                                                                  \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_uint(KEY, v); },       \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                    \
  }
#define MACS_BOOL(KEY, FIELD)                                                                \
  Binding {                                                                                  \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_bool(KEY, v); },       \
        [](const ExperimentConfig& c) { return fmt(c.FIELD); }                               \
  }
#define MACS_STRING(KEY, FIELD)                                                              \
  Binding {                                                                                  \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = v; },                     \
        [](const ExperimentConfig& c) { return c.FIELD; }                                    \
  }
#define MACS_LIST(KEY, FIELD)                                                                \
  Binding {                                                                                  \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = split_list(v); },         \
        [](const ExperimentConfig& c) { return join(c.FIELD); }                              \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      MACS_STRING("name", name),
      MACS_STRING("out_dir", out_dir),
      MACS_STRING("model", model),
      Binding{"objective",
              [](ExperimentConfig& c, const std::string& v) { c.objective = parse_objective(v); },
              [](const ExperimentConfig& c) { return std::string(objective_name(c.objective)); }},
      MACS_SIZE("epochs", epochs),
      MACS_SIZE("batch_size", batch_size),
      Binding{"seeds",
              [](ExperimentConfig& c, const std::string& v) {
                c.seeds.clear();
                for (const auto& s : split_list(v)) c.seeds.push_back(to_uint("seeds", s));
              },
              [](const ExperimentConfig& c) {
                std::vector<std::string> s;
                for (auto x : c.seeds) s.push_back(std::to_string(x));
                return join(s);
              }},
      MACS_DOUBLE("data_fraction", data_fraction),
      MACS_DOUBLE("warmup_fraction", warmup_fraction),
      MACS_BOOL("pinsker_audit", pinsker_audit),

      MACS_STRING("data.kind", data.kind),
      MACS_SIZE("data.n", data.n),
      MACS_SIZE("data.classes", data.classes),
      MACS_SIZE("data.size", data.size),
      MACS_DOUBLE("data.noise", data.noise),
      MACS_SIZE("data.seed", data.seed),
      MACS_DOUBLE("data.train_fraction", data.fractions.train),
      MACS_DOUBLE("data.val_fraction", data.fractions.val),
      MACS_DOUBLE("data.test_fraction", data.fractions.test),
      MACS_STRING("data.images", data.images),
      MACS_STRING("data.labels", data.labels),
      MACS_STRING("data.test_images", data.test_images),
      MACS_STRING("data.test_labels", data.test_labels),
      MACS_LIST("data.files", data.files),
      MACS_LIST("data.test_files", data.test_files),
      MACS_DOUBLE("data.blob.radius", data.blob.radius),
      MACS_DOUBLE("data.blob.sigma", data.blob.blob_sigma),
      MACS_DOUBLE("data.blob.jitter", data.blob.jitter),
      MACS_DOUBLE("data.blob.amplitude_lo", data.blob.amplitude_lo),
      MACS_DOUBLE("data.blob.amplitude_hi", data.blob.amplitude_hi),
      MACS_DOUBLE("data.blob.pixel_noise", data.blob.pixel_noise),
      MACS_SIZE("data.blob.distractors", data.blob.distractors),

      MACS_DOUBLE("macs.delta", macs.delta),
      MACS_DOUBLE("macs.lambda_m", macs.lambda_m),
      MACS_DOUBLE("macs.lambda_c", macs.lambda_c),

      Binding{"perturb.mode",
              [](ExperimentConfig& c, const std::string& v) { c.perturb.mode = parse_perturb_mode(v); },
              [](const ExperimentConfig& c) { return std::string(perturb_mode_name(c.perturb.mode)); }},
      Binding{"perturb.space",
              [](ExperimentConfig& c, const std::string& v) { c.perturb_space = parse_perturb_space(v); },
              [](const ExperimentConfig& c) { return std::string(perturb_space_name(c.perturb_space)); }},
      MACS_DOUBLE("perturb.noise_sigma", perturb.noise_sigma),
      MACS_DOUBLE("perturb.blur_sigma_lo", perturb.blur_sigma_lo),
      MACS_DOUBLE("perturb.blur_sigma_hi", perturb.blur_sigma_hi),
      MACS_SIZE("perturb.blur_kernel", perturb.blur_kernel),

      Binding{"optim.kind",
              [](ExperimentConfig& c, const std::string& v) { c.optim.kind = parse_optim_kind(v); },
              [](const ExperimentConfig& c) { return std::string(optim_kind_name(c.optim.kind)); }},
      MACS_DOUBLE("optim.lr", optim.lr_max),
      MACS_DOUBLE("optim.lr_min", optim.lr_min),
      MACS_DOUBLE("optim.momentum", optim.momentum),
      MACS_DOUBLE("optim.beta1", optim.beta1),
      MACS_DOUBLE("optim.beta2", optim.beta2),
      MACS_DOUBLE("optim.eps", optim.eps),
      MACS_DOUBLE("optim.weight_decay", optim.weight_decay),

      MACS_DOUBLE("baseline.smoothing", smoothing),
      MACS_DOUBLE("baseline.focal_gamma", focal_gamma),
      MACS_DOUBLE("baseline.mixup_alpha", mixup_alpha),

      MACS_BOOL("eval.corruptions", eval.corruptions),
      Binding{"eval.families",
              [](ExperimentConfig& c, const std::string& v) {
                c.eval.families.clear();
                for (const auto& f : split_list(v)) c.eval.families.push_back(parse_corruption(f));
              },
              [](const ExperimentConfig& c) {
                std::vector<std::string> s;
                for (auto f : c.eval.families) s.emplace_back(corruption_name(f));
                return join(s);
              }},
      Binding{"eval.severities",
              [](ExperimentConfig& c, const std::string& v) {
                c.eval.severities.clear();
                for (const auto& s : split_list(v)) {
                  c.eval.severities.push_back(static_cast<int>(to_uint("eval.severities", s)));
                }
              },
              [](const ExperimentConfig& c) {
                std::vector<std::string> s;
                for (auto x : c.eval.severities) s.push_back(std::to_string(x));
                return join(s);
              }},
      MACS_BOOL("eval.temperature", eval.temperature),
      MACS_BOOL("eval.analysis", eval.analysis),
      MACS_SIZE("eval.analysis_samples", eval.analysis_samples),
      MACS_SIZE("eval.sensitivity_n", eval.sensitivity_n),
      MACS_DOUBLE("eval.sensitivity_sigma", eval.sensitivity_sigma),
      MACS_DOUBLE("eval.margin_gamma", eval.margin_gamma),
      MACS_SIZE("eval.overhead_steps", eval.overhead_steps),
      MACS_SIZE("eval.overhead_warmup", eval.overhead_warmup),
  };
  return table;
}

#undef MACS_DOUBLE
#undef MACS_SIZE
#undef MACS_BOOL
#undef MACS_STRING
#undef MACS_LIST

}  // namespace

ConfigMap ConfigMap::parse(std::string_view text, const std::string& source) {
  ConfigMap map;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    map.set(key, value);
  }
  return map;
}

ConfigMap ConfigMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string_view objective_name(Objective o) {
  switch (o) {
    case Objective::kCe: return "ce";
    case Objective::kLabelSmoothing: return "label_smoothing";
    case Objective::kFocal: return "focal";
    case Objective::kMixup: return "mixup";
    case Objective::kMacs: return "macs";
    case Objective::kMacsMarginOnly: return "macs_margin_only";
    case Objective::kMacsConsistencyOnly: return "macs_consistency_only";
  }
  return "?";
}

Objective parse_objective(std::string_view name) {
  for (auto o : {Objective::kCe, Objective::kLabelSmoothing, Objective::kFocal, Objective::kMixup,
                 Objective::kMacs, Objective::kMacsMarginOnly, Objective::kMacsConsistencyOnly}) {
    if (objective_name(o) == name) return o;
  }
  throw ConfigError("unknown objective '" + std::string(name) + "'");
}

bool is_macs(Objective o) {
  return o == Objective::kMacs || o == Objective::kMacsMarginOnly ||
         o == Objective::kMacsConsistencyOnly;
}

std::string_view perturb_space_name(PerturbSpace s) {
  return s == PerturbSpace::kRaw ? "raw" : "normalized";
}

PerturbSpace parse_perturb_space(std::string_view name) {
  if (name == "raw") return PerturbSpace::kRaw;
  if (name == "normalized") return PerturbSpace::kNormalized;
  throw ConfigError("unknown perturb.space '" + std::string(name) + "' (raw | normalized)");
}

MacsConfig ExperimentConfig::effective_macs() const {
  MacsConfig m = macs;
  if (objective == Objective::kMacsMarginOnly) m.lambda_c = 0.0;
  if (objective == Objective::kMacsConsistencyOnly) m.lambda_m = 0.0;
  return m;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds must be nonempty");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(data_fraction > 0.0 && data_fraction <= 1.0)) throw ConfigError("data_fraction must be in (0, 1]");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup_fraction must be in [0, 1)");
  }
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("baseline.smoothing must be in [0, 1)");
  if (focal_gamma < 0.0) throw ConfigError("baseline.focal_gamma must be >= 0");
  if (!(mixup_alpha > 0.0)) throw ConfigError("baseline.mixup_alpha must be > 0");
  if (model != "linear" && model != "mlp" && model != "tinycnn") {
    throw ConfigError("unknown model preset '" + model + "'");
  }
  static const std::vector<std::string> kinds = {"blobs", "two_moons", "idx", "cifar10", "cifar100"};
  if (std::find(kinds.begin(), kinds.end(), data.kind) == kinds.end()) {
    throw ConfigError("unknown data.kind '" + data.kind + "'");
  }
  if (data.kind == "idx" && (data.images.empty() || data.labels.empty())) {
    throw ConfigError("data.kind = idx needs data.images and data.labels");
  }
  if ((data.kind == "cifar10" || data.kind == "cifar100") && data.files.empty()) {
    throw ConfigError("cifar data needs data.files");
  }
  for (int s : eval.severities) {
    if (s < 1 || s > 5) throw ConfigError("eval.severities must lie in 1..5");
  }
  if (eval.sensitivity_n < 1 || !(eval.sensitivity_sigma > 0.0)) {
    throw ConfigError("eval.sensitivity_n >= 1 and eval.sensitivity_sigma > 0 required");
  }
  if (!(eval.margin_gamma >= 0.0)) throw ConfigError("eval.margin_gamma must be >= 0");
  if (eval.overhead_steps < 1) throw ConfigError("eval.overhead_steps must be >= 1");
  macs.validate();
  perturb.validate();
}

ExperimentConfig resolve_config(const ConfigMap& map) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : map.values()) {
    const auto it = std::find_if(bindings().begin(), bindings().end(),
                                 [&](const Binding& b) { return b.key == key; });
    if (it == bindings().end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

std::map<std::string, std::string> config_entries(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& b : bindings()) out[b.key] = b.get(cfg);
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& b : bindings()) keys.push_back(b.key);
  return keys;
}

}  // namespace macs

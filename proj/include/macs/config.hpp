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

#ifndef MACS_CONFIG_HPP
#define MACS_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "macs/data.hpp"
#include "macs/objectives.hpp"
#include "macs/optimizer.hpp"
#include "macs/perturbations.hpp"

namespace macs {

/// Flat `key = value` settings. `#` starts a comment; blank lines are
/// ignored; later assignments win.
class ConfigMap {
 public:
  static ConfigMap parse(std::string_view text, const std::string& source = "<string>");
  static ConfigMap load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

enum class Objective {
  kCe,
  kLabelSmoothing,
  kFocal,
  kMixup,
  kMacs,
  kMacsMarginOnly,
  kMacsConsistencyOnly,
};

std::string_view objective_name(Objective o);
Objective parse_objective(std::string_view name);
bool is_macs(Objective o);

/// Where training views T(x) are drawn: on raw inputs (pixels in [0, 1] for
/// images) then renormalized, or directly on the normalized tensor.
enum class PerturbSpace { kRaw, kNormalized };

std::string_view perturb_space_name(PerturbSpace s);
PerturbSpace parse_perturb_space(std::string_view name);

struct DatasetConfig {
  std::string kind = "blobs";  // blobs | two_moons | idx | cifar10 | cifar100
  std::size_t n = 2000;
  std::size_t classes = 10;
  std::size_t size = 10;
  double noise = 0.1;  // two_moons jitter
  BlobOptions blob;
  std::string images, labels;            // idx train files
  std::string test_images, test_labels;  // idx official test files (optional)
  std::vector<std::string> files;        // cifar train batches
  std::vector<std::string> test_files;   // cifar test batches (optional)
  SplitFractions fractions;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  bool corruptions = true;
  std::vector<CorruptionFamily> families{kAllCorruptions.begin(), kAllCorruptions.end()};
  std::vector<int> severities{1, 2, 3, 4, 5};
  bool temperature = true;
  bool analysis = true;
  std::size_t analysis_samples = 0;  // 0: the whole test split
  std::size_t sensitivity_n = 10;
  double sensitivity_sigma = 0.1;
  double margin_gamma = 1.0;
  std::size_t overhead_steps = 200;
  std::size_t overhead_warmup = 20;
};

struct ExperimentConfig {
  std::string name = "run";
  DatasetConfig data;
  std::string model = "mlp";
  Objective objective = Objective::kMacs;
  MacsConfig macs;
  PerturbConfig perturb;
  PerturbSpace perturb_space = PerturbSpace::kRaw;
  OptimConfig optim;
  double warmup_fraction = 0.05;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  double data_fraction = 1.0;
  double smoothing = 0.1;
  double focal_gamma = 2.0;
  double mixup_alpha = 0.2;
  bool pinsker_audit = false;  // audit every MaCS training step
  EvalConfig eval;
  std::string out_dir = "runs";

  /// MaCS weights after the ablation objectives zero their term.
  MacsConfig effective_macs() const;
  void validate() const;
};

/// Applies every key of `map` over the defaults. Unknown keys and malformed
/// values raise ConfigError.
ExperimentConfig resolve_config(const ConfigMap& map);

/// Every key with its resolved value, in key order. `resolve_config` of the
/// result reproduces `cfg`.
std::map<std::string, std::string> config_entries(const ExperimentConfig& cfg);

/// Names of every accepted key.
std::vector<std::string> config_keys();

}  // namespace macs

#endif  // MACS_CONFIG_HPP

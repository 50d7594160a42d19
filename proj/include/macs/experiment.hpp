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

#ifndef MACS_EXPERIMENT_HPP
#define MACS_EXPERIMENT_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "macs/analysis.hpp"
#include "macs/config.hpp"
#include "macs/data.hpp"
#include "macs/metrics.hpp"
#include "macs/model.hpp"

namespace macs {

/// Raw splits keep [0, 1] pixels for corruption; the others are
/// standardized with train statistics.
struct PreparedData {
  DatasetSplit train_raw, val_raw, test_raw;
  DatasetSplit train, val, test;
  Normalization stats;
  bool images = false;
};

/// Loads or generates the dataset, splits it (data.seed), subsets the train
/// split by data_fraction and normalizes.
PreparedData prepare_data(const ExperimentConfig& cfg);

ModelSpec model_spec_for(const ExperimentConfig& cfg, const PreparedData& data);

/// Batches per epoch; a trailing batch of one sample is dropped.
std::size_t steps_per_epoch(std::size_t n, std::size_t batch);

/// Optimizer settings with total and warmup steps filled in.
OptimConfig schedule_for(const ExperimentConfig& cfg, std::size_t n_train);

/// Named rng streams of one training run.
struct TrainStreams {
  Rng batches;
  Rng perturb;
  Rng mixup;
  explicit TrainStreams(std::uint64_t seed);
};

/// The configured objective on one batch. Loss terms other than the
/// objective's own are left at 0. `norm` is the record `x` was normalized
/// with; raw-space perturbations need it.
LossBreakdown objective_loss(const ExperimentConfig& cfg, const Model& model, const Tensor& x,
                             std::span<const int> labels, TrainStreams& streams,
                             const Normalization* norm = nullptr);

struct EpochLog {
  std::size_t epoch = 0;
  double ce = 0.0;
  double margin = 0.0;
  double consistency = 0.0;
  double total = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> epochs;
  std::size_t steps = 0;
  std::uint64_t forward_passes = 0;
  double seconds = 0.0;
  std::optional<PinskerReport> pinsker;
};

using StepHook = std::function<void(std::size_t step, const LossBreakdown& loss)>;

/// One seed of training. Deterministic given (cfg, seed).
TrainResult train_model(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed,
                        const StepHook& hook = {});

struct CorruptionResult {
  CorruptionFamily family;
  int severity;
  double accuracy;
};

struct AnalysisResult {
  MarginStats margins;
  SensitivityStats sensitivity;
  RatioReport ratio;
  SpectralReport spectral;
  MarginFractionReport margin_fraction;
  double mean_empirical_radius = 0.0;
};

struct TrainSummary {
  std::vector<EpochLog> epochs;
  std::size_t steps = 0;
  std::uint64_t forward_passes = 0;
  std::optional<PinskerReport> pinsker;
  double forward_passes_per_step() const;
};

struct SeedReport {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double ece = 0.0;
  double nll = 0.0;
  std::vector<ReliabilityBin> reliability;
  std::vector<CorruptionResult> corruptions;
  std::optional<double> corruption_mean;
  std::optional<TemperatureFit> temperature;
  std::optional<AnalysisResult> analysis;
  std::optional<TrainSummary> training;
};

PredictionSet predict(const Model& model, const DatasetSplit& ds, std::size_t batch = 512);

/// Accuracy on corrupt(raw test) normalized with train statistics, for every
/// configured family and severity (rng stream per family and severity).
std::vector<CorruptionResult> corruption_sweep(const ExperimentConfig& cfg,
                                               const PreparedData& data, const Model& model,
                                               std::uint64_t seed);
double corruption_mean(std::span<const CorruptionResult> results);

AnalysisResult analyze_model(const ExperimentConfig& cfg, const PreparedData& data,
                             const Model& model, std::uint64_t seed);

/// Clean metrics plus whatever the eval options enable.
SeedReport evaluate_model(const ExperimentConfig& cfg, const PreparedData& data,
                          const Model& model, std::uint64_t seed);

/// Named scalar metrics of one report (the aggregation inputs).
std::map<std::string, double> scalar_metrics(const SeedReport& report);

/// Population mean and standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

struct OverheadReport {
  Objective objective = Objective::kMacs;
  std::size_t steps = 0;
  double seconds_per_step = 0.0;
  double ce_seconds_per_step = 0.0;
  double ratio = 0.0;
  double forwards_per_step = 0.0;
  double ce_forwards_per_step = 0.0;
};

/// Times `eval.overhead_steps` optimizer steps after `eval.overhead_warmup`
/// untimed ones, for the configured objective and for CE.
OverheadReport overhead_probe(const ExperimentConfig& cfg, const PreparedData& data,
                              std::uint64_t seed);

/// Forward passes per step of `objective`, counted over `steps` steps.
double measure_forwards_per_step(const ExperimentConfig& cfg, const PreparedData& data,
                                 std::uint64_t seed, std::size_t steps);

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Invariant checks that need no data files.
std::vector<SelfTestResult> run_selftest();

}  // namespace macs

#endif  // MACS_EXPERIMENT_HPP

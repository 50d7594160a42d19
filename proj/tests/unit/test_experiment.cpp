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

#include <gtest/gtest.h>

#include <cmath>

#include "macs/config.hpp"
#include "macs/error.hpp"
#include "macs/experiment.hpp"
#include "macs/report.hpp"
#include "test_util.hpp"

using namespace macs;
using test::to_vec;

namespace {

ExperimentConfig moons(Objective objective, std::size_t epochs = 3) {
  ExperimentConfig c;
  c.name = "t";
  c.data.kind = "two_moons";
  c.data.n = 400;
  c.data.noise = 0.1;
  c.objective = objective;
  c.perturb.mode = PerturbMode::kNoise;
  c.epochs = epochs;
  c.batch_size = 32;
  c.seeds = {0};
  c.eval.families = {CorruptionFamily::kGaussianNoise};
  return c;
}

ExperimentConfig blobs(Objective objective, std::size_t epochs = 2) {
  ExperimentConfig c;
  c.name = "b";
  c.data.n = 300;
  c.data.classes = 3;
  c.data.size = 6;
  c.objective = objective;
  c.epochs = epochs;
  c.batch_size = 32;
  c.seeds = {0};
  c.eval.analysis_samples = 20;
  return c;
}

bool same_params(const Model& a, const Model& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i)
    if (to_vec(a.params()[i].value) != to_vec(b.params()[i].value)) return false;
  return true;
}

}  // namespace

TEST(Schedule, StepsPerEpoch) {
  EXPECT_EQ(steps_per_epoch(100, 32), 4u);
  EXPECT_EQ(steps_per_epoch(97, 32), 3u);  // trailing batch of 1 dropped
  EXPECT_EQ(steps_per_epoch(98, 32), 4u);
  EXPECT_EQ(steps_per_epoch(96, 32), 3u);
  ExperimentConfig c;
  c.epochs = 10;
  c.batch_size = 10;
  const OptimConfig o = schedule_for(c, 100);
  EXPECT_EQ(o.total_steps, 100u);
  EXPECT_EQ(o.warmup_steps, 5u);
}

TEST(PrepareData, SplitsAndRawCopies) {
  const ExperimentConfig c = blobs(Objective::kCe);
  const PreparedData d = prepare_data(c);
  EXPECT_TRUE(d.images);
  EXPECT_EQ(d.train.size() + d.val.size() + d.test.size(), 300u);
  EXPECT_TRUE(d.train.norm.applied);
  EXPECT_FALSE(d.test_raw.norm.applied);
  EXPECT_EQ(d.test.norm.mean, d.train.norm.mean);
  EXPECT_EQ(d.test_raw.source_index, d.test.source_index);
}

TEST(PrepareData, DataFractionSubsetsTrainOnly) {
  ExperimentConfig c = blobs(Objective::kCe);
  const PreparedData full = prepare_data(c);
  c.data_fraction = 0.5;
  const PreparedData half = prepare_data(c);
  EXPECT_LT(half.train.size(), full.train.size());
  EXPECT_EQ(half.test.source_index, full.test.source_index);
}

TEST(Train, ReductionToCeIsBitwise) {
  const ExperimentConfig ce = moons(Objective::kCe);
  ExperimentConfig mc = moons(Objective::kMacs);
  mc.macs.lambda_m = 0.0;
  mc.macs.lambda_c = 0.0;
  const PreparedData d = prepare_data(ce);
  EXPECT_TRUE(same_params(train_model(ce, d, 0).model, train_model(mc, d, 0).model));
}

TEST(Train, SameSeedSameModel) {
  const ExperimentConfig c = blobs(Objective::kMacs);
  const PreparedData d = prepare_data(c);
  EXPECT_TRUE(same_params(train_model(c, d, 1).model, train_model(c, d, 1).model));
  EXPECT_FALSE(same_params(train_model(c, d, 1).model, train_model(c, d, 2).model));
}

TEST(Train, PerturbSpaceChangesOnlyPerturbedView) {
  ExperimentConfig raw = blobs(Objective::kMacs);
  raw.perturb.mode = PerturbMode::kNoise;
  ExperimentConfig nrm = raw;
  nrm.perturb_space = PerturbSpace::kNormalized;
  const PreparedData d = prepare_data(raw);
  EXPECT_FALSE(same_params(train_model(raw, d, 0).model, train_model(nrm, d, 0).model));
  // Pure blur commutes with per-channel standardization, so both spaces agree
  // up to rounding.
  raw.perturb.mode = nrm.perturb.mode = PerturbMode::kBlur;
  const Model a = train_model(raw, d, 0).model, b = train_model(nrm, d, 0).model;
  for (std::size_t i = 0; i < a.params().size(); ++i)
    for (std::size_t j = 0; j < a.params()[i].value.numel(); ++j)
      EXPECT_NEAR(a.params()[i].value[j], b.params()[i].value[j], 1e-8);
}

TEST(Train, BlurNeedsImages) {
  ExperimentConfig c = moons(Objective::kMacs);
  c.perturb.mode = PerturbMode::kBoth;
  EXPECT_THROW(train_model(c, prepare_data(c), 0), ConfigError);
}

TEST(Train, MoonsMacsReachesHighAccuracy) {
  ExperimentConfig c = moons(Objective::kMacs, 50);
  c.data.n = 1000;
  c.eval.corruptions = false;
  c.eval.analysis = false;
  const PreparedData d = prepare_data(c);
  const TrainResult r = train_model(c, d, 0);
  EXPECT_GE(evaluate_model(c, d, r.model, 0).accuracy, 0.95);
  ASSERT_EQ(r.epochs.size(), 50u);
  EXPECT_LT(r.epochs.back().total, r.epochs.front().total);
}

TEST(Train, PinskerAuditEveryStep) {
  ExperimentConfig c = blobs(Objective::kMacs, 1);
  c.pinsker_audit = true;
  const PreparedData d = prepare_data(c);
  const TrainResult r = train_model(c, d, 0);
  ASSERT_TRUE(r.pinsker.has_value());
  EXPECT_EQ(r.pinsker->samples, d.train.size() - d.train.size() % 32 +
                                    (d.train.size() % 32 >= 2 ? d.train.size() % 32 : 0));
  EXPECT_LE(r.pinsker->max_slack, 1e-9);
}

TEST(ForwardPasses, PerObjective) {
  for (auto [o, want] : {std::pair{Objective::kCe, 1.0}, {Objective::kLabelSmoothing, 1.0},
                         {Objective::kFocal, 1.0}, {Objective::kMixup, 1.0},
                         {Objective::kMacs, 2.0}, {Objective::kMacsMarginOnly, 2.0},
                         {Objective::kMacsConsistencyOnly, 2.0}}) {
    const ExperimentConfig c = blobs(o);
    const PreparedData d = prepare_data(c);
    EXPECT_EQ(measure_forwards_per_step(c, d, 0, 5), want) << objective_name(o);
    const TrainResult r = train_model(c, d, 0);
    EXPECT_EQ(static_cast<double>(r.forward_passes) / r.steps, want);
  }
}

TEST(Evaluate, ZeroWeightModel) {
  ExperimentConfig c = blobs(Objective::kCe);
  c.data.classes = 10;
  c.data.n = 500;
  c.eval.corruptions = false;
  c.eval.analysis = false;
  const PreparedData d = prepare_data(c);
  Model m = Model::init(model_spec_for(c, d), 0);
  for (auto& p : m.params())
    for (auto& v : p.value.mutable_data()) v = 0.0;
  const SeedReport r = evaluate_model(c, d, m, 0);
  EXPECT_NEAR(r.nll, std::log(10.0), 1e-12);
  EXPECT_NEAR(r.accuracy, 0.1, 0.08);
  ASSERT_TRUE(r.temperature.has_value());
  EXPECT_TRUE(r.temperature->degenerate);
}

TEST(Evaluate, NoiseSeverityMonotone) {
  ExperimentConfig c = blobs(Objective::kCe, 8);
  c.data.n = 600;
  c.eval.families = {CorruptionFamily::kGaussianNoise};
  c.eval.analysis = false;
  const PreparedData d = prepare_data(c);
  const Model m = train_model(c, d, 0).model;
  const auto res = corruption_sweep(c, d, m, 0);
  ASSERT_EQ(res.size(), 5u);
  for (std::size_t s = 1; s < res.size(); ++s) EXPECT_LE(res[s].accuracy, res[s - 1].accuracy + 1e-12);
  EXPECT_NEAR(corruption_mean(res),
              (res[0].accuracy + res[1].accuracy + res[2].accuracy + res[3].accuracy + res[4].accuracy) / 5,
              1e-15);
}

TEST(Evaluate, ReportFields) {
  const ExperimentConfig c = blobs(Objective::kMacs);
  const PreparedData d = prepare_data(c);
  const Model m = train_model(c, d, 0).model;
  const SeedReport r = evaluate_model(c, d, m, 0);
  const Json j = seed_report_json(c, r);
  EXPECT_EQ(j.at("schema"), kReportSchema);
  EXPECT_EQ(j.at("kind"), "seed_report");
  for (const char* k : {"config", "metrics", "reliability", "corruption", "temperature_scaling", "analysis"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["reliability"].size(), 15u);
  EXPECT_EQ(j["corruption"]["results"].size(), 40u);
  EXPECT_EQ(j["temperature_scaling"]["fit_split"], "val");
  for (const char* k : {"margin", "sensitivity", "ratio", "spectral", "margin_bound_terms", "radius"})
    EXPECT_TRUE(j["analysis"].contains(k)) << k;
  EXPECT_EQ(j["analysis"]["radius"]["certified"], false);
  const auto metrics = scalar_metrics(r);
  for (const char* k : {"accuracy", "ece", "nll", "corruption_mean", "mean_margin", "mean_sensitivity",
                        "margin_sensitivity_ratio", "ts_ece_after", "spectral_complexity"})
    EXPECT_TRUE(metrics.count(k)) << k;
}

TEST(Aggregate, MeanStd) {
  const std::vector<double> v{1, 2, 3};
  const auto [m, s] = mean_std(v);
  EXPECT_DOUBLE_EQ(m, 2.0);
  EXPECT_NEAR(s, std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(s, 0.816, 5e-4);
}

TEST(Aggregate, CompareToSelfHasZeroDeltas) {
  ExperimentConfig c = blobs(Objective::kCe);
  c.eval.corruptions = false;
  c.eval.analysis = false;
  const PreparedData d = prepare_data(c);
  const Model m = train_model(c, d, 0).model;
  const std::vector<SeedReport> reps{evaluate_model(c, d, m, 0)};
  const Json agg = aggregate_json(c, reps);
  const Json cmp = compare_json({agg, agg});
  ASSERT_EQ(cmp["rows"].size(), 2u);
  for (const char* col : {"acc", "ece", "nll", "robust"}) {
    EXPECT_TRUE(cmp["rows"][1].contains(std::string(col) + "_mean")) << col;
    EXPECT_TRUE(cmp["rows"][1].contains(std::string("delta_") + col)) << col;
  }
  EXPECT_EQ(cmp["rows"][1]["delta_acc"], 0.0);
  EXPECT_EQ(cmp["rows"][1]["delta_ece"], 0.0);
  EXPECT_EQ(cmp["rows"][1]["delta_nll"], 0.0);
  ExperimentConfig other = c;
  other.data.size = 8;
  EXPECT_THROW(compare_json({agg, aggregate_json(other, reps)}), UsageError);
}

TEST(Reports, AtomicWriteAndRead) {
  test::TempDir dir("report");
  const auto p = dir / "sub" / "r.json";
  Json j;
  j["a"] = 1;
  write_json_atomic(p, j);
  EXPECT_EQ(read_json(p)["a"], 1);
  EXPECT_FALSE(std::filesystem::exists(p.string() + ".tmp"));
  test::write_bytes(dir / "bad.json", {'{', 'x'});
  EXPECT_THROW(read_json(dir / "bad.json"), FormatError);
}

TEST(SelfTest, AllPass) {
  for (const auto& r : run_selftest()) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

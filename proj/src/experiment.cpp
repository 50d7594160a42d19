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

#include "macs/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "macs/error.hpp"
#include "macs/gradcheck.hpp"
#include "macs/ops.hpp"
#include "macs/optimizer.hpp"
#include "macs/perturbations.hpp"

namespace macs {

namespace {

using Clock = std::chrono::steady_clock;

DatasetSplit load_source(const DatasetConfig& d, bool test_part) {
  if (d.kind == "idx") {
    return test_part ? load_idx(d.test_images, d.test_labels) : load_idx(d.images, d.labels);
  }
  std::vector<std::filesystem::path> paths;
  for (const auto& f : test_part ? d.test_files : d.files) paths.emplace_back(f);
  return load_cifar_bin(paths, d.kind == "cifar100");
}

bool has_official_test(const DatasetConfig& d) {
  if (d.kind == "idx") return !d.test_images.empty() && !d.test_labels.empty();
  if (d.kind == "cifar10" || d.kind == "cifar100") return !d.test_files.empty();
  return false;
}

std::vector<std::size_t> range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> v(hi - lo);
  std::iota(v.begin(), v.end(), lo);
  return v;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  Splits raw;
  if (d.kind == "blobs" || d.kind == "two_moons") {
    DatasetSplit all = d.kind == "blobs" ? synth_blob_images(d.n, d.classes, d.size, d.seed, d.blob)
                                         : synth_two_moons(d.n, d.noise, d.seed);
    raw = split(all, d.fractions, d.seed);
  } else if (has_official_test(d)) {
    // Official test split kept; train is divided into train and val.
    DatasetSplit train_all = load_source(d, false);
    const double tv = d.fractions.train + d.fractions.val;
    if (!(d.fractions.val > 0.0) || !(d.fractions.train > 0.0)) {
      throw ConfigError("data.train_fraction and data.val_fraction must be > 0");
    }
    Rng rng = Rng::stream(d.seed, "data.split");
    const auto perm = rng.permutation(train_all.size());
    const auto n_train = static_cast<std::size_t>(
        std::llround(d.fractions.train / tv * static_cast<double>(perm.size())));
    if (n_train == 0 || n_train >= perm.size()) throw ConfigError("train/val split leaves an empty part");
    raw.train = train_all.select(std::span<const std::size_t>(perm).first(n_train));
    raw.val = train_all.select(std::span<const std::size_t>(perm).subspan(n_train));
    raw.test = load_source(d, true);
  } else {
    raw = split(load_source(d, false), d.fractions, d.seed);
  }

  PreparedData out;
  out.train_raw = subset_fraction(raw.train, cfg.data_fraction, d.seed);
  out.val_raw = std::move(raw.val);
  out.test_raw = std::move(raw.test);
  out.stats = channel_stats(out.train_raw);
  out.train = normalize(out.train_raw, out.stats);
  out.val = normalize(out.val_raw, out.stats);
  out.test = normalize(out.test_raw, out.stats);
  out.images = out.train.inputs.rank() == 4;
  return out;
}

ModelSpec model_spec_for(const ExperimentConfig& cfg, const PreparedData& data) {
  return make_preset(cfg.model, data.train.sample_shape(), data.train.classes);
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) {
  const std::size_t full = n / batch;
  return full + (n % batch >= 2 ? 1 : 0);
}

OptimConfig schedule_for(const ExperimentConfig& cfg, std::size_t n_train) {
  OptimConfig o = cfg.optim;
  o.total_steps = cfg.epochs * steps_per_epoch(n_train, cfg.batch_size);
  if (o.total_steps == 0) throw ConfigError("training split is smaller than two samples");
  o.warmup_steps = static_cast<std::size_t>(
      std::llround(cfg.warmup_fraction * static_cast<double>(o.total_steps)));
  o.warmup_steps = std::min(o.warmup_steps, o.total_steps - 1);
  o.validate();
  return o;
}

TrainStreams::TrainStreams(std::uint64_t seed)
    : batches(Rng::stream(seed, "train.batches")),
      perturb(Rng::stream(seed, "train.perturb")),
      mixup(Rng::stream(seed, "train.mixup")) {}

LossBreakdown objective_loss(const ExperimentConfig& cfg, const Model& model, const Tensor& x,
                             std::span<const int> labels, TrainStreams& streams,
                             const Normalization* norm) {
  LossBreakdown out;
  switch (cfg.objective) {
    case Objective::kCe:
      out.clean_logits = model.forward(x);
      out.total = cross_entropy(out.clean_logits, labels);
      break;
    case Objective::kLabelSmoothing:
      out.clean_logits = model.forward(x);
      out.total = label_smoothing_ce(out.clean_logits, labels, cfg.smoothing);
      break;
    case Objective::kFocal:
      out.clean_logits = model.forward(x);
      out.total = focal_loss(out.clean_logits, labels, cfg.focal_gamma);
      break;
    case Objective::kMixup: {
      const MixupBatch mb = mixup_batch(x, labels, cfg.mixup_alpha, streams.mixup);
      out.clean_logits = model.forward(mb.x);
      out.total = mixup_loss(out.clean_logits, mb);
      break;
    }
    case Objective::kMacs:
    case Objective::kMacsMarginOnly:
    case Objective::kMacsConsistencyOnly: {
      const PerturbConfig& pc = cfg.perturb;
      Rng& rng = streams.perturb;
      const bool raw = cfg.perturb_space == PerturbSpace::kRaw && norm && norm->applied;
      return macs_loss(model, x, labels,
                       [&](const Tensor& clean) {
                         if (!raw) return sample_perturbation(clean, pc, rng);
                         return normalize_inputs(
                             sample_perturbation(denormalize_inputs(clean, *norm), pc, rng), *norm);
                       },
                       cfg.effective_macs());
    }
  }
  out.total_value = out.total.item();
  out.ce = out.total_value;
  return out;
}

TrainResult train_model(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed,
                        const StepHook& hook) {
  cfg.validate();
  if (is_macs(cfg.objective) && !data.images && cfg.perturb.mode != PerturbMode::kNoise) {
    throw ConfigError("blur perturbations need image data; set perturb.mode = noise");
  }
  const DatasetSplit& train = data.train;
  const OptimConfig ocfg = schedule_for(cfg, train.size());

  TrainResult result;
  result.model = Model::init(model_spec_for(cfg, data), seed);
  Model& model = result.model;
  Optimizer opt(ocfg);
  TrainStreams streams(seed);
  const bool audit = cfg.pinsker_audit && is_macs(cfg.objective);
  if (audit) result.pinsker = PinskerReport{};

  const auto start = Clock::now();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = streams.batches.permutation(train.size());
    EpochLog log;
    log.epoch = epoch + 1;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      if (hi - lo < 2) break;
      const auto idx = std::span<const std::size_t>(order).subspan(lo, hi - lo);
      const Tensor x = train.batch_inputs(idx);
      const std::vector<int> y = train.batch_labels(idx);

      model.zero_grad();
      const LossBreakdown loss = objective_loss(cfg, model, x, y, streams, &train.norm);
      if (!std::isfinite(loss.total_value)) {
        throw Error("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                    std::to_string(step) + " (objective " +
                    std::string(objective_name(cfg.objective)) + ")");
      }
      loss.total.backward();
      opt.step(model, lr_at(step, ocfg));
      if (audit) {
        merge_into(*result.pinsker,
                   pinsker_audit_logits(loss.clean_logits, loss.perturbed_logits, lo));
      }
      if (hook) hook(step, loss);

      log.ce += loss.ce;
      log.margin += loss.margin;
      log.consistency += loss.consistency;
      log.total += loss.total_value;
      ++batches;
      ++step;
    }
    const double nb = static_cast<double>(std::max<std::size_t>(batches, 1));
    log.ce /= nb;
    log.margin /= nb;
    log.consistency /= nb;
    log.total /= nb;
    result.epochs.push_back(log);
  }
  result.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  result.steps = step;
  result.forward_passes = model.forward_count();
  return result;
}

double TrainSummary::forward_passes_per_step() const {
  return steps ? static_cast<double>(forward_passes) / static_cast<double>(steps) : 0.0;
}

PredictionSet predict(const Model& model, const DatasetSplit& ds, std::size_t batch) {
  ds.validate();
  std::vector<double> logits;
  logits.reserve(ds.size() * model.num_classes());
  for (std::size_t lo = 0; lo < ds.size(); lo += batch) {
    const auto idx = range(lo, std::min(ds.size(), lo + batch));
    const Tensor out = model.forward(ds.batch_inputs(idx), false);
    logits.insert(logits.end(), out.data().begin(), out.data().end());
  }
  return {Tensor::from({ds.size(), model.num_classes()}, std::move(logits)), ds.labels};
}

std::vector<CorruptionResult> corruption_sweep(const ExperimentConfig& cfg,
                                               const PreparedData& data, const Model& model,
                                               std::uint64_t seed) {
  if (!data.images) throw ConfigError("corruption sweep needs image data");
  std::vector<CorruptionResult> out;
  for (auto family : cfg.eval.families) {
    for (int severity : cfg.eval.severities) {
      Rng rng = Rng::stream(seed, "eval.corrupt." + std::string(corruption_name(family)) + "." +
                                      std::to_string(severity));
      DatasetSplit corrupted = data.test_raw;
      corrupted.inputs = normalize_inputs(corrupt(data.test_raw.inputs, {family, severity}, rng),
                                          data.stats);
      corrupted.norm = data.stats;
      out.push_back({family, severity, top1_accuracy(predict(model, corrupted))});
    }
  }
  return out;
}

double corruption_mean(std::span<const CorruptionResult> results) {
  if (results.empty()) throw InputError("no corruption results");
  double s = 0.0;
  for (const auto& r : results) s += r.accuracy;
  return s / static_cast<double>(results.size());
}

AnalysisResult analyze_model(const ExperimentConfig& cfg, const PreparedData& data,
                             const Model& model, std::uint64_t seed) {
  AnalysisResult a;
  const std::size_t limit = cfg.eval.analysis_samples;
  const DatasetSplit subset = (limit == 0 || limit >= data.test.size())
                                  ? data.test
                                  : data.test.select(range(0, limit));
  a.margins = margin_stats(model, subset);
  a.sensitivity = sensitivity_stats(model, subset, seed, cfg.eval.sensitivity_n,
                                    cfg.eval.sensitivity_sigma);
  a.ratio = margin_sensitivity_ratio(a.margins, a.sensitivity);
  a.spectral = spectral_complexity(model);
  a.margin_fraction.gamma = cfg.eval.margin_gamma;
  a.margin_fraction.fraction = margin_fraction(margin_stats(model, data.train).margins,
                                               cfg.eval.margin_gamma);
  a.margin_fraction.spectral_complexity = a.spectral.complexity;
  a.margin_fraction.input_bound = data.train.max_input_norm();
  a.margin_fraction.n = data.train.size();
  double radius = 0.0;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const double m = a.margins.margins[i];
    const double s = a.sensitivity.per_sample[i];
    if (m > 0.0 && s > 0.0) radius += empirical_radius(m, s).radius;
  }
  a.mean_empirical_radius = radius / static_cast<double>(subset.size());
  return a;
}

SeedReport evaluate_model(const ExperimentConfig& cfg, const PreparedData& data,
                          const Model& model, std::uint64_t seed) {
  SeedReport r;
  r.seed = seed;
  const PredictionSet test = predict(model, data.test);
  r.accuracy = top1_accuracy(test);
  r.ece = ece(test);
  r.nll = nll(test);
  r.reliability = reliability_bins(test);
  if (cfg.eval.corruptions && data.images && !cfg.eval.families.empty() &&
      !cfg.eval.severities.empty()) {
    r.corruptions = corruption_sweep(cfg, data, model, seed);
    r.corruption_mean = corruption_mean(r.corruptions);
  }
  if (cfg.eval.temperature) {
    if (data.val.size() == 0) throw ConfigError("temperature scaling needs a validation split");
    TemperatureFit fit = fit_temperature(predict(model, data.val));
    // Report test metrics at the validation-fitted temperature.
    const PredictionSet scaled = scale_logits(test, fit.temperature);
    fit.nll_before = r.nll;
    fit.ece_before = r.ece;
    fit.nll_after = nll(scaled);
    fit.ece_after = ece(scaled);
    r.temperature = fit;
  }
  if (cfg.eval.analysis) r.analysis = analyze_model(cfg, data, model, seed);
  return r;
}

std::map<std::string, double> scalar_metrics(const SeedReport& r) {
  std::map<std::string, double> m;
  m["accuracy"] = r.accuracy;
  m["ece"] = r.ece;
  m["nll"] = r.nll;
  if (r.corruption_mean) {
    m["corruption_mean"] = *r.corruption_mean;
    std::map<int, std::pair<double, int>> by_sev;
    std::map<std::string, std::pair<double, int>> by_family;
    for (const auto& c : r.corruptions) {
      by_sev[c.severity].first += c.accuracy;
      by_sev[c.severity].second += 1;
      auto& f = by_family[std::string(corruption_name(c.family))];
      f.first += c.accuracy;
      f.second += 1;
    }
    for (const auto& [s, v] : by_sev) m["corruption_severity_" + std::to_string(s)] = v.first / v.second;
    for (const auto& [f, v] : by_family) m["corruption_" + f] = v.first / v.second;
  }
  if (r.temperature) {
    m["ts_temperature"] = r.temperature->temperature;
    m["ts_nll_before"] = r.temperature->nll_before;
    m["ts_nll_after"] = r.temperature->nll_after;
    m["ts_ece_before"] = r.temperature->ece_before;
    m["ts_ece_after"] = r.temperature->ece_after;
  }
  if (r.analysis) {
    const auto& a = *r.analysis;
    m["mean_margin"] = a.margins.mean_margin;
    m["mean_logit_l2"] = a.margins.mean_logit_l2;
    m["mean_max_logit"] = a.margins.mean_max_logit;
    m["mean_sensitivity"] = a.sensitivity.mean_sensitivity;
    if (!a.ratio.infinite) m["margin_sensitivity_ratio"] = a.ratio.ratio;
    m["mean_of_ratios"] = a.ratio.mean_of_ratios;
    m["spectral_complexity"] = a.spectral.complexity;
    m["margin_fraction"] = a.margin_fraction.fraction;
    m["mean_empirical_radius"] = a.mean_empirical_radius;
  }
  if (r.training) m["forward_passes_per_step"] = r.training->forward_passes_per_step();
  return m;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) throw InputError("mean_std of no values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / n)};
}

double measure_forwards_per_step(const ExperimentConfig& cfg, const PreparedData& data,
                                 std::uint64_t seed, std::size_t steps) {
  if (steps == 0) throw InputError("need at least one step");
  Model model = Model::init(model_spec_for(cfg, data), seed);
  OptimConfig ocfg = cfg.optim;
  ocfg.total_steps = steps;
  ocfg.warmup_steps = 0;
  Optimizer opt(ocfg);
  TrainStreams streams(seed);
  const std::size_t n = data.train.size();
  const std::size_t b = std::min(cfg.batch_size, n);
  for (std::size_t s = 0; s < steps; ++s) {
    const auto idx = range(0, b);
    model.zero_grad();
    const LossBreakdown loss =
        objective_loss(cfg, model, data.train.batch_inputs(idx), data.train.batch_labels(idx), streams,
                       &data.train.norm);
    loss.total.backward();
    opt.step(model, cfg.optim.lr_max);
  }
  return static_cast<double>(model.forward_count()) / static_cast<double>(steps);
}

OverheadReport overhead_probe(const ExperimentConfig& cfg, const PreparedData& data,
                              std::uint64_t seed) {
  auto time_objective = [&](const ExperimentConfig& c, double& forwards) {
    Model model = Model::init(model_spec_for(c, data), seed);
    OptimConfig ocfg = c.optim;
    ocfg.total_steps = c.eval.overhead_steps + c.eval.overhead_warmup;
    ocfg.warmup_steps = 0;
    Optimizer opt(ocfg);
    TrainStreams streams(seed);
    const std::size_t n = data.train.size();
    const std::size_t b = std::min(c.batch_size, n);
    std::size_t cursor = 0;
    auto one_step = [&] {
      if (cursor + b > n) cursor = 0;
      const auto idx = range(cursor, cursor + b);
      cursor += b;
      model.zero_grad();
      const LossBreakdown loss = objective_loss(c, model, data.train.batch_inputs(idx),
                                                data.train.batch_labels(idx), streams, &data.train.norm);
      loss.total.backward();
      opt.step(model, c.optim.lr_max);
    };
    for (std::size_t s = 0; s < c.eval.overhead_warmup; ++s) one_step();
    model.reset_forward_count();
    const auto start = Clock::now();
    for (std::size_t s = 0; s < c.eval.overhead_steps; ++s) one_step();
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    forwards = static_cast<double>(model.forward_count()) / static_cast<double>(c.eval.overhead_steps);
    return secs / static_cast<double>(c.eval.overhead_steps);
  };
  OverheadReport r;
  r.objective = cfg.objective;
  r.steps = cfg.eval.overhead_steps;
  r.seconds_per_step = time_objective(cfg, r.forwards_per_step);
  ExperimentConfig ce = cfg;
  ce.objective = Objective::kCe;
  r.ce_seconds_per_step = time_objective(ce, r.ce_forwards_per_step);
  r.ratio = r.ce_seconds_per_step > 0.0 ? r.seconds_per_step / r.ce_seconds_per_step : 0.0;
  return r;
}

std::vector<SelfTestResult> run_selftest() {
  std::vector<SelfTestResult> out;
  auto record = [&](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };
  auto fmt = [](double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
  };

  // Composite loss gradient.
  {
    Rng rng(11);
    const std::vector<int> labels{0, 2, 1};
    std::vector<double> a(12), b(12);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    auto fn = [&](const std::vector<Tensor>& in) {
      Tensor ce = cross_entropy(in[0], labels);
      Tensor m = margin_loss(in[0], labels, 1.0);
      Tensor c = kl_consistency(in[0], in[1]);
      return add(add(ce, scalar_mul(m, 0.1)), scalar_mul(c, 0.5));
    };
    const auto g = gradcheck(fn, {Tensor::from({3, 4}, a, true), Tensor::from({3, 4}, b, true)});
    record("macs_loss_gradient", g.max_rel_error < 1e-4, "max rel error " + fmt(g.max_rel_error));
  }
  // Pinsker on random pairs.
  {
    Rng rng(12);
    std::size_t rows = 10000, k = 5;
    std::vector<double> p(rows * k), q(rows * k);
    for (auto& v : p) v = rng.normal(0.0, 2.0);
    for (auto& v : q) v = rng.normal(0.0, 2.0);
    try {
      const auto r = pinsker_audit_logits(Tensor::from({rows, k}, p), Tensor::from({rows, k}, q));
      record("pinsker_random_pairs", true, "max slack " + fmt(r.max_slack));
    } catch (const PropertyError& e) {
      record("pinsker_random_pairs", false, e.what());
    }
  }
  // Linear certificate.
  {
    Rng rng(13);
    const std::size_t k = 3, d = 4;
    std::vector<double> w(k * d), b(k);
    for (auto& v : w) v = rng.normal();
    for (auto& v : b) v = rng.normal(0.0, 0.1);
    const Tensor wt = Tensor::from({k, d}, w), bt = Tensor::from({k}, b);
    std::size_t flips = 0, checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> x(d);
      for (auto& v : x) v = rng.normal();
      std::vector<double> f(k);
      for (std::size_t i = 0; i < k; ++i) {
        f[i] = b[i];
        for (std::size_t j = 0; j < d; ++j) f[i] += w[i * d + j] * x[j];
      }
      const int y = static_cast<int>(std::max_element(f.begin(), f.end()) - f.begin());
      const RadiusReport r = certified_radius_linear(wt, bt, x, y);
      if (r.radius <= 0.0) continue;
      ++checked;
      for (int s = 0; s < 200; ++s) {
        std::vector<double> delta(d);
        double norm = 0.0;
        for (auto& v : delta) {
          v = rng.normal();
          norm += v * v;
        }
        norm = std::sqrt(norm);
        std::vector<double> g(k);
        for (std::size_t i = 0; i < k; ++i) {
          g[i] = b[i];
          for (std::size_t j = 0; j < d; ++j) g[i] += w[i * d + j] * (x[j] + 0.99 * r.radius * delta[j] / norm);
        }
        if (std::max_element(g.begin(), g.end()) - g.begin() != y) ++flips;
      }
    }
    record("linear_certificate", flips == 0 && checked > 0,
           std::to_string(flips) + " flips over " + std::to_string(checked) + " points");
  }
  // Temperature scaling keeps argmax.
  {
    Rng rng(14);
    const std::size_t n = 500, k = 4;
    std::vector<double> logits(n * k);
    std::vector<int> labels(n);
    for (auto& v : logits) v = rng.normal(0.0, 3.0);
    for (auto& y : labels) y = static_cast<int>(rng.index(k));
    const PredictionSet preds{Tensor::from({n, k}, logits), labels};
    const TemperatureFit fit = fit_temperature(preds);
    const bool same = top1_accuracy(preds) == top1_accuracy(scale_logits(preds, fit.temperature));
    record("temperature_scaling", same && fit.nll_after <= fit.nll_before,
           "T = " + fmt(fit.temperature));
  }
  // ce equals macs with both weights zero.
  {
    ExperimentConfig cfg;
    cfg.data.kind = "two_moons";
    cfg.data.n = 200;
    cfg.model = "mlp";
    cfg.epochs = 2;
    cfg.batch_size = 32;
    cfg.perturb.mode = PerturbMode::kNoise;
    cfg.eval.corruptions = false;
    const PreparedData data = prepare_data(cfg);
    cfg.objective = Objective::kCe;
    const Model a = train_model(cfg, data, 0).model;
    cfg.objective = Objective::kMacs;
    cfg.macs.lambda_m = 0.0;
    cfg.macs.lambda_c = 0.0;
    const Model b = train_model(cfg, data, 0).model;
    bool same = true;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
      const auto x = a.params()[i].value.data(), y = b.params()[i].value.data();
      same = same && std::equal(x.begin(), x.end(), y.begin());
    }
    record("ce_macs_reduction", same, same ? "bitwise identical" : "parameters differ");
  }
  return out;
}

}  // namespace macs

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

#include "macs/report.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "macs/error.hpp"

namespace macs {

namespace {

// Comparison columns: short name, aggregate metric key.
const std::vector<std::pair<std::string, std::string>>& compare_columns() {
  static const std::vector<std::pair<std::string, std::string>> cols = {
      {"acc", "accuracy"},
      {"ece", "ece"},
      {"nll", "nll"},
      {"robust", "corruption_mean"},
      {"margin", "mean_margin"},
      {"sensitivity", "mean_sensitivity"},
      {"ratio", "margin_sensitivity_ratio"},
      {"ts_ece", "ts_ece_after"},
  };
  return cols;
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string csv_number(const Json& v) {
  if (v.is_null()) return "";
  std::ostringstream ss;
  ss.precision(17);
  ss << v.get<double>();
  return ss.str();
}

}  // namespace

Json config_json(const ExperimentConfig& cfg) {
  Json j = Json::object();
  for (const auto& [k, v] : config_entries(cfg)) j[k] = v;
  return j;
}

Json train_summary_json(const TrainSummary& t) {
  Json j;
  j["steps"] = t.steps;
  j["forward_passes"] = t.forward_passes;
  j["forward_passes_per_step"] = t.forward_passes_per_step();
  Json epochs = Json::array();
  for (const auto& e : t.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"ce", e.ce},
                      {"margin", e.margin},
                      {"consistency", e.consistency},
                      {"total", e.total}});
  }
  j["epochs"] = epochs;
  if (t.pinsker) {
    j["pinsker"] = {{"pairs", t.pinsker->samples},
                    {"violations", 0},
                    {"max_l1", t.pinsker->max_l1},
                    {"max_bound", t.pinsker->max_bound},
                    {"max_slack", t.pinsker->max_slack}};
  }
  return j;
}

TrainSummary train_summary_from_json(const Json& j) {
  TrainSummary t;
  try {
    t.steps = j.at("steps").get<std::size_t>();
    t.forward_passes = j.at("forward_passes").get<std::uint64_t>();
    for (const auto& e : j.at("epochs")) {
      t.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("ce").get<double>(),
                          e.at("margin").get<double>(), e.at("consistency").get<double>(),
                          e.at("total").get<double>()});
    }
    if (j.contains("pinsker")) {
      const auto& p = j["pinsker"];
      t.pinsker = PinskerReport{p.at("pairs").get<std::size_t>(), p.at("max_l1").get<double>(),
                                p.at("max_bound").get<double>(), p.at("max_slack").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed training log: ") + e.what(), 0);
  }
  return t;
}

Json seed_report_json(const ExperimentConfig& cfg, const SeedReport& r) {
  Json j;
  j["schema"] = kReportSchema;
  j["kind"] = "seed_report";
  j[kTimestampKey] = utc_timestamp();
  j["seed"] = r.seed;
  j["config"] = config_json(cfg);
  j["metrics"] = {{"accuracy", r.accuracy}, {"ece", r.ece}, {"nll", r.nll}};

  Json bins = Json::array();
  for (const auto& b : r.reliability) {
    bins.push_back({{"lo", b.lo},
                    {"hi", b.hi},
                    {"count", b.count},
                    {"mean_confidence", b.mean_confidence},
                    {"accuracy", b.accuracy}});
  }
  j["reliability"] = bins;

  if (r.corruption_mean) {
    Json c;
    Json rows = Json::array();
    for (const auto& x : r.corruptions) {
      rows.push_back({{"family", corruption_name(x.family)},
                      {"severity", x.severity},
                      {"accuracy", x.accuracy}});
    }
    c["results"] = rows;
    c["mean"] = *r.corruption_mean;
    j["corruption"] = c;
  }
  if (r.temperature) {
    const auto& t = *r.temperature;
    j["temperature_scaling"] = {{"temperature", t.temperature},
                                {"fit_split", "val"},
                                {"nll_before", t.nll_before},
                                {"nll_after", t.nll_after},
                                {"ece_before", t.ece_before},
                                {"ece_after", t.ece_after},
                                {"degenerate", t.degenerate}};
  }
  if (r.analysis) {
    const auto& a = *r.analysis;
    Json an;
    an["margin"] = {{"count", a.margins.count},
                    {"mean_margin", a.margins.mean_margin},
                    {"mean_logit_l2", a.margins.mean_logit_l2},
                    {"mean_max_logit", a.margins.mean_max_logit},
                    {"histogram",
                     {{"lo", a.margins.histogram.lo},
                      {"hi", a.margins.histogram.hi},
                      {"counts", a.margins.histogram.counts}}}};
    an["sensitivity"] = {{"mean_sensitivity", a.sensitivity.mean_sensitivity},
                         {"n_samples", a.sensitivity.n_samples},
                         {"sigma", a.sensitivity.sigma},
                         {"norm", "l2"}};
    an["ratio"] = {{"ratio_of_means", number_or_null(a.ratio.ratio)},
                   {"mean_of_ratios", number_or_null(a.ratio.mean_of_ratios)},
                   {"infinite", a.ratio.infinite}};
    Json layers = Json::array();
    for (const auto& l : a.spectral.layers) {
      layers.push_back({{"name", l.name}, {"spectral", l.spectral}, {"frobenius", l.frobenius}});
    }
    an["spectral"] = {{"complexity", a.spectral.complexity},
                      {"product", a.spectral.product},
                      {"ratio_term", a.spectral.ratio_term},
                      {"layers", layers},
                      {"warnings", a.spectral.warnings}};
    an["margin_bound_terms"] = {{"gamma", a.margin_fraction.gamma},
                                {"margin_fraction", a.margin_fraction.fraction},
                                {"spectral_complexity", a.margin_fraction.spectral_complexity},
                                {"input_bound", a.margin_fraction.input_bound},
                                {"n", a.margin_fraction.n}};
    an["radius"] = {{"mean_empirical_radius", a.mean_empirical_radius},
                    {"certified", false},
                    {"note", "gamma / (2 * sampled sensitivity); empirical, not a certificate"}};
    j["analysis"] = an;
  }
  if (r.training) j["training"] = train_summary_json(*r.training);
  return j;
}

Json aggregate_json(const ExperimentConfig& cfg, const std::vector<SeedReport>& reports) {
  if (reports.empty()) throw InputError("aggregate of no reports");
  std::map<std::string, std::vector<double>> values;
  std::vector<std::map<std::string, double>> per_seed;
  for (const auto& r : reports) per_seed.push_back(scalar_metrics(r));
  // Only metrics present for every seed are aggregated.
  for (const auto& [k, v] : per_seed.front()) {
    bool everywhere = true;
    for (const auto& m : per_seed) everywhere = everywhere && m.count(k);
    if (!everywhere) continue;
    for (const auto& m : per_seed) values[k].push_back(m.at(k));
  }
  Json j;
  j["schema"] = kReportSchema;
  j["kind"] = "aggregate";
  j[kTimestampKey] = utc_timestamp();
  j["config"] = config_json(cfg);
  Json seeds = Json::array();
  for (const auto& r : reports) seeds.push_back(r.seed);
  j["seeds"] = seeds;
  Json metrics = Json::object();
  for (const auto& [k, v] : values) {
    const auto [mean, sd] = mean_std(v);
    metrics[k] = {{"mean", mean}, {"std", sd}, {"values", v}};
  }
  j["metrics"] = metrics;
  return j;
}

std::string aggregate_csv(const Json& aggregate) {
  std::ostringstream out;
  out << "metric,mean,std";
  for (const auto& s : aggregate.at("seeds")) out << ",seed_" << s.get<std::uint64_t>();
  out << "\n";
  for (const auto& [k, v] : aggregate.at("metrics").items()) {
    out << k << "," << csv_number(v.at("mean")) << "," << csv_number(v.at("std"));
    for (const auto& x : v.at("values")) out << "," << csv_number(x);
    out << "\n";
  }
  return out.str();
}

Json overhead_json(const ExperimentConfig& cfg, const OverheadReport& r) {
  Json j;
  j["schema"] = kReportSchema;
  j["kind"] = "overhead";
  j[kTimestampKey] = utc_timestamp();
  j["config"] = config_json(cfg);
  j["objective"] = objective_name(r.objective);
  j["timed_steps"] = r.steps;
  j["warmup_steps"] = cfg.eval.overhead_warmup;
  j["seconds_per_step"] = r.seconds_per_step;
  j["ce_seconds_per_step"] = r.ce_seconds_per_step;
  j["relative_overhead"] = r.ratio;
  j["forward_passes_per_step"] = r.forwards_per_step;
  j["ce_forward_passes_per_step"] = r.ce_forwards_per_step;
  return j;
}

Json compare_json(const std::vector<Json>& aggregates) {
  if (aggregates.size() < 2) throw UsageError("compare needs at least two runs");
  auto setting_keys = [](const Json& agg) {
    Json keys = Json::object();
    for (const auto& [k, v] : agg.at("config").items()) {
      if (k.rfind("data.", 0) == 0 || k == "model" || k == "data_fraction") keys[k] = v;
    }
    return keys;
  };
  const Json base_settings = setting_keys(aggregates.front());
  for (std::size_t i = 1; i < aggregates.size(); ++i) {
    if (setting_keys(aggregates[i]) != base_settings) {
      throw UsageError("compare: run " + std::to_string(i) +
                       " uses a different dataset or model than the baseline");
    }
  }
  auto method_name = [](const Json& agg) {
    const auto& c = agg.at("config");
    return c.at("name").get<std::string>() + ":" + c.at("objective").get<std::string>();
  };
  const Json& base = aggregates.front().at("metrics");
  Json rows = Json::array();
  for (const auto& agg : aggregates) {
    Json row;
    row["method"] = method_name(agg);
    const Json& m = agg.at("metrics");
    for (const auto& [col, key] : compare_columns()) {
      if (!m.contains(key)) {
        row[col + "_mean"] = nullptr;
        row[col + "_std"] = nullptr;
        row["delta_" + col] = nullptr;
        continue;
      }
      row[col + "_mean"] = m[key]["mean"];
      row[col + "_std"] = m[key]["std"];
      row["delta_" + col] = base.contains(key)
                                ? Json(m[key]["mean"].get<double>() - base[key]["mean"].get<double>())
                                : Json(nullptr);
    }
    rows.push_back(row);
  }
  Json j;
  j["schema"] = kReportSchema;
  j["kind"] = "comparison";
  j[kTimestampKey] = utc_timestamp();
  j["baseline"] = method_name(aggregates.front());
  j["settings"] = base_settings;
  j["rows"] = rows;
  return j;
}

std::string compare_csv(const Json& comparison) {
  std::ostringstream out;
  out << "method";
  for (const auto& [col, key] : compare_columns()) out << "," << col << "_mean," << col << "_std";
  for (const auto& [col, key] : compare_columns()) out << ",delta_" << col;
  out << "\n";
  for (const auto& row : comparison.at("rows")) {
    out << row.at("method").get<std::string>();
    for (const auto& [col, key] : compare_columns()) {
      out << "," << csv_number(row.at(col + "_mean")) << "," << csv_number(row.at(col + "_std"));
    }
    for (const auto& [col, key] : compare_columns()) out << "," << csv_number(row.at("delta_" + col));
    out << "\n";
  }
  return out.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const Json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace macs

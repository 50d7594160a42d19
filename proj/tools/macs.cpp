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

// macs: train, evaluate and analyze margin + consistency supervised models.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "macs/config.hpp"
#include "macs/error.hpp"
#include "macs/experiment.hpp"
#include "macs/report.hpp"

namespace fs = std::filesystem;
using namespace macs;

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string checkpoint;
};

// "--key value" and "--key=value" pairs left over by CLI11.
void apply_extras(ConfigMap& map, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("missing value for --" + key);
      value = extras[++i];
    }
    map.set(key, value);
  }
}

ExperimentConfig load_config(const CommonArgs& args, const std::vector<std::string>& extras) {
  ConfigMap map = args.config.empty() ? ConfigMap{} : ConfigMap::load(args.config);
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    map.set(s.substr(0, eq), s.substr(eq + 1));
  }
  apply_extras(map, extras);
  if (const char* env = std::getenv("MACS_OUT_DIR"); env && *env) map.set("out_dir", env);
  return resolve_config(map);
}

fs::path run_dir(const ExperimentConfig& cfg) { return fs::path(cfg.out_dir) / cfg.name; }
fs::path ckpt_path(const ExperimentConfig& cfg, std::uint64_t seed) {
  return run_dir(cfg) / ("seed" + std::to_string(seed) + ".ckpt");
}
fs::path train_log_path(const ExperimentConfig& cfg, std::uint64_t seed) {
  return run_dir(cfg) / ("train_seed" + std::to_string(seed) + ".json");
}

void do_train(const ExperimentConfig& cfg, const PreparedData& data) {
  Json timing;
  timing["schema"] = kReportSchema;
  timing["kind"] = "timing";
  timing[kTimestampKey] = utc_timestamp();
  timing["seeds"] = Json::array();
  for (auto seed : cfg.seeds) {
    TrainResult r = train_model(cfg, data, seed);
    save_checkpoint(r.model, ckpt_path(cfg, seed));
    TrainSummary t{r.epochs, r.steps, r.forward_passes, r.pinsker};
    Json log = train_summary_json(t);
    log["schema"] = kReportSchema;
    log["seed"] = seed;
    write_json_atomic(train_log_path(cfg, seed), log);
    timing["seeds"].push_back({{"seed", seed},
                               {"seconds", r.seconds},
                               {"seconds_per_step", r.steps ? r.seconds / r.steps : 0.0}});
    std::printf("train %s seed %llu: %zu steps, final loss %.6f, %.2fs\n", cfg.name.c_str(),
                static_cast<unsigned long long>(seed), r.steps,
                r.epochs.empty() ? 0.0 : r.epochs.back().total, r.seconds);
  }
  write_json_atomic(run_dir(cfg) / "timing.json", timing);
}

std::optional<TrainSummary> load_train_log(const ExperimentConfig& cfg, std::uint64_t seed) {
  const fs::path p = train_log_path(cfg, seed);
  if (!fs::exists(p)) return std::nullopt;
  return train_summary_from_json(read_json(p));
}

// Evaluates the requested checkpoints and writes `<prefix>_seed<s>.json`
// plus, for the whole seed list, `<prefix>_aggregate.json` and a CSV.
void do_eval(const ExperimentConfig& cfg, const PreparedData& data, const std::string& prefix,
             const std::string& checkpoint) {
  std::vector<SeedReport> reports;
  auto one = [&](const Model& model, std::uint64_t seed) {
    SeedReport r = evaluate_model(cfg, data, model, seed);
    r.training = load_train_log(cfg, seed);
    write_json_atomic(run_dir(cfg) / (prefix + "_seed" + std::to_string(seed) + ".json"),
                      seed_report_json(cfg, r));
    std::printf("%s %s seed %llu: acc %.4f ece %.4f nll %.4f", prefix.c_str(), cfg.name.c_str(),
                static_cast<unsigned long long>(seed), r.accuracy, r.ece, r.nll);
    if (r.corruption_mean) std::printf(" corrupt %.4f", *r.corruption_mean);
    if (r.analysis) {
      std::printf(" margin %.4f sens %.4f", r.analysis->margins.mean_margin,
                  r.analysis->sensitivity.mean_sensitivity);
    }
    if (r.temperature) std::printf(" T %.4f", r.temperature->temperature);
    std::printf("\n");
    reports.push_back(std::move(r));
  };
  if (!checkpoint.empty()) {
    Model model = load_checkpoint(checkpoint);
    one(model, model.seed());
    return;
  }
  for (auto seed : cfg.seeds) one(load_checkpoint(ckpt_path(cfg, seed)), seed);
  const Json agg = aggregate_json(cfg, reports);
  write_json_atomic(run_dir(cfg) / (prefix + "_aggregate.json"), agg);
  write_text_atomic(run_dir(cfg) / (prefix + "_summary.csv"), aggregate_csv(agg));
}

int do_selftest() {
  bool ok = true;
  for (const auto& r : run_selftest()) {
    std::printf("%s %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"macs: margin + consistency supervision laboratory"};
  app.require_subcommand(1);
  CommonArgs args;
  std::vector<std::string> compare_inputs;
  std::string compare_out;

  auto add_common = [&](CLI::App* sub, bool with_checkpoint) {
    sub->add_option("-c,--config", args.config, "config file (key = value lines)");
    sub->add_option("--set", args.sets, "override: key=value (repeatable)");
    if (with_checkpoint) sub->add_option("--checkpoint", args.checkpoint, "evaluate one checkpoint");
    sub->allow_extras();
  };
  auto* train = app.add_subcommand("train", "train every seed and save checkpoints");
  add_common(train, false);
  auto* run = app.add_subcommand("run", "train, then eval");
  add_common(run, false);
  auto* eval = app.add_subcommand("eval", "clean metrics, corruption sweep, analysis, calibration");
  add_common(eval, true);
  auto* corrupt = app.add_subcommand("corrupt", "corruption sweep only");
  add_common(corrupt, true);
  auto* analyze = app.add_subcommand("analyze", "margin, sensitivity and spectral analysis only");
  add_common(analyze, true);
  auto* calibrate = app.add_subcommand("calibrate", "temperature scaling only");
  add_common(calibrate, true);
  auto* overhead = app.add_subcommand("overhead", "time optimizer steps against a CE reference");
  add_common(overhead, false);
  auto* compare = app.add_subcommand("compare", "compare aggregate reports (first is the baseline)");
  compare->add_option("reports", compare_inputs, "aggregate JSON files")->required()->expected(2, -1);
  compare->add_option("-o,--out", compare_out, "output prefix (default: compare)");
  auto* selftest = app.add_subcommand("selftest", "run the built-in invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (selftest->parsed()) return do_selftest();
    if (compare->parsed()) {
      std::vector<Json> aggs;
      for (const auto& p : compare_inputs) aggs.push_back(read_json(p));
      const Json cmp = compare_json(aggs);
      const std::string prefix = compare_out.empty() ? "compare" : compare_out;
      write_json_atomic(prefix + ".json", cmp);
      write_text_atomic(prefix + ".csv", compare_csv(cmp));
      std::cout << compare_csv(cmp);
      return 0;
    }

    CLI::App* active = nullptr;
    for (auto* s : {train, run, eval, corrupt, analyze, calibrate, overhead})
      if (s->parsed()) active = s;
    const ExperimentConfig base = load_config(args, active->remaining());
    const PreparedData data = prepare_data(base);

    if (active == train || active == run) do_train(base, data);
    if (active == run || active == eval) do_eval(base, data, "report", args.checkpoint);
    if (active == corrupt || active == analyze || active == calibrate) {
      ExperimentConfig cfg = base;
      cfg.eval.corruptions = active == corrupt;
      cfg.eval.analysis = active == analyze;
      cfg.eval.temperature = active == calibrate;
      do_eval(cfg, data, active->get_name(), args.checkpoint);
    }
    if (active == overhead) {
      const OverheadReport r = overhead_probe(base, data, base.seeds.front());
      write_json_atomic(run_dir(base) / "overhead.json", overhead_json(base, r));
      std::printf("overhead %s: %.3g s/step vs ce %.3g s/step (ratio %.3f), forwards/step %.0f vs %.0f\n",
                  std::string(objective_name(r.objective)).c_str(), r.seconds_per_step,
                  r.ce_seconds_per_step, r.ratio, r.forwards_per_step, r.ce_forwards_per_step);
    }
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "macs: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "macs: %s\n", e.what());
    return 1;
  }
}

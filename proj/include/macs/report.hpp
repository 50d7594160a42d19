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

#ifndef MACS_REPORT_HPP
#define MACS_REPORT_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "macs/experiment.hpp"

namespace macs {

using Json = nlohmann::ordered_json;

inline constexpr int kReportSchema = 1;

/// The non-deterministic field; excluded when reports are compared.
inline constexpr const char* kTimestampKey = "timestamp";

Json config_json(const ExperimentConfig& cfg);
Json train_summary_json(const TrainSummary& t);
TrainSummary train_summary_from_json(const Json& j);

Json seed_report_json(const ExperimentConfig& cfg, const SeedReport& r);
/// Mean and population std over the per-seed scalar metrics, with the
/// per-seed values alongside.
Json aggregate_json(const ExperimentConfig& cfg, const std::vector<SeedReport>& reports);
/// One CSV row per metric: metric,mean,std,seed values...
std::string aggregate_csv(const Json& aggregate);

Json overhead_json(const ExperimentConfig& cfg, const OverheadReport& r);

/// Rows "method", metric means/stds, and deltas against the first aggregate.
/// Aggregates must share the dataset and model settings.
Json compare_json(const std::vector<Json>& aggregates);
std::string compare_csv(const Json& comparison);

/// Writes to `path.tmp` then renames over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

/// Current UTC time, ISO 8601.
std::string utc_timestamp();

}  // namespace macs

#endif  // MACS_REPORT_HPP

// Copyright 2026 The shufflepl Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shufflepl/optimizer.hpp"
#include "shufflepl/problems.hpp"
#include "shufflepl/schedule.hpp"
#include "shufflepl/shuffling.hpp"

namespace shufflepl::harness {

// Trace CSV layout. The first line carries the format version, the second the
// column names; one row per epoch follows. Doubles use %.17g, missing values "nan",
// permutations are space-separated 1-based labels.
inline constexpr const char* kTraceVersionLine = "# shufflepl-trace v1";
inline constexpr const char* kIteratesVersionLine = "# shufflepl-iterates v1";
const std::vector<std::string>& trace_columns();

std::string format_double(double x);

class TraceWriter {
 public:
  explicit TraceWriter(std::ostream& out);
  void write(const EpochRecord& record);

 private:
  std::ostream& out_;
};

void write_trace(std::ostream& out, std::span<const EpochRecord> records);
std::vector<EpochRecord> read_trace(std::istream& in);
std::vector<EpochRecord> read_trace_file(const std::filesystem::path& path);

// Inner iterates, one row per (epoch, step): epoch, step, w_0 .. w_{d-1}.
class IteratesWriter {
 public:
  IteratesWriter(std::ostream& out, std::size_t dimension);
  void write(const EpochRecord& record);

 private:
  std::ostream& out_;
};

// Fills inner_iterates and start/end points of matching records.
void attach_iterates(std::istream& in, std::vector<EpochRecord>& records);

enum class ScheduleKind { kConstant, kTheorem, kCorollary };

struct ExperimentConfig {
  nlohmann::json problem;   // resolved problem document
  std::string scheme = "rr";
  std::uint64_t seed = 0;
  nlohmann::json schedule;  // {"kind": "constant" | "theorem" | "corollary", ...}
  std::optional<std::size_t> epochs;
  std::optional<double> target_gap;  // stop once the min-so-far gap reaches it
  std::filesystem::path out = "out";
  std::size_t repeat = 1;
  bool full_trace = false;
  nlohmann::json w0 = "initial";  // "initial" | "zeros" | array
  std::vector<double> eta_grid = {1e-4, 1e-3, 1e-2, 0.1, 1.0};
  std::size_t probe_epochs = 100;
  std::vector<double> eps_hats;
  std::size_t scaling_cap = 1000000;
};

// Accepts an inline problem object or a path (relative to base_dir) to one.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

struct ResolvedRun {
  std::shared_ptr<const FiniteSumProblem> problem;
  ShufflingScheme scheme;
  StepSchedule schedule;
  std::optional<ConstantsLedger> constants;  // theorem and corollary schedules
  std::optional<CorollaryPlan> corollary;
  std::size_t epochs = 0;
  Vector w0;
};

// Builds the (problem, schedule, scheme) triple; throws ConfigError on anything invalid.
ResolvedRun resolve(const ExperimentConfig& config);
ResolvedRun resolve(const ExperimentConfig& config, std::shared_ptr<const FiniteSumProblem> problem);

struct RunOutcome {
  std::uint64_t seed = 0;
  std::filesystem::path trace_path;
  std::size_t epochs_run = 0;
  double final_objective = 0;
  double min_gap = kNotAvailable;
  std::optional<std::size_t> reached_at;  // first epoch whose gap <= target
  bool diverged = false;
  std::string message;
};

struct RunReport {
  std::vector<RunOutcome> runs;
  std::filesystem::path summary_path;
  std::filesystem::path manifest_path;
  bool any_diverged() const;
};

// `repeat` runs with scheme seeds seed, seed + 1, ...; writes run_<k>.csv,
// run_<k>.json, summary.csv (mean and sample std across runs per epoch) and manifest.json.
RunReport cmd_run(const ExperimentConfig& config);

struct SummaryRow {
  std::size_t epoch = 0;
  double eta = 0;
  double mean_objective = 0, std_objective = 0;
  double mean_gap = kNotAvailable, std_gap = kNotAvailable;
  std::size_t runs = 0;
};

// Epochs present in every run; std is the sample standard deviation (0 for one run).
std::vector<SummaryRow> summarize(std::span<const std::vector<EpochRecord>> runs);
void write_summary(std::ostream& out, std::span<const SummaryRow> rows);
std::vector<SummaryRow> read_summary(std::istream& in);

struct GridEntry {
  double eta = 0;
  double final_objective = kNotAvailable;
  bool diverged = false;
  std::size_t diverged_epoch = 0;
};

struct GridResult {
  std::vector<GridEntry> entries;  // in grid order
  std::optional<std::size_t> winner;
};

GridResult cmd_grid(const ExperimentConfig& config);
GridResult grid_search(const FiniteSumProblem& problem, const Vector& w0, const ShufflingScheme& scheme,
                       std::span<const double> grid, std::size_t probe_epochs);

struct ScalingPoint {
  double eps_hat = 0;
  std::size_t epochs = 0;  // first epoch t with min_{s<=t} gap <= eps_hat
  std::size_t budget = 0;
  bool censored = false;
  double residual = kNotAvailable;
};

struct LogLogFit {
  double slope = 0;
  double intercept = 0;
  std::vector<double> residuals;
};

// Least-squares fit of log(epochs) against log(1 / eps_hat). Needs >= 3 points.
LogLogFit fit_loglog(std::span<const double> eps_hats, std::span<const double> epochs);

struct ScalingResult {
  std::vector<ScalingPoint> points;
  std::optional<LogLogFit> fit;  // absent when fewer than 3 uncensored points
};

ScalingResult cmd_scaling(const ExperimentConfig& config);

nlohmann::json to_json(const RunReport& report);
nlohmann::json to_json(const GridResult& result);
nlohmann::json to_json(const ScalingResult& result);

}  // namespace shufflepl::harness

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

#include "shufflepl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "shufflepl/errors.hpp"

namespace shufflepl::harness {

namespace fs = std::filesystem;

namespace {

constexpr const char* kSummaryVersionLine = "# shufflepl-summary v1";

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  return fmt::format("{}", fmt::join(parts, sep));
}

double parse_double(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ConfigError(fmt::format("line {}: '{}' is not a number", line_no, s));
  }
  return v;
}

std::size_t parse_size(const std::string& s, std::size_t line_no) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (s.empty() || pos != s.size()) {
    throw ConfigError(fmt::format("line {}: '{}' is not a nonnegative integer", line_no, s));
  }
  return static_cast<std::size_t>(v);
}

void expect_line(std::istream& in, const std::string& want, std::size_t line_no, const char* what) {
  std::string line;
  if (!std::getline(in, line) || line != want) {
    throw ConfigError(fmt::format("line {}: expected {} '{}', got '{}'", line_no, what, want, line));
  }
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError(fmt::format("output directory '{}' is not writable: {}", dir.string(), ec.message()));
  }
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

// Reads a required or optional field, turning type errors into ConfigError.
template <typename T>
T field(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key)) throw ConfigError(fmt::format("missing field '{}'", key));
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("field '{}': {}", key, e.what()));
  }
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
  return field<T>(doc, key);
}

}  // namespace

const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols = {
      "epoch",         "eta",          "objective",     "gap",           "avg_sq_grad",
      "inner_sq_grad", "dev_sum_lt_n", "dev_sum_le_n",  "dist_sum_lt_n", "dist_sq_start",
      "dist_sq_end",   "cap_exceeded", "permutation"};
  return cols;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  return fmt::format("{:.17g}", x);
}

TraceWriter::TraceWriter(std::ostream& out) : out_(out) {
  out_ << kTraceVersionLine << '\n' << join(trace_columns(), ",") << '\n';
}

void TraceWriter::write(const EpochRecord& r) {
  out_ << r.epoch << ',' << format_double(r.eta) << ',' << format_double(r.objective) << ','
       << format_double(r.gap) << ',' << format_double(r.avg_sq_grad) << ',' << format_double(r.inner_sq_grad)
       << ',' << format_double(r.dev_sum_lt_n) << ',' << format_double(r.dev_sum_le_n) << ','
       << format_double(r.dist_sum_lt_n) << ',' << format_double(r.dist_sq_start) << ','
       << format_double(r.dist_sq_end) << ',' << (r.cap_exceeded ? 1 : 0) << ','
       << fmt::format("{}", fmt::join(r.permutation.one_based(), " ")) << '\n';
}

void write_trace(std::ostream& out, std::span<const EpochRecord> records) {
  TraceWriter writer(out);
  for (const auto& r : records) writer.write(r);
}

std::vector<EpochRecord> read_trace(std::istream& in) {
  expect_line(in, kTraceVersionLine, 1, "version line");
  expect_line(in, join(trace_columns(), ","), 2, "column header");
  std::vector<EpochRecord> out;
  std::string line;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != trace_columns().size()) {
      throw ConfigError(fmt::format("line {}: expected {} fields, got {}", line_no, trace_columns().size(), f.size()));
    }
    EpochRecord r;
    r.epoch = parse_size(f[0], line_no);
    r.eta = parse_double(f[1], line_no);
    r.objective = parse_double(f[2], line_no);
    r.gap = parse_double(f[3], line_no);
    r.avg_sq_grad = parse_double(f[4], line_no);
    r.inner_sq_grad = parse_double(f[5], line_no);
    r.dev_sum_lt_n = parse_double(f[6], line_no);
    r.dev_sum_le_n = parse_double(f[7], line_no);
    r.dist_sum_lt_n = parse_double(f[8], line_no);
    r.dist_sq_start = parse_double(f[9], line_no);
    r.dist_sq_end = parse_double(f[10], line_no);
    r.cap_exceeded = parse_size(f[11], line_no) != 0;
    std::vector<std::size_t> perm;
    for (const auto& label : split(f[12], ' ')) {
      const std::size_t v = parse_size(label, line_no);
      if (v == 0) throw ConfigError(fmt::format("line {}: permutation labels are 1-based", line_no));
      perm.push_back(v - 1);
    }
    if (!is_bijection(perm)) throw ConfigError(fmt::format("line {}: permutation is not a bijection", line_no));
    r.permutation = Permutation(std::move(perm));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<EpochRecord> read_trace_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read trace '{}'", path.string()));
  return read_trace(in);
}

IteratesWriter::IteratesWriter(std::ostream& out, std::size_t dimension) : out_(out) {
  out_ << kIteratesVersionLine << '\n' << "epoch,step";
  for (std::size_t k = 0; k < dimension; ++k) out_ << ",w" << k;
  out_ << '\n';
}

void IteratesWriter::write(const EpochRecord& record) {
  for (std::size_t s = 0; s < record.inner_iterates.size(); ++s) {
    out_ << record.epoch << ',' << s;
    for (const double x : record.inner_iterates[s]) out_ << ',' << format_double(x);
    out_ << '\n';
  }
}

void attach_iterates(std::istream& in, std::vector<EpochRecord>& records) {
  expect_line(in, kIteratesVersionLine, 1, "version line");
  std::string line;
  std::getline(in, line);
  const auto header = split(line, ',');
  if (header.size() < 3 || header[0] != "epoch" || header[1] != "step") {
    throw ConfigError("line 2: malformed iterates header");
  }
  const std::size_t d = header.size() - 2;

  std::map<std::size_t, std::size_t> by_epoch;
  for (std::size_t k = 0; k < records.size(); ++k) {
    by_epoch[records[k].epoch] = k;
    records[k].inner_iterates.clear();
  }
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != d + 2) throw ConfigError(fmt::format("line {}: expected {} fields", line_no, d + 2));
    const auto it = by_epoch.find(parse_size(f[0], line_no));
    if (it == by_epoch.end()) continue;
    auto& rec = records[it->second];
    if (parse_size(f[1], line_no) != rec.inner_iterates.size()) {
      throw ConfigError(fmt::format("line {}: inner steps out of order", line_no));
    }
    Vector w(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) w[static_cast<Eigen::Index>(k)] = parse_double(f[k + 2], line_no);
    rec.inner_iterates.push_back(std::move(w));
  }
  for (auto& rec : records) {
    if (rec.inner_iterates.empty()) continue;
    rec.start_point = rec.inner_iterates.front();
    rec.end_point = rec.inner_iterates.back();
  }
}

ExperimentConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> known = {"problem", "scheme",      "seed",         "schedule",
                                                 "epochs",  "target_gap",  "out",          "repeat",
                                                 "full_trace", "w0",       "grid",         "probe_epochs",
                                                 "eps_hats", "scaling_cap"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(fmt::format("unknown config field '{}'", key));
    }
  }

  ExperimentConfig c;
  if (!doc.contains("problem")) throw ConfigError("config needs a 'problem' (object or path)");
  const auto& problem = doc.at("problem");
  if (problem.is_string()) {
    fs::path path = problem.get<std::string>();
    if (path.is_relative()) path = base_dir / path;
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot read problem file '{}'", path.string()));
    try {
      c.problem = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("problem file '{}': {}", path.string(), e.what()));
    }
  } else if (problem.is_object()) {
    c.problem = problem;
  } else {
    throw ConfigError("'problem' must be an object or a path");
  }

  c.scheme = optional_field<std::string>(doc, "scheme").value_or(c.scheme);
  c.seed = optional_field<std::uint64_t>(doc, "seed").value_or(c.seed);
  c.schedule = doc.value("schedule", nlohmann::json::object());
  if (!c.schedule.is_object()) throw ConfigError("'schedule' must be an object");
  if (doc.contains("epochs")) {
    c.epochs = field<std::size_t>(doc, "epochs");
    if (*c.epochs == 0) throw ConfigError("epochs must be >= 1 (T = 0 runs nothing)");
  }
  c.target_gap = optional_field<double>(doc, "target_gap");
  if (c.target_gap && !(*c.target_gap > 0.0)) throw ConfigError("target_gap must be > 0");
  if (auto out = optional_field<std::string>(doc, "out")) c.out = *out;
  c.repeat = optional_field<std::size_t>(doc, "repeat").value_or(c.repeat);
  if (c.repeat == 0) throw ConfigError("repeat must be >= 1");
  c.full_trace = optional_field<bool>(doc, "full_trace").value_or(false);
  if (doc.contains("w0")) c.w0 = doc.at("w0");
  if (doc.contains("grid")) {
    c.eta_grid = field<std::vector<double>>(doc, "grid");
  }
  c.probe_epochs = optional_field<std::size_t>(doc, "probe_epochs").value_or(c.probe_epochs);
  if (doc.contains("eps_hats")) c.eps_hats = field<std::vector<double>>(doc, "eps_hats");
  c.scaling_cap = optional_field<std::size_t>(doc, "scaling_cap").value_or(c.scaling_cap);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config '{}': {}", path.string(), e.what()));
  }
  return parse_config(doc, path.parent_path());
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json doc = {{"problem", c.problem},
                        {"scheme", c.scheme},
                        {"seed", c.seed},
                        {"schedule", c.schedule},
                        {"out", c.out.string()},
                        {"repeat", c.repeat},
                        {"full_trace", c.full_trace},
                        {"w0", c.w0},
                        {"grid", c.eta_grid},
                        {"probe_epochs", c.probe_epochs},
                        {"eps_hats", c.eps_hats},
                        {"scaling_cap", c.scaling_cap}};
  if (c.epochs) doc["epochs"] = *c.epochs;
  if (c.target_gap) doc["target_gap"] = *c.target_gap;
  return doc;
}

namespace {

Vector resolve_w0(const ExperimentConfig& c, const FiniteSumProblem& problem) {
  const auto d = static_cast<Eigen::Index>(problem.dimension());
  if (c.w0.is_string()) {
    const auto s = c.w0.get<std::string>();
    if (s == "initial") return problem.initial_point();
    if (s == "zeros") return Vector::Zero(d);
    throw ConfigError(fmt::format("w0 must be 'initial', 'zeros' or an array (got '{}')", s));
  }
  if (!c.w0.is_array()) throw ConfigError("w0 must be 'initial', 'zeros' or an array");
  const auto values = c.w0.get<std::vector<double>>();
  if (values.size() != problem.dimension()) {
    throw ConfigError(fmt::format("w0 has {} entries, problem dimension is {}", values.size(), problem.dimension()));
  }
  Vector w = Eigen::Map<const Vector>(values.data(), d);
  if (!w.allFinite()) throw ConfigError("w0 must be finite");
  return w;
}

ShufflingScheme resolve_scheme(const std::string& code, std::uint64_t seed) {
  try {
    return parse_scheme(code, seed);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

ConstantsLedger resolve_constants(const nlohmann::json& s, const FiniteSumProblem& problem) {
  const auto& truth = problem.ground_truth();
  const auto L = optional_field<double>(s, "L") ? optional_field<double>(s, "L") : truth.smoothness;
  const auto mu = optional_field<double>(s, "mu") ? optional_field<double>(s, "mu") : truth.pl_constant;
  const auto M = optional_field<double>(s, "M") ? optional_field<double>(s, "M") : truth.star_constant;
  const double N = optional_field<double>(s, "N").value_or(0.0);
  if (!L || !mu || !M) {
    throw ConfigError("schedule needs L, mu and M; give them in the schedule or use a problem that knows them");
  }
  const double gamma = optional_field<double>(s, "gamma").value_or(1.0 / (*L * *L));
  const auto variant_name = optional_field<std::string>(s, "c1_variant").value_or("derived");
  if (variant_name != "derived" && variant_name != "printed") {
    throw ConfigError("c1_variant must be 'derived' or 'printed'");
  }
  return compute_constants(*L, *mu, *M, N, gamma,
                           variant_name == "derived" ? C1Variant::kDerived : C1Variant::kPrinted);
}

}  // namespace

ResolvedRun resolve(const ExperimentConfig& config) {
  std::shared_ptr<const FiniteSumProblem> problem;
  try {
    problem = load_problem(config.problem);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return resolve(config, std::move(problem));
}

ResolvedRun resolve(const ExperimentConfig& config, std::shared_ptr<const FiniteSumProblem> problem) {
  ResolvedRun r;
  r.problem = std::move(problem);
  r.scheme = resolve_scheme(config.scheme, config.seed);
  r.w0 = resolve_w0(config, *r.problem);

  const auto& s = config.schedule;
  const auto kind = optional_field<std::string>(s, "kind").value_or("constant");
  try {
    if (kind == "constant") {
      const double eta = field<double>(s, "eta");
      if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("constant step must be finite and > 0");
      r.schedule = ConstantStep{eta};
      if (!config.epochs) throw ConfigError("a constant schedule needs 'epochs'");
      r.epochs = *config.epochs;
      return r;
    }

    const std::size_t n = r.problem->size();
    if (kind == "theorem") {
      const double eps = field<double>(s, "epsilon");
      const double D = field<double>(s, "D");
      const double lambda = field<double>(s, "lambda");
      double C1 = 0;
      double cap = std::numeric_limits<double>::infinity();
      if (auto given = optional_field<double>(s, "C1")) {
        C1 = *given;
        cap = known_step_cap(*r.problem, std::nullopt, std::nullopt);
      } else {
        r.constants = resolve_constants(s, *r.problem);
        C1 = r.constants->C1;
        cap = step_cap(n, r.constants->L, r.constants->M);
      }
      r.schedule = plan_schedule(eps, D, lambda, C1, cap);
    } else if (kind == "corollary") {
      const auto& truth = r.problem->ground_truth();
      if (!truth.w_star) throw ConfigError("corollary schedule needs a problem with known w_star");
      r.constants = resolve_constants(s, *r.problem);
      const double eps_hat = field<double>(s, "eps_hat");
      const double D = field<double>(s, "D");
      const double P = optional_field<double>(s, "P").value_or(0.0);
      const double dist0_sq = (r.w0 - *truth.w_star).squaredNorm();
      const auto& c = *r.constants;
      r.corollary = corollary_epochs(c.L, c.mu, c.M, c.N, P, D, dist0_sq, eps_hat, c.variant);
      r.schedule = plan_schedule(r.corollary->epsilon, D, r.corollary->lambda, r.corollary->constants.C1,
                                 step_cap(n, c.L, c.M));
    } else {
      throw ConfigError(fmt::format("unknown schedule kind '{}' (constant, theorem or corollary)", kind));
    }
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }

  const std::size_t T = std::get<SchedulePlan>(r.schedule).T;
  r.epochs = config.epochs.value_or(T);
  if (r.epochs > T) {
    throw ConfigError(fmt::format("epochs = {} exceeds the planned horizon T = {}", r.epochs, T));
  }
  return r;
}

bool RunReport::any_diverged() const {
  return std::any_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.diverged; });
}

std::vector<SummaryRow> summarize(std::span<const std::vector<EpochRecord>> runs) {
  std::vector<SummaryRow> rows;
  if (runs.empty()) return rows;
  std::size_t common = runs.front().size();
  for (const auto& r : runs) common = std::min(common, r.size());
  const auto k = static_cast<double>(runs.size());

  auto mean_std = [&](std::size_t t, auto get) {
    double mean = 0.0;
    for (const auto& r : runs) mean += get(r[t]);
    mean /= k;
    double ss = 0.0;
    for (const auto& r : runs) ss += (get(r[t]) - mean) * (get(r[t]) - mean);
    const double sd = runs.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
    return std::pair{mean, sd};
  };

  for (std::size_t t = 0; t < common; ++t) {
    SummaryRow row;
    row.epoch = runs.front()[t].epoch;
    row.eta = runs.front()[t].eta;
    row.runs = runs.size();
    std::tie(row.mean_objective, row.std_objective) = mean_std(t, [](const EpochRecord& e) { return e.objective; });
    std::tie(row.mean_gap, row.std_gap) = mean_std(t, [](const EpochRecord& e) { return e.gap; });
    rows.push_back(row);
  }
  return rows;
}

void write_summary(std::ostream& out, std::span<const SummaryRow> rows) {
  out << kSummaryVersionLine << '\n'
      << "epoch,eta,mean_objective,std_objective,mean_gap,std_gap,gap_lo,gap_hi,runs\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << format_double(r.eta) << ',' << format_double(r.mean_objective) << ','
        << format_double(r.std_objective) << ',' << format_double(r.mean_gap) << ',' << format_double(r.std_gap)
        << ',' << format_double(r.mean_gap - r.std_gap) << ',' << format_double(r.mean_gap + r.std_gap) << ','
        << r.runs << '\n';
  }
}

std::vector<SummaryRow> read_summary(std::istream& in) {
  expect_line(in, kSummaryVersionLine, 1, "version line");
  expect_line(in, "epoch,eta,mean_objective,std_objective,mean_gap,std_gap,gap_lo,gap_hi,runs", 2,
              "column header");
  std::vector<SummaryRow> rows;
  std::string line;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) throw ConfigError(fmt::format("line {}: expected 9 fields", line_no));
    SummaryRow r;
    r.epoch = parse_size(f[0], line_no);
    r.eta = parse_double(f[1], line_no);
    r.mean_objective = parse_double(f[2], line_no);
    r.std_objective = parse_double(f[3], line_no);
    r.mean_gap = parse_double(f[4], line_no);
    r.std_gap = parse_double(f[5], line_no);
    r.runs = parse_size(f[8], line_no);
    rows.push_back(r);
  }
  return rows;
}

namespace {

// Keeps only the per-epoch scalars the summary needs.
EpochRecord light_copy(const EpochRecord& r) {
  EpochRecord out;
  out.epoch = r.epoch;
  out.eta = r.eta;
  out.objective = r.objective;
  out.gap = r.gap;
  return out;
}

nlohmann::json schedule_doc(const ResolvedRun& r) {
  nlohmann::json doc = to_json(r.schedule);
  if (r.constants) doc["constants"] = to_json(*r.constants);
  if (r.corollary) {
    doc["corollary"] = {{"G", r.corollary->G},
                        {"lambda", r.corollary->lambda},
                        {"epsilon", r.corollary->epsilon},
                        {"T", r.corollary->T}};
  }
  return doc;
}

}  // namespace

RunReport cmd_run(const ExperimentConfig& config) {
  const ResolvedRun base = resolve(config);
  prepare_dir(config.out);

  RunReport report;
  std::vector<std::vector<EpochRecord>> light(config.repeat);
  for (std::size_t k = 0; k < config.repeat; ++k) {
    ExperimentConfig cfg = config;
    cfg.seed = config.seed + k;
    const ResolvedRun r = resolve(cfg, base.problem);

    RunOutcome outcome;
    outcome.seed = cfg.seed;
    outcome.trace_path = config.out / fmt::format("run_{}.csv", k + 1);
    auto trace_out = open_output(outcome.trace_path);
    TraceWriter writer(trace_out);
    std::ofstream iter_out;
    std::optional<IteratesWriter> iter_writer;
    if (config.full_trace) {
      iter_out = open_output(config.out / fmt::format("run_{}_iterates.csv", k + 1));
      iter_writer.emplace(iter_out, r.problem->dimension());
    }

    RunOptions options;
    options.retain_records = false;
    options.full_trace = config.full_trace;
    double min_gap = std::numeric_limits<double>::infinity();
    options.observer = [&](const EpochRecord& rec) {
      writer.write(rec);
      if (iter_writer) iter_writer->write(rec);
      light[k].push_back(light_copy(rec));
      outcome.final_objective = rec.objective;
      if (!std::isnan(rec.gap)) {
        min_gap = std::min(min_gap, rec.gap);
        if (config.target_gap && min_gap <= *config.target_gap && !outcome.reached_at) {
          outcome.reached_at = rec.epoch;
          return false;
        }
      }
      return true;
    };

    try {
      const RunTrace trace = run(*r.problem, r.w0, r.schedule, r.scheme, r.epochs, options);
      outcome.epochs_run = trace.epochs_run;
      outcome.final_objective = eval_objective(*r.problem, trace.final_point);
    } catch (const DivergenceError& e) {
      outcome.diverged = true;
      outcome.epochs_run = e.epoch();
      outcome.message = e.what();
    }
    if (std::isfinite(min_gap)) outcome.min_gap = min_gap;

    nlohmann::json header = {{"format", kTraceVersionLine},
                             {"run", k + 1},
                             {"seed", cfg.seed},
                             {"scheme", scheme_code(r.scheme.kind)},
                             {"schedule", schedule_doc(r)},
                             {"epochs_planned", r.epochs},
                             {"epochs_run", outcome.epochs_run},
                             {"problem", r.problem->descriptor()},
                             {"n", r.problem->size()},
                             {"d", r.problem->dimension()},
                             {"diverged", outcome.diverged}};
    if (outcome.diverged) header["error"] = outcome.message;
    write_json(config.out / fmt::format("run_{}.json", k + 1), header);
    report.runs.push_back(std::move(outcome));
  }

  report.summary_path = config.out / "summary.csv";
  {
    auto out = open_output(report.summary_path);
    write_summary(out, summarize(light));
  }
  report.manifest_path = config.out / "manifest.json";
  nlohmann::json manifest = to_json(report);
  manifest["config"] = to_json(config);
  write_json(report.manifest_path, manifest);
  return report;
}

GridResult grid_search(const FiniteSumProblem& problem, const Vector& w0, const ShufflingScheme& scheme,
                       std::span<const double> grid, std::size_t probe_epochs) {
  detail::require(!grid.empty(), "step-size grid must be nonempty");
  detail::require(probe_epochs >= 1, "probe budget must be >= 1 epoch");
  GridResult result;
  RunOptions options;
  options.retain_records = false;
  for (const double eta : grid) {
    detail::require(std::isfinite(eta) && eta > 0.0, fmt::format("grid step {} must be finite and > 0", eta));
    GridEntry entry;
    entry.eta = eta;
    try {
      const RunTrace trace = run(problem, w0, ConstantStep{eta}, scheme, probe_epochs, options);
      entry.final_objective = eval_objective(problem, trace.final_point);
      if (!std::isfinite(entry.final_objective)) {
        entry.diverged = true;
        entry.diverged_epoch = probe_epochs;
      }
    } catch (const DivergenceError& e) {
      entry.diverged = true;
      entry.diverged_epoch = e.epoch();
      entry.final_objective = kNotAvailable;
    }
    result.entries.push_back(entry);
  }
  for (std::size_t k = 0; k < result.entries.size(); ++k) {
    const auto& e = result.entries[k];
    if (e.diverged) continue;
    if (!result.winner || e.final_objective < result.entries[*result.winner].final_objective) result.winner = k;
  }
  return result;
}

GridResult cmd_grid(const ExperimentConfig& config) {
  if (config.eta_grid.empty()) throw ConfigError("grid must be nonempty");
  std::shared_ptr<const FiniteSumProblem> problem;
  try {
    problem = load_problem(config.problem);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  const Vector w0 = resolve_w0(config, *problem);
  const ShufflingScheme scheme = resolve_scheme(config.scheme, config.seed);
  GridResult result;
  try {
    result = grid_search(*problem, w0, scheme, config.eta_grid, config.probe_epochs);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }

  prepare_dir(config.out);
  auto out = open_output(config.out / "grid.csv");
  out << "eta,final_objective,diverged,diverged_epoch,winner\n";
  for (std::size_t k = 0; k < result.entries.size(); ++k) {
    const auto& e = result.entries[k];
    out << format_double(e.eta) << ',' << format_double(e.final_objective) << ',' << (e.diverged ? 1 : 0) << ','
        << e.diverged_epoch << ',' << (result.winner == k ? 1 : 0) << '\n';
  }
  write_json(config.out / "grid.json", to_json(result));
  return result;
}

LogLogFit fit_loglog(std::span<const double> eps_hats, std::span<const double> epochs) {
  detail::require(eps_hats.size() == epochs.size(), "fit needs matching eps_hat and epoch lists");
  detail::require(eps_hats.size() >= 3, fmt::format("fit needs at least 3 points (got {})", eps_hats.size()));
  const std::size_t m = eps_hats.size();
  std::vector<double> x(m);
  std::vector<double> y(m);
  for (std::size_t k = 0; k < m; ++k) {
    detail::require(eps_hats[k] > 0.0 && epochs[k] > 0.0, "fit needs positive eps_hat and epochs");
    x[k] = std::log(1.0 / eps_hats[k]);
    y[k] = std::log(epochs[k]);
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(m);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(m);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  detail::require(sxx > 0.0, "fit needs at least two distinct eps_hat values");
  LogLogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  detail::require(std::isfinite(fit.slope), "fitted slope is not finite");
  for (std::size_t k = 0; k < m; ++k) fit.residuals.push_back(y[k] - (fit.intercept + fit.slope * x[k]));
  return fit;
}

ScalingResult cmd_scaling(const ExperimentConfig& config) {
  if (config.eps_hats.size() < 3) {
    throw ConfigError(fmt::format("scaling needs at least 3 target gaps (got {})", config.eps_hats.size()));
  }
  const auto kind = optional_field<std::string>(config.schedule, "kind").value_or("constant");
  if (kind != "corollary" && kind != "constant") {
    throw ConfigError("scaling supports the 'corollary' (theorem family) and 'constant' schedules");
  }
  std::shared_ptr<const FiniteSumProblem> problem;
  try {
    problem = load_problem(config.problem);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (!problem->ground_truth().f_star) throw ConfigError("scaling needs a problem with known F*");

  ScalingResult result;
  for (const double eps_hat : config.eps_hats) {
    if (!(eps_hat > 0.0)) throw ConfigError("target gaps must be > 0");
    ExperimentConfig cfg = config;
    cfg.epochs.reset();
    if (kind == "corollary") {
      cfg.schedule["eps_hat"] = eps_hat;
    } else {
      cfg.epochs = config.scaling_cap;
    }
    const ResolvedRun r = resolve(cfg, problem);

    ScalingPoint point;
    point.eps_hat = eps_hat;
    point.budget = std::min(r.epochs, config.scaling_cap);
    RunOptions options;
    options.retain_records = false;
    double min_gap = std::numeric_limits<double>::infinity();
    options.observer = [&](const EpochRecord& rec) {
      min_gap = std::min(min_gap, rec.gap);
      if (min_gap <= eps_hat) {
        point.epochs = rec.epoch;
        return false;
      }
      return true;
    };
    try {
      run(*r.problem, r.w0, r.schedule, r.scheme, point.budget, options);
    } catch (const DivergenceError&) {
      point.epochs = 0;
    }
    point.censored = point.epochs == 0;
    if (point.censored) point.epochs = point.budget;
    result.points.push_back(point);
  }

  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& p : result.points) {
    if (p.censored) continue;
    xs.push_back(p.eps_hat);
    ys.push_back(static_cast<double>(p.epochs));
  }
  if (xs.size() >= 3) {
    result.fit = fit_loglog(xs, ys);
    std::size_t k = 0;
    for (auto& p : result.points)
      if (!p.censored) p.residual = result.fit->residuals[k++];
  }

  prepare_dir(config.out);
  auto out = open_output(config.out / "scaling.csv");
  out << "eps_hat,epochs,budget,censored,residual\n";
  for (const auto& p : result.points) {
    out << format_double(p.eps_hat) << ',' << p.epochs << ',' << p.budget << ',' << (p.censored ? 1 : 0) << ','
        << format_double(p.residual) << '\n';
  }
  write_json(config.out / "scaling.json", to_json(result));
  return result;
}

nlohmann::json to_json(const RunReport& report) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : report.runs) {
    nlohmann::json doc = {{"seed", r.seed},
                          {"trace", r.trace_path.filename().string()},
                          {"epochs_run", r.epochs_run},
                          {"final_objective", number_or_null(r.final_objective)},
                          {"min_gap", number_or_null(r.min_gap)},
                          {"diverged", r.diverged}};
    if (r.reached_at) doc["reached_at"] = *r.reached_at;
    if (!r.message.empty()) doc["error"] = r.message;
    runs.push_back(std::move(doc));
  }
  return {{"runs", runs}, {"summary", report.summary_path.filename().string()}, {"any_diverged", report.any_diverged()}};
}

nlohmann::json to_json(const GridResult& result) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : result.entries) {
    entries.push_back({{"eta", e.eta},
                       {"final_objective", number_or_null(e.final_objective)},
                       {"diverged", e.diverged},
                       {"diverged_epoch", e.diverged_epoch}});
  }
  nlohmann::json doc = {{"entries", entries}};
  if (result.winner) {
    doc["winner"] = result.entries[*result.winner].eta;
  } else {
    doc["winner"] = nullptr;
    doc["note"] = "every grid point diverged";
  }
  return doc;
}

nlohmann::json to_json(const ScalingResult& result) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : result.points) {
    points.push_back({{"eps_hat", p.eps_hat},
                      {"epochs", p.epochs},
                      {"budget", p.budget},
                      {"censored", p.censored},
                      {"residual", number_or_null(p.residual)}});
  }
  nlohmann::json doc = {{"points", points}};
  if (result.fit) {
    doc["slope"] = result.fit->slope;
    doc["intercept"] = result.fit->intercept;
  } else {
    doc["slope"] = nullptr;
    doc["note"] = "fewer than 3 uncensored points; no fit";
  }
  return doc;
}

}  // namespace shufflepl::harness

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

// shufflepl command-line front end.
//
// Exit codes: 0 success, 1 config error, 2 divergence, 3 check failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "shufflepl/diagnostics.hpp"
#include "shufflepl/errors.hpp"
#include "shufflepl/harness.hpp"

namespace fs = std::filesystem;
using namespace shufflepl;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kDiverged = 2, kCheckFailed = 3 };

struct CommonFlags {
  std::string config;
  std::optional<std::string> scheme;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> repeat;
  bool full_trace = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* opt = cmd->add_option("--config", f.config, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--scheme", f.scheme, "shuffling scheme")->check(CLI::IsMember({"ig", "ss", "rr"}));
  cmd->add_option("--seed", f.seed, "scheme seed");
  cmd->add_option("--out", f.out, "output directory");
}

harness::ExperimentConfig load_with_overrides(const CommonFlags& f) {
  auto c = harness::load_config(f.config);
  if (f.scheme) c.scheme = *f.scheme;
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out = *f.out;
  if (f.repeat) {
    if (*f.repeat == 0) throw ConfigError("repeat must be >= 1");
    c.repeat = *f.repeat;
  }
  if (f.full_trace) c.full_trace = true;
  return c;
}

fs::path out_dir(const CommonFlags& f) {
  fs::path dir = f.out.value_or(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError(fmt::format("output directory '{}' is not writable", dir.string()));
  return dir;
}

void write_report(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  out << doc.dump(2) << '\n';
}

std::string show(double x) { return std::isnan(x) ? "n/a" : fmt::format("{:.6g}", x); }

std::string show(const std::optional<double>& x) { return x ? show(*x) : "n/a"; }

int cmd_run(const CommonFlags& flags) {
  const auto config = load_with_overrides(flags);
  const auto report = harness::cmd_run(config);
  fmt::print("{:>4}  {:>8}  {:>10}  {:>14}  {:>14}  {}\n", "run", "seed", "epochs", "final F", "min gap", "status");
  for (std::size_t k = 0; k < report.runs.size(); ++k) {
    const auto& r = report.runs[k];
    fmt::print("{:>4}  {:>8}  {:>10}  {:>14}  {:>14}  {}\n", k + 1, r.seed, r.epochs_run, show(r.final_objective),
               show(r.min_gap), r.diverged ? "diverged" : (r.reached_at ? "reached target" : "ok"));
  }
  fmt::print("summary: {}\nmanifest: {}\n", report.summary_path.string(), report.manifest_path.string());
  for (const auto& r : report.runs)
    if (r.diverged) fmt::print(stderr, "error: {}\n", r.message);
  return report.any_diverged() ? kDiverged : kOk;
}

int cmd_grid(const CommonFlags& flags, const std::vector<double>& grid, std::optional<std::size_t> probe) {
  auto config = load_with_overrides(flags);
  if (!grid.empty()) config.eta_grid = grid;
  if (probe) config.probe_epochs = *probe;
  const auto result = harness::cmd_grid(config);
  fmt::print("{:>10}  {:>14}  {}\n", "eta", "final F", "status");
  for (std::size_t k = 0; k < result.entries.size(); ++k) {
    const auto& e = result.entries[k];
    fmt::print("{:>10}  {:>14}  {}{}\n", show(e.eta), show(e.final_objective),
               e.diverged ? fmt::format("diverged at epoch {}", e.diverged_epoch) : "ok",
               result.winner == k ? "  <- best" : "");
  }
  if (!result.winner) {
    fmt::print(stderr, "error: every grid point diverged; no winner\n");
    return kDiverged;
  }
  return kOk;
}

int cmd_scaling(const CommonFlags& flags, const std::vector<double>& eps_hats) {
  auto config = load_with_overrides(flags);
  if (!eps_hats.empty()) config.eps_hats = eps_hats;
  const auto result = harness::cmd_scaling(config);
  fmt::print("{:>10}  {:>10}  {:>10}  {:>10}\n", "eps_hat", "epochs", "budget", "residual");
  for (const auto& p : result.points) {
    fmt::print("{:>10}  {:>10}  {:>10}  {:>10}\n", show(p.eps_hat), p.censored ? "censored" : std::to_string(p.epochs),
               p.budget, show(p.residual));
  }
  if (result.fit) {
    fmt::print("slope = {:.6f}, intercept = {:.6f}\n", result.fit->slope, result.fit->intercept);
  } else {
    fmt::print("no fit: fewer than 3 uncensored points\n");
  }
  return kOk;
}

struct DiagnoseFlags {
  std::string trace;
  std::optional<std::string> iterates;
  std::optional<double> L, mu, M, N, f_star;
  std::size_t samples = 1000;
};

int cmd_diagnose(const CommonFlags& flags, const DiagnoseFlags& d) {
  const fs::path trace_path = d.trace;
  nlohmann::json problem_doc;
  if (!flags.config.empty()) {
    problem_doc = harness::load_config(flags.config).problem;
  } else {
    fs::path header = trace_path;
    header.replace_extension(".json");
    std::ifstream in(header);
    if (!in) throw ConfigError(fmt::format("no --config given and no run header '{}' next to the trace", header.string()));
    try {
      problem_doc = nlohmann::json::parse(in).at("problem");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("run header '{}': {}", header.string(), e.what()));
    }
  }
  std::shared_ptr<const FiniteSumProblem> problem;
  try {
    problem = load_problem(problem_doc);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }

  auto records = harness::read_trace_file(trace_path);
  fs::path iter_path = d.iterates ? fs::path(*d.iterates)
                                  : trace_path.parent_path() / (trace_path.stem().string() + "_iterates.csv");
  if (fs::exists(iter_path)) {
    std::ifstream in(iter_path);
    harness::attach_iterates(in, records);
  }

  DiagnoseOptions opt;
  opt.L = d.L;
  opt.mu = d.mu;
  opt.M = d.M;
  opt.N = d.N;
  opt.f_star = d.f_star;
  opt.smoothness_samples = d.samples;
  opt.seed = flags.seed.value_or(0);
  const auto report = diagnose(*problem, records, opt);

  fmt::print("problem: {} (n = {}, d = {}), epochs checked: {}\n", report.problem_kind, problem->size(),
             problem->dimension(), report.epochs_checked);
  fmt::print("L_hat = {}, L used = {} ({}), mu_hat = {}, M_hat = {}, N_hat = {}\n", show(report.L_hat),
             show(report.L_used), report.L_source, show(report.mu_hat), show(report.M_hat), show(report.N_hat));
  fmt::print("sigma_*^2 = {}, F* = {} ({})\n", show(report.sigma_star_sq_hat), show(report.f_star),
             report.f_star_source.empty() ? "unknown" : report.f_star_source);
  for (const auto& w : report.warnings) fmt::print("warning: {}\n", w);
  fmt::print("{:<38} {:>8} {:>8} {:>8}  {}\n", "check", "passed", "checked", "skipped", "note");
  for (const auto& c : report.checks) {
    if (!c.available) {
      fmt::print("{:<38} {:>8} {:>8} {:>8}  unavailable: {}\n", c.name, "-", "-", "-", c.note);
    } else {
      fmt::print("{:<38} {:>8} {:>8} {:>8}  {}\n", c.name, c.passed, c.checked, c.out_of_regime, c.note);
    }
  }
  const fs::path json_path = out_dir(flags) / "diagnose.json";
  write_report(json_path, to_json(report));
  fmt::print("report: {}\n", json_path.string());
  return report.all_pass() ? kOk : kCheckFailed;
}

struct PlanFlags {
  std::optional<double> eps, D, lambda, C1, cap;
};

int cmd_schedule_plan(const CommonFlags& flags, const PlanFlags& p) {
  SchedulePlan plan;
  std::optional<ConstantsLedger> constants;
  if (!flags.config.empty()) {
    auto config = load_with_overrides(flags);
    const auto resolved = harness::resolve(config);
    if (!std::holds_alternative<SchedulePlan>(resolved.schedule)) {
      throw ConfigError("config schedule is constant; nothing to plan");
    }
    plan = std::get<SchedulePlan>(resolved.schedule);
    constants = resolved.constants;
  } else {
    if (!p.eps || !p.D || !p.lambda || !p.C1) throw ConfigError("schedule-plan needs --eps, --D, --lambda and --C1 (or --config)");
    try {
      plan = plan_schedule(*p.eps, *p.D, *p.lambda, *p.C1, p.cap.value_or(std::numeric_limits<double>::infinity()));
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
  }
  fmt::print("K={}\neta0={}\nT={}\nlambda={}\neta_T={}\nbound={}\n", show(plan.K), show(plan.eta0), plan.T,
             show(plan.lambda), show(eta_at(plan, plan.T)), show(plan.eta_bound()));
  nlohmann::json doc = to_json(plan);
  if (constants) doc["constants"] = to_json(*constants);
  const auto recursion = verify_eta_recursion(plan);
  doc["recursion_holds"] = recursion.all_pass;
  fmt::print("recursion {}\n", recursion.all_pass ? "holds at every epoch" : fmt::format("fails at epoch {}", recursion.first_failure));
  write_report(out_dir(flags) / "schedule_plan.json", doc);
  return recursion.all_pass ? kOk : kCheckFailed;
}

int cmd_gradcheck(const CommonFlags& flags, std::size_t trials, double h, double tol) {
  const auto config = load_with_overrides(flags);
  std::shared_ptr<const FiniteSumProblem> problem;
  try {
    problem = load_problem(config.problem);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  const double err = gradient_check(*problem, trials, h, config.seed);
  fmt::print("{}: {} random (w, i), h = {:g}, max rel err = {:.3e} (tolerance {:g})\n", problem->kind(), trials, h, err,
             tol);
  write_report(out_dir(flags) / "gradcheck.json",
               {{"problem", problem->kind()}, {"trials", trials}, {"h", h}, {"max_relative_error", err}, {"tolerance", tol},
                {"pass", err <= tol}});
  return err <= tol ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shuffling-type SGD experiments"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* run = app.add_subcommand("run", "execute seeded runs and write traces");
  add_common(run, flags, true);
  run->add_option("--repeat", flags.repeat, "independent runs (seeds seed, seed+1, ...)");
  run->add_flag("--full-trace", flags.full_trace, "also write every inner iterate");

  std::vector<double> grid;
  std::optional<std::size_t> probe;
  auto* grid_cmd = app.add_subcommand("grid", "constant step-size grid search");
  add_common(grid_cmd, flags, true);
  grid_cmd->add_option("--grid", grid, "step sizes to try (comma or space separated)")->delimiter(',');
  grid_cmd->add_option("--probe-epochs", probe, "epochs per grid point");

  std::vector<double> eps_hats;
  auto* scaling = app.add_subcommand("scaling", "epochs-to-target study and log-log fit");
  add_common(scaling, flags, true);
  scaling->add_option("--eps-hats", eps_hats, "target gaps (comma or space separated)")->delimiter(',');

  DiagnoseFlags dflags;
  auto* diag = app.add_subcommand("diagnose", "check assumptions and lemma bounds on a trace");
  add_common(diag, flags, false);
  diag->add_option("--trace", dflags.trace, "trace CSV")->required();
  diag->add_option("--iterates", dflags.iterates, "inner iterates CSV");
  diag->add_option("--L", dflags.L);
  diag->add_option("--mu", dflags.mu);
  diag->add_option("--M", dflags.M);
  diag->add_option("--N", dflags.N);
  diag->add_option("--F-star", dflags.f_star);
  diag->add_option("--samples", dflags.samples, "smoothness-estimate samples");

  PlanFlags pflags;
  auto* plan = app.add_subcommand("schedule-plan", "print the increasing step-size schedule");
  add_common(plan, flags, false);
  plan->add_option("--eps", pflags.eps);
  plan->add_option("--D", pflags.D);
  plan->add_option("--lambda", pflags.lambda);
  plan->add_option("--C1", pflags.C1);
  plan->add_option("--cap", pflags.cap, "largest admissible step");

  std::size_t trials = 50;
  double h = 1e-4;
  double tol = 1e-5;
  auto* grad = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_common(grad, flags, true);
  grad->add_option("--trials", trials);
  grad->add_option("--step", h, "finite-difference step");
  grad->add_option("--tol", tol, "largest acceptable relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*run) return cmd_run(flags);
    if (*grid_cmd) return cmd_grid(flags, grid, probe);
    if (*scaling) return cmd_scaling(flags, eps_hats);
    if (*diag) return cmd_diagnose(flags, dflags);
    if (*plan) return cmd_schedule_plan(flags, pflags);
    if (*grad) return cmd_gradcheck(flags, trials, h, tol);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const ContractError& e) {
    fmt::print(stderr, "invalid input: {}\n", e.what());
    return kConfigError;
  } catch (const DivergenceError& e) {
    fmt::print(stderr, "diverged: {}\n", e.what());
    return kDiverged;
  }
  return kOk;
}

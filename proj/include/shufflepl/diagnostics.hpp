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
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shufflepl/optimizer.hpp"
#include "shufflepl/problem.hpp"
#include "shufflepl/schedule.hpp"

namespace shufflepl {

// Slack used by every inequality check: lhs <= rhs + tol * (1 + |rhs|).
inline constexpr double kCheckTolerance = 1e-9;

inline bool within(double lhs, double rhs, double tol = kCheckTolerance) {
  return lhs <= rhs + tol * (1.0 + std::abs(rhs));
}

// Pass/fail ledger for one inequality family.
struct CheckTally {
  std::string name;
  bool available = true;
  std::string note;  // why the check is unavailable, or context
  std::size_t checked = 0;
  std::size_t passed = 0;
  std::size_t out_of_regime = 0;  // skipped because a step-size precondition failed
  std::size_t first_failure = 0;  // epoch (or sample) index, 0 if none
  double worst_margin = std::numeric_limits<double>::infinity();  // min of rhs - lhs

  bool all_pass() const { return available && passed == checked; }
  void record(std::size_t index, double lhs, double rhs, double tol);
};

// Largest secant ratio ||grad f(w;i) - grad f(w';i)|| / ||w - w'|| over
// sample_count pairs. Each chain starts at a random point within `radius` of the
// reference point (w_star, else the initial point) and walks the secant
// direction a few times, which tracks the top curvature direction. Every ratio
// is a valid lower bound on L. Pairs with w == w' are skipped.
double estimate_smoothness(const FiniteSumProblem& problem, std::size_t sample_count, double radius,
                           std::uint64_t seed);

struct AveragePlResult {
  bool conclusive = false;  // false when every point was skipped
  double mu_hat = std::numeric_limits<double>::infinity();
  std::optional<Vector> worst_point;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

// mu_hat = min over points of [(1/n) sum ||grad f_i||^2] / [2 (1/n) sum (f_i - f_i*)],
// where f_i* is the problem's component lower bound. Points whose denominator is
// below 1e-14 are skipped.
AveragePlResult check_average_pl(const FiniteSumProblem& problem, std::span<const Vector> points);

// Per-component ||grad f(w;i)||^2 >= 2 mu (f(w;i) - f_i*) - tol (1 + ||grad||^2).
CheckTally check_component_pl(const FiniteSumProblem& problem, std::span<const Vector> points,
                              double mu = 1.0, double tol = kCheckTolerance);

// (1/n) sum_i ||grad f(w_star; i)||^2.
double sigma_star_sq(const FiniteSumProblem& problem, const Vector& w_star);

struct StarSmoothReport {
  bool available = false;
  std::string note;
  std::size_t steps = 0;
  std::size_t satisfied = 0;
  double worst_residual = std::numeric_limits<double>::infinity();
  // Smallest M making every residual nonnegative for the given N / for N = 0.
  double min_M_given_N = 0;
  double min_M_zero_N = 0;
  std::size_t infeasible_for_M = 0;  // steps no M > 0 can satisfy (N = 0 fit)
  // Smallest N making every residual nonnegative at M = fit_M.
  double fit_M = 0;
  double min_N_at_fit_M = 0;
  std::size_t infeasible_for_N = 0;
};

// Residual of the trajectory-level star-smooth-convex condition at every inner step,
//   R = M <g - g*, w_{i-1} - w*> + N (1/n) sum_{i=1}^{n} ||w_i - w_0||^2 - ||g - g*||^2,
// with g = grad f(w_{i-1}; pi(i)), g* = grad f(w*; pi(i)). Needs inner iterates
// (a full trace); otherwise the report is marked unavailable.
StarSmoothReport check_star_smooth_convex(const FiniteSumProblem& problem,
                                          std::span<const EpochRecord> epochs, const Vector& w_star,
                                          double M, double N, double fit_M,
                                          double tol = kCheckTolerance);

struct WeightBoundResult {
  bool available = false;
  bool in_regime = false;  // eta <= 1/(2L)
  bool distance_ok = false;     // (1/n) sum_{j<n} ||w_j - w*||^2 bound
  bool deviation_ok = false;    // (1/n) sum_{j<n} ||w_j - w_0||^2 bound
  bool deviation_endpoint_ok = false;  // (1/n) sum_{j<=n} ||w_j - w_0||^2 bound
  double distance_margin = 0, deviation_margin = 0, deviation_endpoint_margin = 0;
};

WeightBoundResult check_weight_bounds(const EpochRecord& record, std::size_t n, double L,
                                      double sigma_star_sq, double tol = kCheckTolerance);

struct DescentResult {
  bool available = false;
  bool in_regime = false;  // eta <= min{n/(2M), 1/(2L)}
  bool gradient_form_ok = false;   // recursion with B1, B2 and the inner gradient sum
  bool objective_form_ok = false;  // recursion with C1, C2, C3 and F(w~_{t-1}) - F*
  double gradient_form_margin = 0;
  double objective_form_margin = 0;
};

DescentResult check_descent_recursion(const EpochRecord& record, std::size_t n, double f_star,
                                      const ConstantsLedger& ledger, double sigma_star_sq,
                                      double tol = kCheckTolerance);

// Max relative error between analytic and central-difference gradients over
// `trials` random (w, i).
double gradient_check(const FiniteSumProblem& problem, std::size_t trials, double h, std::uint64_t seed);

struct DiagnoseOptions {
  std::optional<double> L, mu, M, N, gamma;
  std::optional<double> f_star;
  std::size_t smoothness_samples = 1000;
  double radius = 1.0;
  std::size_t pl_points = 20;
  std::uint64_t seed = 0;
  double tol = kCheckTolerance;
};

struct DiagnosticsReport {
  std::string problem_kind;
  bool smooth = true;
  double L_hat = 0;
  std::optional<double> L_used;
  std::string L_source;
  std::optional<double> mu_hat;
  std::optional<double> M_hat;  // minimal M with N = 0
  std::optional<double> N_hat;  // minimal N at M = 2 L_hat
  std::optional<double> sigma_star_sq_hat;
  std::optional<double> f_star;
  std::string f_star_source;
  std::optional<ConstantsLedger> constants;
  std::size_t epochs_checked = 0;
  std::vector<CheckTally> checks;
  std::vector<std::string> warnings;

  bool all_pass() const;
  const CheckTally* find(const std::string& name) const;
};

// Check names used in the report.
namespace checks {
inline constexpr const char* kDistanceBound = "inner_distance_bound";
inline constexpr const char* kDeviationBound = "inner_deviation_bound";
inline constexpr const char* kDeviationEndpointBound = "inner_deviation_bound_with_endpoint";
inline constexpr const char* kGradientRecursion = "distance_recursion_gradient_form";
inline constexpr const char* kObjectiveRecursion = "distance_recursion_objective_form";
inline constexpr const char* kComponentPl = "component_pl_final_bias";
inline constexpr const char* kStarSmooth = "star_smooth_convex_residual";
}  // namespace checks

DiagnosticsReport diagnose(const FiniteSumProblem& problem, std::span<const EpochRecord> epochs,
                           const DiagnoseOptions& options = {});

nlohmann::json to_json(const CheckTally& tally);
nlohmann::json to_json(const DiagnosticsReport& report);

}  // namespace shufflepl

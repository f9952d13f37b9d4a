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
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "shufflepl/problem.hpp"
#include "shufflepl/schedule.hpp"
#include "shufflepl/shuffling.hpp"

namespace shufflepl {

inline constexpr double kNotAvailable = std::numeric_limits<double>::quiet_NaN();

// One outer iteration t of the shuffling method: w_0 = w~_{t-1}, n inner steps
// w_i = w_{i-1} - (eta_t / n) grad f(w_{i-1}; pi(i)), w~_t = w_n.
//
// Quantities that need w_star (or F*) are NaN when the problem does not know it.
struct EpochRecord {
  std::size_t epoch = 0;
  double eta = 0;
  double objective = 0;     // F(w_0)
  double gap = kNotAvailable;  // F(w_0) - F*
  double avg_sq_grad = 0;   // (1/n) sum_i ||grad f(w_0; i)||^2
  double inner_sq_grad = 0; // (1/n) sum_i ||grad f(w_{i-1}; pi(i))||^2
  double dev_sum_lt_n = 0;  // (1/n) sum_{j=0}^{n-1} ||w_j - w_0||^2
  double dev_sum_le_n = 0;  // (1/n) sum_{j=0}^{n}   ||w_j - w_0||^2
  double dist_sum_lt_n = kNotAvailable;  // (1/n) sum_{j=0}^{n-1} ||w_j - w*||^2
  double dist_sq_start = kNotAvailable;  // ||w_0 - w*||^2
  double dist_sq_end = kNotAvailable;    // ||w_n - w*||^2
  bool cap_exceeded = false;  // eta above min{n/(2M), 1/(2L)} for the known L, M
  Permutation permutation;

  // Filled only when requested through RunOptions.
  std::optional<Vector> start_point;
  std::optional<Vector> end_point;
  std::vector<Vector> inner_iterates;  // w_0 .. w_n (full trace)
};

struct RunOptions {
  bool full_trace = false;   // keep every inner iterate
  bool keep_points = false;  // keep w_0 and w_n per epoch
  bool retain_records = true;
  // Overrides for the cap check; defaults come from the problem's ground truth.
  std::optional<double> smoothness;
  std::optional<double> star_constant;
  // Called after each epoch; returning false stops the run early.
  std::function<bool(const EpochRecord&)> observer;
};

struct RunTrace {
  std::string problem_id;
  ShufflingScheme scheme;
  std::string schedule_id;
  std::vector<EpochRecord> epochs;
  std::size_t epochs_run = 0;
  Vector final_point;
};

// Iterates with ||w|| > this are treated as divergence.
inline constexpr double kDivergenceNorm = 1e12;

struct EpochContext {
  const Vector* w_star = nullptr;
  std::optional<double> f_star;
  double cap = std::numeric_limits<double>::infinity();
  bool full_trace = false;
  bool keep_points = false;
};

// Executes one epoch from w0 and returns w_n. Throws DivergenceError naming
// the epoch and inner step when an iterate becomes non-finite or too large.
Vector run_epoch(const FiniteSumProblem& problem, const Vector& w0, double eta, const Permutation& perm,
                 std::size_t epoch, const EpochContext& ctx, EpochRecord& record);

// Convenience overload using the problem's ground truth for w_star and F*.
std::pair<Vector, EpochRecord> run_epoch(const FiniteSumProblem& problem, const Vector& w0, double eta,
                                         const Permutation& perm, std::size_t epoch = 1);

// Runs epochs 1..T. Deterministic in (problem, w0, schedule, scheme).
RunTrace run(const FiniteSumProblem& problem, const Vector& w0, const StepSchedule& schedule,
             const ShufflingScheme& scheme, std::size_t epochs, const RunOptions& options = {});

// Cap min{n/(2M), 1/(2L)} from whatever of L and M is known; +inf if neither.
double known_step_cap(const FiniteSumProblem& problem, std::optional<double> smoothness,
                      std::optional<double> star_constant);

}  // namespace shufflepl

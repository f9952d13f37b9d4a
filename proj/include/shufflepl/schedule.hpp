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
#include <limits>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

namespace shufflepl {

// Which coefficient to use for the gamma term of C1. kDerived is 4 gamma L^4 / (3M),
// the value the recursion actually produces (and the one the gamma = 1/L^2
// specialization 4L^2/(3M) agrees with). kPrinted is the 4 gamma L^4 / (6M)
// variant, kept for auditing.
enum class C1Variant { kDerived, kPrinted };

// Constants of the distance recursions:
//   B1 = 8L^2/3 + 14NL^2/M
//   B2 = 2/M + 1 + 5/(6L^2) + 8N/(3ML^2)
//   C1 = B1 + 4 gamma L^4/(3M)
//   C2 = B2 + 5 gamma/(12M)
//   C3 = gamma/(gamma+1) * mu/M
// The *_inv_l2 fields repeat C1..C3 with gamma = 1/L^2.
struct ConstantsLedger {
  double L = 0, mu = 0, M = 0, N = 0, gamma = 0;
  double B1 = 0, B2 = 0;
  double C1 = 0, C2 = 0, C3 = 0;
  double C1_inv_l2 = 0, C2_inv_l2 = 0, C3_inv_l2 = 0;
  C1Variant variant = C1Variant::kDerived;
};

// L, mu, M, gamma > 0 and N >= 0; otherwise ContractError.
ConstantsLedger compute_constants(double L, double mu, double M, double N, double gamma,
                                  C1Variant variant = C1Variant::kDerived);

// min{n/(2M), 1/(2L)}.
double step_cap(std::size_t n, double L, double M);

// Exponentially increasing schedule eta_t = K^t eta0 with
//   K    = 1 + C1 D^3 eps^{3/2}
//   eta0 = D sqrt(eps) / (K exp(lambda C1 D^3))
//   T    = ceil(requested_lambda / eps^{3/2})
// lambda is the effective value T eps^{3/2} (>= requested_lambda), so that
// T = lambda / eps^{3/2} holds exactly and K^T eta0 <= D sqrt(eps)/K.
struct SchedulePlan {
  double epsilon = 0;
  double D = 0;
  double requested_lambda = 0;
  double lambda = 0;
  double C1 = 0;
  double K = 1;
  // C1 D^3 eps^{3/2} before rounding into K; K - 1 loses digits when it is tiny.
  double growth = 0;
  double eta0 = 0;
  std::size_t T = 0;
  double cap = std::numeric_limits<double>::infinity();

  // D sqrt(eps) / K, the bound every eta_t must respect.
  double eta_bound() const;
};

// Throws ContractError on nonpositive inputs and when D sqrt(eps)/K > cap; the
// message reports the largest admissible D.
SchedulePlan plan_schedule(double epsilon, double D, double lambda, double C1,
                           double cap = std::numeric_limits<double>::infinity());

// Largest D with D sqrt(eps) / (1 + C1 D^3 eps^{3/2}) <= cap on the increasing
// branch; +inf if every D is admissible.
double max_admissible_D(double epsilon, double C1, double cap);

// K^t eta0 evaluated as exp(t log1p(growth)), or exp(t ln K) when K was edited
// away from 1 + growth; t = 0 returns eta0. ContractError if t > T.
double eta_at(const SchedulePlan& plan, std::size_t t);

struct RecursionReport {
  bool all_pass = true;
  std::size_t checked = 0;
  std::size_t first_failure = 0;  // 0 when none
  double worst_margin = std::numeric_limits<double>::infinity();  // min (rhs - lhs) / rhs
};

// Checks 1/eta_t + C1 eta_t^2 <= 1/eta_{t-1} for t = 1..T.
RecursionReport verify_eta_recursion(const SchedulePlan& plan, double rel_tol = 1e-12);

struct CorollaryPlan {
  ConstantsLedger constants;  // gamma = 1/L^2
  double G = 0;
  double lambda = 0;   // 1 / (C1 D^3)
  double epsilon = 0;  // eps_hat / G
  std::size_t T = 0;   // ceil(lambda G^{3/2} / eps_hat^{3/2})
};

// G = 2 C1 D^2 e dist0_sq / C3 + C2 P / C3 with the gamma = 1/L^2 constants.
// ContractError if eps_hat > G.
CorollaryPlan corollary_epochs(double L, double mu, double M, double N, double P, double D,
                               double dist0_sq, double eps_hat,
                               C1Variant variant = C1Variant::kDerived);

struct ConstantStep {
  double eta = 0;
};

using StepSchedule = std::variant<ConstantStep, SchedulePlan>;

double step_at(const StepSchedule& schedule, std::size_t t);
std::string schedule_id(const StepSchedule& schedule);

nlohmann::json to_json(const ConstantsLedger& ledger);
nlohmann::json to_json(const SchedulePlan& plan);
nlohmann::json to_json(const StepSchedule& schedule);
// Reads a stored plan verbatim and checks its invariants (ContractError on mismatch).
SchedulePlan plan_from_json(const nlohmann::json& doc);
StepSchedule schedule_from_json(const nlohmann::json& doc);

namespace detail {
// Integer epoch count for a real target r: round(r) when r is within 1e-9 of
// an integer (absorbs representation error in e.g. 1 / 0.04^{3/2}), else ceil(r).
std::size_t ceil_epochs(double r);
}  // namespace detail

}  // namespace shufflepl

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

#include "shufflepl/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "shufflepl/errors.hpp"

namespace shufflepl {

namespace {

bool positive(double x) { return std::isfinite(x) && x > 0.0; }

double pow_three_halves(double x) { return x * std::sqrt(x); }

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace

ConstantsLedger compute_constants(double L, double mu, double M, double N, double gamma,
                                  C1Variant variant) {
  detail::require(positive(L) && positive(mu) && positive(M) && positive(gamma),
                  fmt::format("constants need L, mu, M, gamma > 0 (got L={}, mu={}, M={}, gamma={})",
                              L, mu, M, gamma));
  detail::require(std::isfinite(N) && N >= 0.0, fmt::format("N must be >= 0 (got {})", N));

  ConstantsLedger c;
  c.L = L;
  c.mu = mu;
  c.M = M;
  c.N = N;
  c.gamma = gamma;
  c.variant = variant;

  const double L2 = L * L;
  const double L4 = L2 * L2;
  c.B1 = 8.0 * L2 / 3.0 + 14.0 * N * L2 / M;
  c.B2 = 2.0 / M + 1.0 + 5.0 / (6.0 * L2) + 8.0 * N / (3.0 * M * L2);

  const double gamma_denom = variant == C1Variant::kDerived ? 3.0 : 6.0;
  auto c1 = [&](double g) { return c.B1 + 4.0 * g * L4 / (gamma_denom * M); };
  auto c2 = [&](double g) { return c.B2 + 5.0 * g / (12.0 * M); };
  auto c3 = [&](double g) { return g / (g + 1.0) * mu / M; };

  c.C1 = c1(gamma);
  c.C2 = c2(gamma);
  c.C3 = c3(gamma);
  c.C1_inv_l2 = c1(1.0 / L2);
  c.C2_inv_l2 = c2(1.0 / L2);
  c.C3_inv_l2 = c3(1.0 / L2);
  return c;
}

double step_cap(std::size_t n, double L, double M) {
  detail::require(n >= 1 && positive(L) && positive(M), "step cap needs n >= 1 and L, M > 0");
  return std::min(static_cast<double>(n) / (2.0 * M), 1.0 / (2.0 * L));
}

double SchedulePlan::eta_bound() const { return D * std::sqrt(epsilon) / K; }

std::size_t detail::ceil_epochs(double r) {
  const double nearest = std::round(r);
  double t = std::abs(r - nearest) <= 1e-9 * std::max(1.0, r) ? nearest : std::ceil(r);
  return static_cast<std::size_t>(std::max(1.0, t));
}

double max_admissible_D(double epsilon, double C1, double cap) {
  detail::require(positive(epsilon) && positive(C1) && cap > 0.0, "need eps, C1, cap > 0");
  const double root_eps = std::sqrt(epsilon);
  const double c = C1 * pow_three_halves(epsilon);
  auto bound = [&](double d) { return d * root_eps / (1.0 + c * d * d * d); };
  // bound(D) increases up to D_peak = (1 / (2c))^{1/3} and decreases after it.
  const double peak = std::cbrt(1.0 / (2.0 * c));
  if (bound(peak) <= cap) return std::numeric_limits<double>::infinity();
  double lo = 0.0;
  double hi = peak;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (bound(mid) <= cap ? lo : hi) = mid;
  }
  return lo;
}

SchedulePlan plan_schedule(double epsilon, double D, double lambda, double C1, double cap) {
  detail::require(positive(epsilon) && positive(D) && positive(lambda) && positive(C1),
                  fmt::format("schedule needs eps, D, lambda, C1 > 0 (got {}, {}, {}, {})", epsilon,
                              D, lambda, C1));
  detail::require(cap > 0.0, "step cap must be positive");

  SchedulePlan plan;
  plan.epsilon = epsilon;
  plan.D = D;
  plan.requested_lambda = lambda;
  plan.C1 = C1;
  plan.cap = cap;

  const double eps32 = pow_three_halves(epsilon);
  const double d3 = D * D * D;
  plan.T = detail::ceil_epochs(lambda / eps32);
  plan.lambda = static_cast<double>(plan.T) * eps32;
  plan.growth = C1 * d3 * eps32;
  plan.K = 1.0 + plan.growth;
  plan.eta0 = D * std::sqrt(epsilon) / (plan.K * std::exp(plan.lambda * C1 * d3));

  if (plan.eta_bound() > cap) {
    throw ContractError(fmt::format(
        "step bound D*sqrt(eps)/K = {:.6g} exceeds the cap {:.6g}; largest admissible D is {:.6g}",
        plan.eta_bound(), cap, max_admissible_D(epsilon, C1, cap)));
  }
  return plan;
}

double eta_at(const SchedulePlan& plan, std::size_t t) {
  if (t > plan.T) {
    throw ContractError(fmt::format("epoch {} outside planned range [0, {}]", t, plan.T));
  }
  if (t == 0) return plan.eta0;
  const double log_k = plan.K == 1.0 + plan.growth ? std::log1p(plan.growth) : std::log(plan.K);
  return plan.eta0 * std::exp(static_cast<double>(t) * log_k);
}

RecursionReport verify_eta_recursion(const SchedulePlan& plan, double rel_tol) {
  RecursionReport report;
  double prev = eta_at(plan, 0);
  for (std::size_t t = 1; t <= plan.T; ++t) {
    const double eta = eta_at(plan, t);
    const double lhs = 1.0 / eta + plan.C1 * eta * eta;
    const double rhs = 1.0 / prev;
    const double margin = (rhs - lhs) / rhs;
    ++report.checked;
    report.worst_margin = std::min(report.worst_margin, margin);
    if (lhs > rhs * (1.0 + rel_tol) && report.all_pass) {
      report.all_pass = false;
      report.first_failure = t;
    }
    prev = eta;
  }
  return report;
}

CorollaryPlan corollary_epochs(double L, double mu, double M, double N, double P, double D,
                               double dist0_sq, double eps_hat, C1Variant variant) {
  detail::require(std::isfinite(P) && P >= 0.0, "P must be >= 0");
  detail::require(positive(D), "D must be > 0");
  detail::require(std::isfinite(dist0_sq) && dist0_sq >= 0.0, "initial distance must be >= 0");
  detail::require(positive(eps_hat), "target accuracy must be > 0");

  CorollaryPlan out;
  out.constants = compute_constants(L, mu, M, N, 1.0 / (L * L), variant);
  const double C1 = out.constants.C1;
  const double C2 = out.constants.C2;
  const double C3 = out.constants.C3;
  out.G = 2.0 * C1 * D * D * std::numbers::e * dist0_sq / C3 + C2 * P / C3;
  if (eps_hat > out.G) {
    throw ContractError(
        fmt::format("target accuracy {:.6g} exceeds G = {:.6g}; choose eps_hat <= G", eps_hat, out.G));
  }
  out.lambda = 1.0 / (C1 * D * D * D);
  out.epsilon = eps_hat / out.G;
  out.T = detail::ceil_epochs(out.lambda * pow_three_halves(out.G) / pow_three_halves(eps_hat));
  return out;
}

double step_at(const StepSchedule& schedule, std::size_t t) {
  if (const auto* c = std::get_if<ConstantStep>(&schedule)) return c->eta;
  return eta_at(std::get<SchedulePlan>(schedule), t);
}

std::string schedule_id(const StepSchedule& schedule) {
  if (const auto* c = std::get_if<ConstantStep>(&schedule)) return fmt::format("constant(eta={})", c->eta);
  const auto& p = std::get<SchedulePlan>(schedule);
  return fmt::format("theorem(eps={},D={},lambda={},C1={})", p.epsilon, p.D, p.lambda, p.C1);
}

nlohmann::json to_json(const ConstantsLedger& c) {
  return {{"L", c.L},
          {"mu", c.mu},
          {"M", c.M},
          {"N", c.N},
          {"gamma", c.gamma},
          {"B1", c.B1},
          {"B2", c.B2},
          {"C1", c.C1},
          {"C2", c.C2},
          {"C3", c.C3},
          {"gamma_inv_L2", {{"gamma", 1.0 / (c.L * c.L)}, {"C1", c.C1_inv_l2}, {"C2", c.C2_inv_l2}, {"C3", c.C3_inv_l2}}},
          {"C1_variant", c.variant == C1Variant::kDerived ? "derived" : "printed"}};
}

nlohmann::json to_json(const SchedulePlan& p) {
  nlohmann::json doc = {{"kind", "theorem"},
                        {"epsilon", p.epsilon},
                        {"D", p.D},
                        {"requested_lambda", p.requested_lambda},
                        {"lambda", p.lambda},
                        {"C1", p.C1},
                        {"K", p.K},
                        {"growth", p.growth},
                        {"eta0", p.eta0},
                        {"T", p.T}};
  if (std::isfinite(p.cap)) {
    doc["cap"] = p.cap;
  } else {
    doc["cap"] = nullptr;
  }
  return doc;
}

nlohmann::json to_json(const StepSchedule& schedule) {
  if (const auto* c = std::get_if<ConstantStep>(&schedule)) return {{"kind", "constant"}, {"eta", c->eta}};
  return to_json(std::get<SchedulePlan>(schedule));
}

SchedulePlan plan_from_json(const nlohmann::json& doc) {
  SchedulePlan p;
  try {
    p.epsilon = doc.at("epsilon").get<double>();
    p.D = doc.at("D").get<double>();
    p.lambda = doc.at("lambda").get<double>();
    p.requested_lambda = doc.value("requested_lambda", p.lambda);
    p.C1 = doc.at("C1").get<double>();
    p.K = doc.at("K").get<double>();
    p.growth = doc.value("growth", p.K - 1.0);
    p.eta0 = doc.at("eta0").get<double>();
    p.T = doc.at("T").get<std::size_t>();
    if (doc.contains("cap") && !doc.at("cap").is_null()) p.cap = doc.at("cap").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(fmt::format("malformed schedule plan: {}", e.what()));
  }
  const double eps32 = pow_three_halves(p.epsilon);
  const double d3 = p.D * p.D * p.D;
  detail::require(close_rel(p.K, 1.0 + p.C1 * d3 * eps32, 1e-12), "stored K does not match 1 + C1 D^3 eps^{3/2}");
  detail::require(close_rel(p.K, 1.0 + p.growth, 1e-12), "stored growth does not match K - 1");
  detail::require(
      close_rel(p.eta0, p.D * std::sqrt(p.epsilon) / (p.K * std::exp(p.lambda * p.C1 * d3)), 1e-12),
      "stored eta0 does not match D sqrt(eps) / (K exp(lambda C1 D^3))");
  detail::require(p.T == detail::ceil_epochs(p.lambda / eps32), "stored T does not match lambda / eps^{3/2}");
  return p;
}

StepSchedule schedule_from_json(const nlohmann::json& doc) {
  const auto kind = doc.value("kind", std::string("constant"));
  if (kind == "constant") {
    const double eta = doc.at("eta").get<double>();
    detail::require(positive(eta), "constant step must be positive");
    return ConstantStep{eta};
  }
  if (kind == "theorem") return plan_from_json(doc);
  throw ContractError(fmt::format("unknown schedule kind '{}'", kind));
}

}  // namespace shufflepl

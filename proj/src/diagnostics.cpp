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

#include "shufflepl/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "shufflepl/errors.hpp"
#include "shufflepl/random.hpp"

namespace shufflepl {

namespace {

constexpr std::size_t kSecantChain = 8;
constexpr double kPlSkipThreshold = 1e-14;

Vector reference_point(const FiniteSumProblem& problem) {
  const auto& truth = problem.ground_truth();
  return truth.w_star ? *truth.w_star : problem.initial_point();
}

// Reference point plus an isotropic Gaussian of expected norm ~radius.
Vector random_point(const FiniteSumProblem& problem, const Vector& center, Engine& eng, double radius) {
  const double scale = radius / std::sqrt(static_cast<double>(problem.dimension()));
  Vector w = center;
  for (Eigen::Index k = 0; k < w.size(); ++k) w[k] += scale * standard_normal(eng);
  return w;
}

Vector random_unit(Eigen::Index d, Engine& eng) {
  Vector v(d);
  for (Eigen::Index k = 0; k < d; ++k) v[k] = standard_normal(eng);
  return v / v.norm();
}

}  // namespace

void CheckTally::record(std::size_t index, double lhs, double rhs, double tol) {
  ++checked;
  worst_margin = std::min(worst_margin, rhs - lhs);
  if (within(lhs, rhs, tol)) {
    ++passed;
  } else if (first_failure == 0) {
    first_failure = index;
  }
}

double estimate_smoothness(const FiniteSumProblem& problem, std::size_t sample_count, double radius,
                           std::uint64_t seed) {
  detail::require(sample_count >= 2, "smoothness estimate needs at least two samples");
  detail::require(radius > 0.0, "sampling radius must be positive");
  Engine eng = make_engine(seed, 0x5A);
  const Vector center = reference_point(problem);
  const auto d = static_cast<Eigen::Index>(problem.dimension());
  const double step = 0.01 * radius;

  double best = 0.0;
  std::size_t used = 0;
  Vector g0;
  Vector g1;
  for (std::size_t chain = 0; used < sample_count; ++chain) {
    const std::size_t i = chain % problem.size();
    const Vector w = random_point(problem, center, eng, radius);
    problem.gradient(w, i, g0);
    Vector dir = random_unit(d, eng);
    for (std::size_t k = 0; k < kSecantChain && used < sample_count; ++k) {
      const Vector w1 = w + step * dir;
      ++used;
      const double dist = (w1 - w).norm();
      if (dist == 0.0) break;
      problem.gradient(w1, i, g1);
      const Vector diff = g1 - g0;
      const double dn = diff.norm();
      best = std::max(best, dn / dist);
      if (dn == 0.0 || !std::isfinite(dn)) break;
      dir = diff / dn;
    }
  }
  return best;
}

AveragePlResult check_average_pl(const FiniteSumProblem& problem, std::span<const Vector> points) {
  AveragePlResult out;
  const std::size_t n = problem.size();
  Vector g;
  for (const Vector& w : points) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      problem.gradient(w, i, g);
      num += g.squaredNorm();
      den += problem.value(w, i) - problem.component_lower_bound(i);
    }
    num /= static_cast<double>(n);
    den /= static_cast<double>(n);
    if (den < kPlSkipThreshold) {
      ++out.skipped;
      continue;
    }
    ++out.evaluated;
    const double ratio = num / (2.0 * den);
    if (ratio < out.mu_hat) {
      out.mu_hat = ratio;
      out.worst_point = w;
    }
  }
  out.conclusive = out.evaluated > 0;
  return out;
}

CheckTally check_component_pl(const FiniteSumProblem& problem, std::span<const Vector> points, double mu,
                              double tol) {
  CheckTally tally;
  tally.name = checks::kComponentPl;
  Vector g;
  std::size_t index = 0;
  for (const Vector& w : points) {
    for (std::size_t i = 0; i < problem.size(); ++i) {
      ++index;
      problem.gradient(w, i, g);
      const double grad_sq = g.squaredNorm();
      const double rhs = 2.0 * mu * (problem.value(w, i) - problem.component_lower_bound(i));
      // Tolerance scales with the gradient side here: ||g||^2 >= rhs - tol (1 + ||g||^2).
      ++tally.checked;
      tally.worst_margin = std::min(tally.worst_margin, grad_sq - rhs);
      if (grad_sq >= rhs - tol * (1.0 + grad_sq)) {
        ++tally.passed;
      } else if (tally.first_failure == 0) {
        tally.first_failure = index;
      }
    }
  }
  return tally;
}

double sigma_star_sq(const FiniteSumProblem& problem, const Vector& w_star) {
  detail::require(static_cast<std::size_t>(w_star.size()) == problem.dimension(), "w_star dimension mismatch");
  Vector g;
  double sum = 0.0;
  for (std::size_t i = 0; i < problem.size(); ++i) {
    problem.gradient(w_star, i, g);
    sum += g.squaredNorm();
  }
  return sum / static_cast<double>(problem.size());
}

StarSmoothReport check_star_smooth_convex(const FiniteSumProblem& problem,
                                          std::span<const EpochRecord> epochs, const Vector& w_star,
                                          double M, double N, double fit_M, double tol) {
  StarSmoothReport out;
  out.fit_M = fit_M;
  const std::size_t n = problem.size();
  for (const auto& rec : epochs) {
    if (rec.inner_iterates.size() != n + 1 || rec.permutation.size() != n) {
      out.note = "inner iterates unavailable; rerun with --full-trace";
      return out;
    }
  }
  if (epochs.empty()) {
    out.note = "no epochs to check";
    return out;
  }
  out.available = true;

  // Gradients at w* are reused across epochs.
  std::vector<Vector> grad_star(n);
  for (std::size_t i = 0; i < n; ++i) problem.gradient(w_star, i, grad_star[i]);

  double max_m_n = 0.0;
  double max_m_0 = 0.0;
  double max_n = 0.0;
  Vector g;
  for (const auto& rec : epochs) {
    const Vector& w0 = rec.inner_iterates.front();
    double dev = 0.0;
    for (std::size_t i = 1; i <= n; ++i) dev += (rec.inner_iterates[i] - w0).squaredNorm();
    dev /= static_cast<double>(n);

    for (std::size_t k = 0; k < n; ++k) {
      const Vector& w_prev = rec.inner_iterates[k];
      const std::size_t comp = rec.permutation[k];
      problem.gradient(w_prev, comp, g);
      const Vector gd = g - grad_star[comp];
      const double ip = gd.dot(w_prev - w_star);
      const double g2 = gd.squaredNorm();

      const double rhs = M * ip + N * dev;
      const double residual = rhs - g2;
      ++out.steps;
      out.worst_residual = std::min(out.worst_residual, residual);
      if (within(g2, rhs, tol)) ++out.satisfied;

      // Minimal M for fixed N, and for N = 0.
      auto fit_m = [&](double n_term, double& acc) {
        const double need = g2 - n_term;
        if (need <= 0.0) return true;
        if (ip > 0.0) {
          acc = std::max(acc, need / ip);
          return true;
        }
        return false;
      };
      fit_m(N * dev, max_m_n);
      if (!fit_m(0.0, max_m_0)) ++out.infeasible_for_M;

      // Minimal N at M = fit_M.
      const double need_n = g2 - fit_M * ip;
      if (need_n > 0.0) {
        if (dev > 0.0) {
          max_n = std::max(max_n, need_n / dev);
        } else {
          ++out.infeasible_for_N;
        }
      }
    }
  }
  out.min_M_given_N = max_m_n;
  out.min_M_zero_N = max_m_0;
  out.min_N_at_fit_M = max_n;
  return out;
}

WeightBoundResult check_weight_bounds(const EpochRecord& rec, std::size_t n, double L, double sigma_sq,
                                      double tol) {
  WeightBoundResult out;
  if (std::isnan(rec.dist_sq_start) || std::isnan(rec.dist_sum_lt_n)) return out;
  out.available = true;
  out.in_regime = rec.eta <= 1.0 / (2.0 * L);
  if (!out.in_regime) return out;

  const double eta = rec.eta;
  const double eta2 = eta * eta;
  const double eta4 = eta2 * eta2;
  const double L2 = L * L;
  const double d0 = rec.dist_sq_start;
  const double inv_n = 1.0 / static_cast<double>(n);

  const double distance_rhs = 4.0 * d0 + 8.0 * sigma_sq * eta2;
  const double deviation_rhs = eta2 * (8.0 * L2 / 3.0) * d0 + (16.0 * L2 * sigma_sq / 3.0) * eta4 + 2.0 * sigma_sq * eta2;
  const double endpoint_rhs = deviation_rhs + 4.0 * L2 * eta2 * inv_n * d0 + 8.0 * L2 * eta4 * inv_n * sigma_sq;

  out.distance_ok = within(rec.dist_sum_lt_n, distance_rhs, tol);
  out.deviation_ok = within(rec.dev_sum_lt_n, deviation_rhs, tol);
  out.deviation_endpoint_ok = within(rec.dev_sum_le_n, endpoint_rhs, tol);
  out.distance_margin = distance_rhs - rec.dist_sum_lt_n;
  out.deviation_margin = deviation_rhs - rec.dev_sum_lt_n;
  out.deviation_endpoint_margin = endpoint_rhs - rec.dev_sum_le_n;
  return out;
}

DescentResult check_descent_recursion(const EpochRecord& rec, std::size_t n, double f_star,
                                      const ConstantsLedger& c, double sigma_sq, double tol) {
  DescentResult out;
  if (std::isnan(rec.dist_sq_start) || std::isnan(rec.dist_sq_end)) return out;
  out.available = true;
  out.in_regime = rec.eta <= step_cap(n, c.L, c.M);
  if (!out.in_regime) return out;

  const double eta = rec.eta;
  const double eta3 = eta * eta * eta;
  const double lhs = rec.dist_sq_end;
  const double gradient_rhs =
      (1.0 + c.B1 * eta3) * rec.dist_sq_start - eta / (2.0 * c.M) * rec.inner_sq_grad + c.B2 * eta * sigma_sq;
  const double objective_rhs = (1.0 + c.C1 * eta3) * rec.dist_sq_start + c.C2 * eta * sigma_sq -
                               c.C3 * eta * (rec.objective - f_star);
  out.gradient_form_ok = within(lhs, gradient_rhs, tol);
  out.objective_form_ok = within(lhs, objective_rhs, tol);
  out.gradient_form_margin = gradient_rhs - lhs;
  out.objective_form_margin = objective_rhs - lhs;
  return out;
}

double gradient_check(const FiniteSumProblem& problem, std::size_t trials, double h, std::uint64_t seed) {
  detail::require(h > 0.0, "finite-difference step must be positive");
  Engine eng = make_engine(seed, 0x6C);
  const Vector center = reference_point(problem);
  const double radius = std::sqrt(static_cast<double>(problem.dimension()));
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Vector w = random_point(problem, center, eng, radius);
    const auto i = static_cast<std::size_t>(uniform_below(eng, problem.size()));
    worst = std::max(worst, relative_error(grad_component(problem, w, i), finite_diff_grad(problem, w, i, h)));
  }
  return worst;
}

bool DiagnosticsReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckTally& c) { return !c.available || c.passed == c.checked; });
}

const CheckTally* DiagnosticsReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

CheckTally named(const char* name) {
  CheckTally t;
  t.name = name;
  return t;
}

CheckTally unavailable(const char* name, std::string note) {
  CheckTally t = named(name);
  t.available = false;
  t.note = std::move(note);
  return t;
}

}  // namespace

DiagnosticsReport diagnose(const FiniteSumProblem& problem, std::span<const EpochRecord> epochs,
                           const DiagnoseOptions& opt) {
  DiagnosticsReport rep;
  const auto& truth = problem.ground_truth();
  const std::size_t n = problem.size();
  rep.problem_kind = problem.kind();
  rep.smooth = problem.is_smooth();
  rep.epochs_checked = epochs.size();
  if (!rep.smooth) {
    rep.warnings.push_back("activation is not differentiable everywhere; L-smoothness does not hold");
  }

  rep.L_hat = estimate_smoothness(problem, opt.smoothness_samples, opt.radius, opt.seed);
  if (opt.L) {
    rep.L_used = opt.L;
    rep.L_source = "override";
  } else if (truth.smoothness) {
    rep.L_used = truth.smoothness;
    rep.L_source = "analytic";
  } else if (rep.smooth && rep.L_hat > 0.0) {
    rep.L_used = rep.L_hat;
    rep.L_source = "estimate (lower bound)";
  } else {
    rep.L_source = "unavailable";
  }

  // Sample points for the PL checks.
  Engine eng = make_engine(opt.seed, 0x71);
  const Vector center = reference_point(problem);
  std::vector<Vector> points;
  for (std::size_t k = 0; k < opt.pl_points; ++k) points.push_back(random_point(problem, center, eng, opt.radius));
  for (const auto& rec : epochs)
    if (rec.start_point) points.push_back(*rec.start_point);
  const auto pl = check_average_pl(problem, points);
  if (pl.conclusive) {
    rep.mu_hat = pl.mu_hat;
  } else {
    rep.warnings.push_back("average PL inconclusive: every sampled point had zero excess loss");
  }

  if (problem.kind() == "bias_mlp") {
    rep.checks.push_back(check_component_pl(problem, points, 1.0, opt.tol));
  } else {
    rep.checks.push_back(unavailable(checks::kComponentPl, "only defined for final-bias networks"));
  }

  std::optional<Vector> w_star = truth.w_star;
  if (truth.sigma_star_sq) {
    rep.sigma_star_sq_hat = truth.sigma_star_sq;
  } else if (w_star) {
    rep.sigma_star_sq_hat = sigma_star_sq(problem, *w_star);
  }

  if (opt.f_star) {
    rep.f_star = opt.f_star;
    rep.f_star_source = "override";
  } else if (truth.f_star) {
    rep.f_star = truth.f_star;
    rep.f_star_source = "analytic";
  } else if (!epochs.empty()) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& rec : epochs) best = std::min(best, rec.objective);
    rep.f_star = best;
    rep.f_star_source = "best observed (upper bound)";
  }

  // Star-smooth-convex residuals (needs inner iterates).
  const double M_assumed = opt.M ? *opt.M : truth.star_constant.value_or(2.0 * rep.L_hat);
  const double N_assumed = opt.N.value_or(0.0);
  if (!w_star) {
    rep.checks.push_back(unavailable(checks::kStarSmooth, "w_star unknown"));
  } else {
    const auto star = check_star_smooth_convex(problem, epochs, *w_star, M_assumed, N_assumed, 2.0 * rep.L_hat, opt.tol);
    if (!star.available) {
      rep.checks.push_back(unavailable(checks::kStarSmooth, star.note));
    } else {
      CheckTally t;
      t.name = checks::kStarSmooth;
      t.checked = star.steps;
      t.passed = star.satisfied;
      t.worst_margin = star.worst_residual;
      t.note = fmt::format("M = {:.6g}, N = {:.6g}", M_assumed, N_assumed);
      rep.checks.push_back(std::move(t));
      if (star.infeasible_for_M == 0) rep.M_hat = star.min_M_zero_N;
      if (star.infeasible_for_N == 0) rep.N_hat = star.min_N_at_fit_M;
    }
  }

  // Per-epoch inequalities.
  const bool have_distances = !epochs.empty() && !std::isnan(epochs.front().dist_sq_start);
  if (!have_distances || !rep.sigma_star_sq_hat || !rep.L_used) {
    const std::string why = !have_distances ? "trace has no distances to w_star"
                            : !rep.L_used   ? "smoothness constant unavailable"
                                            : "sigma_star^2 unavailable";
    rep.checks.push_back(unavailable(checks::kDistanceBound, why));
    rep.checks.push_back(unavailable(checks::kDeviationBound, why));
    rep.checks.push_back(unavailable(checks::kDeviationEndpointBound, why));
  } else {
    CheckTally dist = named(checks::kDistanceBound);
    CheckTally dev = named(checks::kDeviationBound);
    CheckTally end = named(checks::kDeviationEndpointBound);
    for (const auto& rec : epochs) {
      const auto wb = check_weight_bounds(rec, n, *rep.L_used, *rep.sigma_star_sq_hat, opt.tol);
      if (!wb.in_regime) {
        ++dist.out_of_regime;
        ++dev.out_of_regime;
        ++end.out_of_regime;
        continue;
      }
      auto tally = [&](CheckTally& t, bool ok, double margin) {
        ++t.checked;
        t.worst_margin = std::min(t.worst_margin, margin);
        if (ok) {
          ++t.passed;
        } else if (t.first_failure == 0) {
          t.first_failure = rec.epoch;
        }
      };
      tally(dist, wb.distance_ok, wb.distance_margin);
      tally(dev, wb.deviation_ok, wb.deviation_margin);
      tally(end, wb.deviation_endpoint_ok, wb.deviation_endpoint_margin);
    }
    rep.checks.push_back(std::move(dist));
    rep.checks.push_back(std::move(dev));
    rep.checks.push_back(std::move(end));
  }

  const std::optional<double> mu = opt.mu ? opt.mu : truth.pl_constant;
  const std::optional<double> M = opt.M ? opt.M : truth.star_constant;
  // N defaults to 0 only when M is the analytic star constant.
  const bool have_N = opt.N.has_value() || truth.star_constant.has_value();
  const double N = opt.N.value_or(0.0);
  if (!have_distances || !rep.sigma_star_sq_hat || !rep.L_used || !mu || !M || !have_N || !rep.f_star) {
    std::string why = "missing:";
    if (!have_distances) why += " w_star distances";
    if (!rep.sigma_star_sq_hat) why += " sigma_star^2";
    if (!rep.L_used) why += " L";
    if (!mu) why += " mu";
    if (!M) why += " M";
    if (!have_N) why += " N";
    if (!rep.f_star) why += " F*";
    rep.checks.push_back(unavailable(checks::kGradientRecursion, why));
    rep.checks.push_back(unavailable(checks::kObjectiveRecursion, why));
  } else {
    const double gamma = opt.gamma.value_or(1.0 / (*rep.L_used * *rep.L_used));
    rep.constants = compute_constants(*rep.L_used, *mu, *M, N, gamma);
    CheckTally grad = named(checks::kGradientRecursion);
    CheckTally obj = named(checks::kObjectiveRecursion);
    for (const auto& rec : epochs) {
      const auto dr = check_descent_recursion(rec, n, *rep.f_star, *rep.constants, *rep.sigma_star_sq_hat, opt.tol);
      if (!dr.in_regime) {
        ++grad.out_of_regime;
        ++obj.out_of_regime;
        continue;
      }
      ++grad.checked;
      ++obj.checked;
      grad.worst_margin = std::min(grad.worst_margin, dr.gradient_form_margin);
      obj.worst_margin = std::min(obj.worst_margin, dr.objective_form_margin);
      if (dr.gradient_form_ok) {
        ++grad.passed;
      } else if (grad.first_failure == 0) {
        grad.first_failure = rec.epoch;
      }
      if (dr.objective_form_ok) {
        ++obj.passed;
      } else if (obj.first_failure == 0) {
        obj.first_failure = rec.epoch;
      }
    }
    if (rep.f_star_source != "analytic" && rep.f_star_source != "override") {
      obj.note = "F* is the best observed objective (an upper bound)";
    }
    rep.checks.push_back(std::move(grad));
    rep.checks.push_back(std::move(obj));
  }
  return rep;
}

nlohmann::json to_json(const CheckTally& t) {
  nlohmann::json doc = {{"name", t.name}, {"available", t.available}};
  if (!t.note.empty()) doc["note"] = t.note;
  if (t.available) {
    doc["checked"] = t.checked;
    doc["passed"] = t.passed;
    doc["out_of_regime"] = t.out_of_regime;
    doc["first_failure"] = t.first_failure;
    doc["worst_margin"] = std::isfinite(t.worst_margin) ? nlohmann::json(t.worst_margin) : nlohmann::json(nullptr);
    doc["all_pass"] = t.all_pass();
  }
  return doc;
}

nlohmann::json to_json(const DiagnosticsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json doc = {{"problem_kind", r.problem_kind},
                        {"smooth", r.smooth},
                        {"L_hat", r.L_hat},
                        {"L_used", opt(r.L_used)},
                        {"L_source", r.L_source},
                        {"mu_hat", opt(r.mu_hat)},
                        {"M_hat", opt(r.M_hat)},
                        {"N_hat", opt(r.N_hat)},
                        {"sigma_star_sq_hat", opt(r.sigma_star_sq_hat)},
                        {"F_star", opt(r.f_star)},
                        {"F_star_source", r.f_star_source},
                        {"epochs_checked", r.epochs_checked},
                        {"all_pass", r.all_pass()},
                        {"warnings", r.warnings}};
  if (r.constants) doc["constants"] = to_json(*r.constants);
  doc["checks"] = nlohmann::json::array();
  for (const auto& c : r.checks) doc["checks"].push_back(to_json(c));
  return doc;
}

}  // namespace shufflepl

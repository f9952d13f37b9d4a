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

#include <cmath>

#include <gtest/gtest.h>

#include "shufflepl/diagnostics.hpp"
#include "shufflepl/errors.hpp"
#include "shufflepl/problems.hpp"
#include "shufflepl/random.hpp"

namespace shufflepl {
namespace {

std::shared_ptr<const LeastSquaresProblem> two_point() {
  Matrix rows(2, 1);
  rows << 1.0, 1.0;
  Vector b(2);
  b << 0.0, 2.0;
  return build_least_squares(rows, b);
}

// Rows with a spread of norms, so L = max ||a_i||^2 is attained by one row only.
std::shared_ptr<const LeastSquaresProblem> noisy_least_squares(std::size_t n, std::size_t d, std::uint64_t seed) {
  Engine eng = make_engine(seed, 31);
  Matrix rows(n, d);
  Vector b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double scale = uniform(eng, 0.5, 1.5);
    for (std::size_t k = 0; k < d; ++k) rows(i, k) = scale * standard_normal(eng) / std::sqrt(static_cast<double>(d));
    b[i] = standard_normal(eng);
  }
  return build_least_squares(rows, b);
}

class LinearProblem final : public FiniteSumProblem {
 public:
  LinearProblem() : FiniteSumProblem(3, 2, GroundTruth{}, nlohmann::json{{"kind", "linear"}}) {}
  double value(const Vector& w, std::size_t i) const override { return w.sum() * static_cast<double>(i + 1); }
  void gradient(const Vector&, std::size_t i, Vector& out) const override {
    out = Vector::Constant(2, static_cast<double>(i + 1));
  }
  std::string kind() const override { return "linear"; }
};

BiasMlpArchitecture small_arch() {
  BiasMlpArchitecture arch;
  arch.input_dim = 3;
  arch.hidden = {6, 4};
  arch.output_dim = 2;
  return arch;
}

RunTrace theorem_run(const LeastSquaresProblem& p, std::size_t epochs, bool full_trace) {
  const auto& truth = p.ground_truth();
  const auto c = compute_constants(*truth.smoothness, *truth.pl_constant, *truth.star_constant, 0, 1);
  const auto plan = plan_schedule(0.01, 1.0, 0.05, c.C1, step_cap(p.size(), *truth.smoothness, *truth.star_constant));
  RunOptions opts;
  opts.full_trace = full_trace;
  return run(p, p.initial_point(), plan, ShufflingScheme::random_reshuffle(1), std::min(epochs, plan.T), opts);
}

TEST(Smoothness, RecoversLargestRowNorm) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto p = noisy_least_squares(12, 6, seed);
    const double L = *p->ground_truth().smoothness;
    const double L_hat = estimate_smoothness(*p, 1000, 1.0, seed);
    EXPECT_LE(L_hat, L * (1 + 1e-12));
    EXPECT_GE(L_hat, 0.99 * L);
  }
}

TEST(Smoothness, ScalarQuadraticAndLinear) {
  EXPECT_NEAR(estimate_smoothness(*two_point(), 50, 1.0, 0), 1.0, 1e-9);
  EXPECT_EQ(estimate_smoothness(LinearProblem{}, 50, 1.0, 0), 0.0);
}

TEST(AveragePl, ScalarQuadraticAtMinimizer) {
  const auto p = two_point();
  const std::vector<Vector> points = {Vector::Ones(1)};
  const auto res = check_average_pl(*p, points);
  ASSERT_TRUE(res.conclusive);
  // Numerator (1 + 1)/2 = 1, denominator 2 * (0.5 + 0.5)/2 = 1.
  EXPECT_DOUBLE_EQ(res.mu_hat, 1.0);
}

TEST(AveragePl, InterpolatingMinimizerIsSkipped) {
  const auto p = build_interpolating_generator(10, 20, 1);
  const std::vector<Vector> points = {*p->ground_truth().w_star};
  const auto res = check_average_pl(*p, points);
  EXPECT_FALSE(res.conclusive);
  EXPECT_EQ(res.skipped, 1u);
}

TEST(AveragePl, LeastSquaresBoundedBySmallestRowNorm) {
  const auto p = noisy_least_squares(10, 20, 4);  // d > n: consistent
  Engine eng = make_engine(9, 0);
  std::vector<Vector> points;
  for (int k = 0; k < 20; ++k) {
    Vector w(20);
    for (auto& x : w) x = standard_normal(eng);
    points.push_back(w);
  }
  const auto res = check_average_pl(*p, points);
  ASSERT_TRUE(res.conclusive);
  EXPECT_GE(res.mu_hat, *p->ground_truth().pl_constant * (1 - 1e-12));
}

TEST(AveragePl, NetworksSatisfyUnitConstant) {
  const auto p = BiasMlpProblem::teacher(small_arch(), 10, 2, 3);
  std::vector<Vector> points;
  for (std::uint64_t s = 0; s < 30; ++s) points.push_back(init_mlp_weights(small_arch(), s));
  const auto res = check_average_pl(*p, points);
  ASSERT_TRUE(res.conclusive);
  EXPECT_GE(res.mu_hat, 1.0 - 1e-12);
  const auto tally = check_component_pl(*p, points);
  EXPECT_TRUE(tally.all_pass());
  EXPECT_EQ(tally.checked, 30u * 10u);
}

TEST(ComponentPl, DetectsAnInflatedConstant) {
  const auto p = BiasMlpProblem::teacher(small_arch(), 10, 2, 3);
  std::vector<Vector> points;
  for (std::uint64_t s = 0; s < 5; ++s) points.push_back(init_mlp_weights(small_arch(), s));
  EXPECT_FALSE(check_component_pl(*p, points, 1e3).all_pass());
}

TEST(SigmaStar, Examples) {
  const auto p = two_point();
  EXPECT_DOUBLE_EQ(sigma_star_sq(*p, Vector::Ones(1)), 1.0);
  const auto interp = build_interpolating_generator(10, 20, 2);
  EXPECT_LT(sigma_star_sq(*interp, *interp->ground_truth().w_star), 1e-28);
  Matrix row(1, 2);
  row << 1.0, 2.0;
  Vector b(1);
  b << 3.0;
  const auto single = build_least_squares(row, b);
  EXPECT_LT(sigma_star_sq(*single, *single->ground_truth().w_star), 1e-28);
}

TEST(StarSmooth, ConvexLeastSquaresHoldsWithSmoothnessConstant) {
  const auto p = noisy_least_squares(8, 4, 5);
  const double L = *p->ground_truth().smoothness;
  RunOptions opts;
  opts.full_trace = true;
  const auto trace = run(*p, Vector::Zero(4), ConstantStep{0.3 / L}, ShufflingScheme::random_reshuffle(2), 20, opts);
  const auto rep = check_star_smooth_convex(*p, trace.epochs, *p->ground_truth().w_star, L, 0, 2 * L);
  ASSERT_TRUE(rep.available);
  EXPECT_EQ(rep.steps, 20u * 8u);
  EXPECT_EQ(rep.satisfied, rep.steps);
  EXPECT_GE(rep.worst_residual, -1e-9);
  EXPECT_LE(rep.min_M_zero_N, L * (1 + 1e-9));
  EXPECT_EQ(rep.infeasible_for_M, 0u);
}

TEST(StarSmooth, ResidualAtTheMinimizerIsTheDeviationTerm) {
  // Start at w* of an interpolating problem: every residual is N * dev >= 0.
  const auto p = build_interpolating_generator(6, 10, 3);
  RunOptions opts;
  opts.full_trace = true;
  const Vector& w_star = *p->ground_truth().w_star;
  const auto trace = run(*p, w_star, ConstantStep{0.5}, ShufflingScheme::incremental(), 2, opts);
  const auto rep = check_star_smooth_convex(*p, trace.epochs, w_star, 1.0, 0.5, 2.0);
  ASSERT_TRUE(rep.available);
  EXPECT_EQ(rep.satisfied, rep.steps);
}

TEST(StarSmooth, UnavailableWithoutInnerIterates) {
  const auto p = two_point();
  const auto trace = run(*p, Vector::Zero(1), ConstantStep{0.1}, ShufflingScheme::incremental(), 3);
  const auto rep = check_star_smooth_convex(*p, trace.epochs, Vector::Ones(1), 1, 0, 2);
  EXPECT_FALSE(rep.available);
  EXPECT_FALSE(rep.note.empty());
}

TEST(WeightBounds, InterpolationAtHalfInverseSmoothness) {
  const auto p = build_interpolating_generator(20, 50, 1);
  const double L = *p->ground_truth().smoothness;
  const auto trace = run(*p, p->initial_point(), ConstantStep{1 / (2 * L)}, ShufflingScheme::random_reshuffle(3), 50);
  for (const auto& rec : trace.epochs) {
    const auto wb = check_weight_bounds(rec, 20, L, 0.0);
    ASSERT_TRUE(wb.available && wb.in_regime);
    EXPECT_TRUE(wb.distance_ok && wb.deviation_ok && wb.deviation_endpoint_ok) << "epoch " << rec.epoch;
  }
}

TEST(WeightBounds, NoisyProblemAtHalfInverseSmoothness) {
  const auto p = noisy_least_squares(30, 5, 6);
  const double L = *p->ground_truth().smoothness;
  const double sigma = *p->ground_truth().sigma_star_sq;
  ASSERT_GT(sigma, 0.0);
  const auto trace = run(*p, Vector::Constant(5, 3.0), ConstantStep{1 / (2 * L)}, ShufflingScheme::random_reshuffle(4), 40);
  for (const auto& rec : trace.epochs) {
    const auto wb = check_weight_bounds(rec, 30, L, sigma);
    EXPECT_TRUE(wb.distance_ok && wb.deviation_ok && wb.deviation_endpoint_ok) << "epoch " << rec.epoch;
  }
}

TEST(WeightBounds, StartingAtMinimizerGivesZeroSides) {
  const auto p = build_interpolating_generator(6, 10, 3);
  auto [w, rec] = run_epoch(*p, *p->ground_truth().w_star, 0.5, make_permutation(ShufflingScheme::incremental(), 6, 1));
  const auto wb = check_weight_bounds(rec, 6, 1.0, 0.0);
  EXPECT_TRUE(wb.distance_ok && wb.deviation_ok && wb.deviation_endpoint_ok);
}

TEST(WeightBounds, LargeStepIsOutOfRegime) {
  const auto p = two_point();
  auto [w, rec] = run_epoch(*p, Vector::Zero(1), 10.0, make_permutation(ShufflingScheme::incremental(), 2, 1));
  const auto wb = check_weight_bounds(rec, 2, 1.0, 1.0);
  EXPECT_TRUE(wb.available);
  EXPECT_FALSE(wb.in_regime);
}

TEST(WeightBounds, UnavailableWithoutMinimizer) {
  EpochRecord rec;
  rec.eta = 0.1;
  EXPECT_FALSE(check_weight_bounds(rec, 3, 1.0, 0.0).available);
}

TEST(Recursion, TheoremRunSatisfiesBothForms) {
  const auto p = build_interpolating_generator(20, 50, 1);
  const auto trace = theorem_run(*p, 200, false);
  const auto c = compute_constants(1, 1, 1, 0, 1);
  for (const auto& rec : trace.epochs) {
    const auto dr = check_descent_recursion(rec, 20, 0.0, c, 0.0);
    ASSERT_TRUE(dr.available && dr.in_regime);
    EXPECT_TRUE(dr.gradient_form_ok) << "epoch " << rec.epoch;
    EXPECT_TRUE(dr.objective_form_ok) << "epoch " << rec.epoch;
  }
}

TEST(Recursion, InflatedContractionIsCaught) {
  const auto p = build_interpolating_generator(20, 50, 1);
  const auto trace = theorem_run(*p, 50, false);
  auto c = compute_constants(1, 1, 1, 0, 1);
  c.C3 *= 100;
  std::size_t failures = 0;
  for (const auto& rec : trace.epochs) {
    const auto dr = check_descent_recursion(rec, 20, 0.0, c, 0.0);
    if (!dr.objective_form_ok) {
      ++failures;
      EXPECT_LT(dr.objective_form_margin, 0.0);
    }
  }
  EXPECT_GT(failures, 0u);
}

TEST(Recursion, AtTheMinimizerBothSidesVanish) {
  const auto p = build_interpolating_generator(6, 10, 3);
  auto [w, rec] = run_epoch(*p, *p->ground_truth().w_star, 0.5, make_permutation(ShufflingScheme::incremental(), 6, 1));
  const auto dr = check_descent_recursion(rec, 6, 0.0, compute_constants(1, 1, 1, 0, 1), 0.0);
  EXPECT_TRUE(dr.gradient_form_ok && dr.objective_form_ok);
}

TEST(Recursion, TighteningToleranceOnlyRemovesPasses) {
  const auto p = build_interpolating_generator(20, 50, 1);
  const auto trace = theorem_run(*p, 60, false);
  auto c = compute_constants(1, 1, 1, 0, 1);
  c.C3 *= 3;
  std::vector<bool> previous(trace.epochs.size(), true);
  for (double tol : {1.0, 1e-2, 1e-5, 1e-9, 0.0}) {
    for (std::size_t k = 0; k < trace.epochs.size(); ++k) {
      const bool ok = check_descent_recursion(trace.epochs[k], 20, 0.0, c, 0.0, tol).objective_form_ok;
      EXPECT_TRUE(previous[k] || !ok) << "tol " << tol << " epoch " << k + 1;
      previous[k] = ok;
    }
  }
}

TEST(Tally, RecordsFirstFailureAndMargin) {
  CheckTally t;
  t.record(1, 1.0, 2.0, 0.0);
  t.record(2, 3.0, 2.0, 0.0);
  t.record(3, 5.0, 2.0, 0.0);
  EXPECT_EQ(t.checked, 3u);
  EXPECT_EQ(t.passed, 1u);
  EXPECT_EQ(t.first_failure, 2u);
  EXPECT_DOUBLE_EQ(t.worst_margin, -3.0);
  EXPECT_FALSE(t.all_pass());
  EXPECT_TRUE(within(1.0 + 1e-10, 1.0));
  EXPECT_FALSE(within(1.0 + 1e-8, 1.0));
}

TEST(GradientCheck, Examples) {
  EXPECT_LE(gradient_check(*noisy_least_squares(10, 5, 7), 50, 1e-4, 0), 1e-9);
  EXPECT_LE(gradient_check(LinearProblem{}, 20, 1e-4, 0), 1e-10);  // cancellation only
  EXPECT_LE(gradient_check(*BiasMlpProblem::teacher(small_arch(), 10, 2, 3), 50, 1e-5, 0), 1e-5);
}

TEST(Diagnose, TheoremRunPassesEveryCheck) {
  const auto p = build_interpolating_generator(20, 50, 1);
  const auto trace = theorem_run(*p, 40, true);
  const auto rep = diagnose(*p, trace.epochs);
  EXPECT_TRUE(rep.all_pass()) << to_json(rep).dump(2);
  EXPECT_EQ(rep.L_source, "analytic");
  EXPECT_EQ(rep.f_star_source, "analytic");
  for (const char* name : {checks::kDistanceBound, checks::kDeviationBound, checks::kDeviationEndpointBound,
                           checks::kGradientRecursion, checks::kObjectiveRecursion, checks::kStarSmooth}) {
    const auto* c = rep.find(name);
    ASSERT_NE(c, nullptr) << name;
    EXPECT_TRUE(c->available) << name;
    EXPECT_GT(c->checked, 0u) << name;
    EXPECT_LE(c->passed, c->checked);
  }
  ASSERT_TRUE(rep.M_hat);
  EXPECT_LE(*rep.M_hat, 1.0 + 1e-9);
}

TEST(Diagnose, MissingMinimizerIsReportedUnavailable) {
  Engine eng = make_engine(3, 0);
  Matrix x(8, 3), y(8, 2);
  for (auto& v : x.reshaped()) v = standard_normal(eng);
  for (auto& v : y.reshaped()) v = standard_normal(eng);
  const auto p = build_bias_mlp(small_arch(), x, y, 1);
  ASSERT_FALSE(p->ground_truth().w_star);
  const auto trace = run(*p, p->initial_point(), ConstantStep{0.05}, ShufflingScheme::random_reshuffle(1), 5);
  DiagnoseOptions opt;
  opt.smoothness_samples = 50;
  const auto rep = diagnose(*p, trace.epochs, opt);
  for (const char* name : {checks::kDistanceBound, checks::kGradientRecursion, checks::kStarSmooth}) {
    const auto* c = rep.find(name);
    ASSERT_NE(c, nullptr);
    EXPECT_FALSE(c->available) << name;
    EXPECT_FALSE(c->note.empty());
  }
  EXPECT_EQ(rep.f_star_source, "best observed (upper bound)");
  EXPECT_TRUE(rep.find(checks::kComponentPl)->all_pass());
  const auto doc = to_json(rep);
  EXPECT_FALSE(doc.dump().empty());
}

TEST(Diagnose, ReluNetworkIsFlaggedNonSmooth) {
  auto arch = small_arch();
  arch.activation = Activation::kRelu;
  const auto p = BiasMlpProblem::teacher(arch, 6, 1, 1);
  DiagnoseOptions opt;
  opt.smoothness_samples = 20;
  const auto rep = diagnose(*p, {}, opt);
  EXPECT_FALSE(rep.smooth);
  EXPECT_FALSE(rep.warnings.empty());
}

}  // namespace
}  // namespace shufflepl

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

#include "shufflepl/errors.hpp"
#include "shufflepl/optimizer.hpp"
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

std::shared_ptr<const LeastSquaresProblem> random_least_squares(std::size_t n, std::size_t d, std::uint64_t seed) {
  Engine eng = make_engine(seed, 99);
  Matrix rows(n, d);
  Vector b(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) rows(i, k) = standard_normal(eng);
    b[i] = standard_normal(eng);
  }
  return build_least_squares(rows, b);
}

// The inner loop written out directly on the rows, without the problem interface.
Vector straight_line(const LeastSquaresProblem& p, Vector w, double eta, const ShufflingScheme& scheme,
                     std::size_t epochs) {
  const Matrix& A = p.rows();
  const Vector& b = p.targets();
  const auto n = static_cast<std::size_t>(A.rows());
  for (std::size_t t = 1; t <= epochs; ++t) {
    const auto perm = make_permutation(scheme, n, t);
    for (std::size_t k = 0; k < n; ++k) {
      const auto i = static_cast<Eigen::Index>(perm[k]);
      const double r = A.row(i).dot(w) - b[i];
      w -= (eta / static_cast<double>(n)) * r * A.row(i).transpose();
    }
  }
  return w;
}

TEST(RunEpoch, TwoStepHandExample) {
  const auto p = two_point();
  auto [w, rec] = run_epoch(*p, Vector::Zero(1), 1.0, make_permutation(ShufflingScheme::incremental(), 2, 1));
  EXPECT_DOUBLE_EQ(w[0], 1.0);
  EXPECT_DOUBLE_EQ(rec.end_point->coeff(0), 1.0);
  EXPECT_DOUBLE_EQ(rec.objective, 1.0);  // F(0) = (0 + 4) / 4
  EXPECT_DOUBLE_EQ(rec.gap, 0.5);
  // w_0 = 0, w_1 = 0, w_2 = 1.
  EXPECT_DOUBLE_EQ(rec.dev_sum_lt_n, 0.0);
  EXPECT_DOUBLE_EQ(rec.dev_sum_le_n, 0.5);
  EXPECT_DOUBLE_EQ(rec.dist_sum_lt_n, 1.0);
  EXPECT_DOUBLE_EQ(rec.dist_sq_start, 1.0);
  EXPECT_NEAR(rec.dist_sq_end, 0.0, 1e-28);
  EXPECT_DOUBLE_EQ(rec.avg_sq_grad, 2.0);
  EXPECT_DOUBLE_EQ(rec.inner_sq_grad, 2.0);
}

TEST(RunEpoch, TinyStepLeavesPointInPlace) {
  const auto p = random_least_squares(7, 4, 1);
  const Vector w0 = Vector::LinSpaced(4, -1, 1);
  auto [w, rec] = run_epoch(*p, w0, 1e-30, make_permutation(ShufflingScheme::random_reshuffle(2), 7, 1));
  EXPECT_LE((w - w0).norm(), 1e-15 * w0.norm());
}

TEST(RunEpoch, CommonMinimizerIsFixed) {
  const auto p = build_interpolating_generator(20, 50, 3);
  const Vector& w_star = *p->ground_truth().w_star;
  for (std::size_t t = 1; t <= 5; ++t) {
    // Residuals at w_star are ~1e-16, so the steps are at rounding level.
    auto [w, rec] = run_epoch(*p, w_star, 0.5, make_permutation(ShufflingScheme::random_reshuffle(1), 20, t), t);
    EXPECT_LE((w - w_star).norm(), 1e-14);
  }
  Matrix rows(3, 2);
  rows << 1, 0, 0, 1, 1, 1;
  Vector b(3);
  b << 2, -1, 1;
  const auto exact = build_least_squares(rows, b);
  Vector star(2);
  star << 2, -1;
  auto [w, rec] = run_epoch(*exact, star, 0.9, make_permutation(ShufflingScheme::random_reshuffle(7), 3, 1));
  EXPECT_EQ(w, star);
}

TEST(RunEpoch, TelescopingIdentity) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto p = random_least_squares(9, 5, seed);
    const auto perm = make_permutation(ShufflingScheme::random_reshuffle(seed), 9, 1);
    EpochContext ctx;
    ctx.full_trace = true;
    EpochRecord rec;
    const Vector w0 = Vector::Constant(5, 0.5);
    const double eta = 0.05;
    const Vector wn = run_epoch(*p, w0, eta, perm, 1, ctx, rec);
    ASSERT_EQ(rec.inner_iterates.size(), 10u);
    Vector sum = Vector::Zero(5);
    for (std::size_t j = 0; j < 9; ++j) sum += grad_component(*p, rec.inner_iterates[j], perm[j]);
    const Vector rhs = w0 - (eta / 9.0) * sum;
    EXPECT_LE((wn - rhs).norm(), 1e-10 * std::max(1.0, wn.norm()));
    EXPECT_EQ(rec.inner_iterates.back(), wn);
  }
}

TEST(RunEpoch, DeviationSumsMatchIterates) {
  const auto p = random_least_squares(6, 3, 5);
  const auto perm = make_permutation(ShufflingScheme::random_reshuffle(5), 6, 1);
  EpochContext ctx;
  ctx.full_trace = true;
  EpochRecord rec;
  const Vector w0 = Vector::Constant(3, -0.2);
  run_epoch(*p, w0, 0.3, perm, 1, ctx, rec);
  double lt = 0.0;
  for (std::size_t j = 0; j < 6; ++j) lt += (rec.inner_iterates[j] - w0).squaredNorm();
  const double le = lt + (rec.inner_iterates[6] - w0).squaredNorm();
  EXPECT_NEAR(rec.dev_sum_lt_n, lt / 6, 1e-15);
  EXPECT_NEAR(rec.dev_sum_le_n, le / 6, 1e-15);
}

TEST(RunEpoch, RejectsBadInputs) {
  const auto p = two_point();
  const auto perm = make_permutation(ShufflingScheme::incremental(), 2, 1);
  EXPECT_THROW(run_epoch(*p, Vector::Zero(1), 0.0, perm), ContractError);
  EXPECT_THROW(run_epoch(*p, Vector::Zero(1), std::nan(""), perm), ContractError);
  EXPECT_THROW(run_epoch(*p, Vector::Zero(1), 1.0, make_permutation(ShufflingScheme::incremental(), 3, 1)),
               ContractError);
  EXPECT_THROW(run_epoch(*p, Vector::Zero(2), 1.0, perm), ContractError);
}

TEST(Run, DivergenceNamesEpochAndStep) {
  const auto p = two_point();
  const double eta = 1e7;
  // Scalar replay of the same IG iteration to find where |w| first exceeds the guard.
  double w = 1.0;
  std::size_t epoch = 0, step = 0;
  const double c[2] = {0.0, 2.0};
  for (std::size_t t = 1; t <= 10 && epoch == 0; ++t) {
    for (std::size_t k = 0; k < 2; ++k) {
      w -= eta / 2 * (w - c[k]);
      if (std::abs(w) > kDivergenceNorm) {
        epoch = t;
        step = k + 1;
        break;
      }
    }
  }
  ASSERT_NE(epoch, 0u);
  try {
    run(*p, Vector::Ones(1), ConstantStep{eta}, ShufflingScheme::incremental(), 10);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), epoch);
    EXPECT_EQ(e.step(), step);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Run, FlagsStepsAboveTheCap) {
  const auto p = two_point();  // L = M = 1, n = 2: cap = min{1, 1/2}
  const auto below = run(*p, Vector::Zero(1), ConstantStep{0.5}, ShufflingScheme::incremental(), 2);
  const auto above = run(*p, Vector::Zero(1), ConstantStep{0.6}, ShufflingScheme::incremental(), 2);
  for (const auto& r : below.epochs) EXPECT_FALSE(r.cap_exceeded);
  for (const auto& r : above.epochs) EXPECT_TRUE(r.cap_exceeded);
  RunOptions opts;
  opts.smoothness = 0.1;
  opts.star_constant = 0.1;  // cap = min{10, 5}
  const auto relaxed = run(*p, Vector::Zero(1), ConstantStep{0.6}, ShufflingScheme::incremental(), 2, opts);
  EXPECT_FALSE(relaxed.epochs.back().cap_exceeded);
}

TEST(Run, SingleEpochEqualsRunEpoch) {
  const auto p = random_least_squares(8, 3, 4);
  const auto scheme = ShufflingScheme::random_reshuffle(6);
  const Vector w0 = Vector::Constant(3, 1.0);
  const auto trace = run(*p, w0, ConstantStep{0.2}, scheme, 1);
  auto [w, rec] = run_epoch(*p, w0, 0.2, make_permutation(scheme, 8, 1), 1);
  EXPECT_EQ(trace.final_point, w);
  ASSERT_EQ(trace.epochs.size(), 1u);
  EXPECT_EQ(trace.epochs[0].objective, rec.objective);
  EXPECT_EQ(trace.epochs[0].permutation, rec.permutation);
}

TEST(Run, IdenticalSeedsGiveIdenticalTraces) {
  const auto p = build_interpolating_generator(20, 50, 2);
  const auto plan = plan_schedule(0.01, 1, 0.05, 1);
  const auto a = run(*p, p->initial_point(), plan, ShufflingScheme::random_reshuffle(3), 30);
  const auto b = run(*p, p->initial_point(), plan, ShufflingScheme::random_reshuffle(3), 30);
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t k = 0; k < a.epochs.size(); ++k) {
    EXPECT_EQ(a.epochs[k].objective, b.epochs[k].objective);
    EXPECT_EQ(a.epochs[k].permutation, b.epochs[k].permutation);
    EXPECT_EQ(a.epochs[k].eta, b.epochs[k].eta);
  }
  EXPECT_EQ(a.final_point, b.final_point);
  const auto c = run(*p, p->initial_point(), plan, ShufflingScheme::random_reshuffle(4), 30);
  EXPECT_NE(a.final_point, c.final_point);
}

TEST(Run, EpochsAreChainedAndNumbered) {
  const auto p = random_least_squares(5, 2, 8);
  RunOptions opts;
  opts.keep_points = true;
  const auto trace = run(*p, Vector::Zero(2), ConstantStep{0.1}, ShufflingScheme::single_shuffle(1), 6, opts);
  ASSERT_EQ(trace.epochs.size(), 6u);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(trace.epochs[k].epoch, k + 1);
    if (k > 0) {
      EXPECT_EQ(*trace.epochs[k].start_point, *trace.epochs[k - 1].end_point);
    }
  }
  EXPECT_EQ(*trace.epochs.back().end_point, trace.final_point);
}

TEST(Run, ObserverStopsEarly) {
  const auto p = random_least_squares(5, 2, 8);
  RunOptions opts;
  opts.observer = [](const EpochRecord& r) { return r.epoch < 3; };
  const auto trace = run(*p, Vector::Zero(2), ConstantStep{0.1}, ShufflingScheme::incremental(), 10, opts);
  EXPECT_EQ(trace.epochs_run, 3u);
  EXPECT_EQ(trace.epochs.size(), 3u);
}

TEST(Run, RejectsZeroEpochs) {
  const auto p = two_point();
  EXPECT_THROW(run(*p, Vector::Zero(1), ConstantStep{0.1}, ShufflingScheme::incremental(), 0), ContractError);
}

TEST(Run, SingleComponentIsGradientDescent) {
  Matrix rows(1, 3);
  rows << 0.5, -1.0, 2.0;
  Vector b(1);
  b << 0.7;
  const auto p = build_least_squares(rows, b);
  const auto plan = plan_schedule(0.05, 0.5, 0.2, 2.0);
  for (auto kind : {SchemeKind::kIncrementalGradient, SchemeKind::kSingleShuffle, SchemeKind::kRandomReshuffle}) {
    const Vector w0 = Vector::Constant(3, 0.3);
    const auto trace = run(*p, w0, plan, {kind, 11}, plan.T);
    Vector w = w0;
    for (std::size_t t = 1; t <= plan.T; ++t) {
      const double r = rows.row(0).dot(w) - b[0];
      w -= eta_at(plan, t) * r * rows.row(0).transpose();
    }
    EXPECT_LE((trace.final_point - w).norm(), 1e-12 * std::max(1.0, w.norm()));
  }
}

TEST(Run, MatchesStraightLineLoop) {
  const auto p = build_interpolating_generator(20, 50, 1);
  const double L = *p->ground_truth().smoothness;
  const double eta = 1.0 / (2 * L);
  for (auto scheme : {ShufflingScheme::random_reshuffle(1), ShufflingScheme::single_shuffle(1),
                      ShufflingScheme::incremental()}) {
    const auto trace = run(*p, p->initial_point(), ConstantStep{eta}, scheme, 200);
    const Vector ref = straight_line(*p, p->initial_point(), eta, scheme, 200);
    EXPECT_LE((trace.final_point - ref).norm(), 1e-12 * std::max(1.0, ref.norm()));
  }
}

TEST(Run, ConstantHalfStepOnInterpolationDecreasesGap) {
  const auto p = build_interpolating_generator(20, 50, 1);
  const double eta = 1.0 / (2 * *p->ground_truth().smoothness);
  const auto trace = run(*p, p->initial_point(), ConstantStep{eta}, ShufflingScheme::random_reshuffle(1), 200);
  double prev = trace.epochs.front().gap;
  for (const auto& r : trace.epochs) {
    EXPECT_LE(r.gap, prev * (1 + 1e-12)) << "epoch " << r.epoch;
    EXPECT_FALSE(r.cap_exceeded);
    prev = r.gap;
  }
  const double final_gap = eval_objective(*p, trace.final_point);
  EXPECT_LT(final_gap, 0.5 * trace.epochs.front().gap);
  // With unit rows each epoch shrinks a residual by at most 1 - eta/n, so the
  // gap after T epochs is bounded below by the fastest possible mode.
  const double fastest = std::pow(1 - eta / 20.0, 2 * 200);
  EXPECT_GT(final_gap, 1e-3 * fastest * trace.epochs.front().gap);
}

}  // namespace
}  // namespace shufflepl

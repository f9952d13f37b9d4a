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

#include "shufflepl/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "shufflepl/errors.hpp"

namespace shufflepl {

double known_step_cap(const FiniteSumProblem& problem, std::optional<double> smoothness,
                      std::optional<double> star_constant) {
  const auto& truth = problem.ground_truth();
  const auto L = smoothness ? smoothness : truth.smoothness;
  const auto M = star_constant ? star_constant : truth.star_constant;
  double cap = std::numeric_limits<double>::infinity();
  if (L && *L > 0.0) cap = std::min(cap, 1.0 / (2.0 * *L));
  if (M && *M > 0.0) cap = std::min(cap, static_cast<double>(problem.size()) / (2.0 * *M));
  return cap;
}

Vector run_epoch(const FiniteSumProblem& problem, const Vector& w0, double eta, const Permutation& perm,
                 std::size_t epoch, const EpochContext& ctx, EpochRecord& record) {
  const std::size_t n = problem.size();
  detail::require(std::isfinite(eta) && eta > 0.0, fmt::format("step size must be finite and positive (got {})", eta));
  detail::require(perm.size() == n, fmt::format("permutation has length {}, problem has {} components", perm.size(), n));
  detail::require(static_cast<std::size_t>(w0.size()) == problem.dimension(), "start point dimension mismatch");

  const double inv_n = 1.0 / static_cast<double>(n);
  record = EpochRecord{};
  record.epoch = epoch;
  record.eta = eta;
  record.permutation = perm;
  record.cap_exceeded = eta > ctx.cap;

  Vector g;
  double objective = 0.0;
  double sq_grad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    objective += problem.value(w0, i);
    problem.gradient(w0, i, g);
    sq_grad += g.squaredNorm();
  }
  record.objective = objective * inv_n;
  record.avg_sq_grad = sq_grad * inv_n;
  if (ctx.f_star) record.gap = record.objective - *ctx.f_star;

  const bool have_star = ctx.w_star != nullptr;
  if (ctx.keep_points) record.start_point = w0;
  if (ctx.full_trace) {
    record.inner_iterates.reserve(n + 1);
    record.inner_iterates.push_back(w0);
  }

  const double step = eta * inv_n;
  Vector w = w0;
  double inner_sq = 0.0;
  double dev_sum = 0.0;
  double dist_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    dev_sum += (w - w0).squaredNorm();
    if (have_star) dist_sum += (w - *ctx.w_star).squaredNorm();
    problem.gradient(w, perm[k], g);
    inner_sq += g.squaredNorm();
    w.noalias() -= step * g;
    if (!w.allFinite() || w.norm() > kDivergenceNorm) {
      throw DivergenceError(epoch, k + 1,
                            fmt::format("iterate diverged at epoch {}, inner step {} (eta = {:.6g})", epoch,
                                        k + 1, eta));
    }
    if (ctx.full_trace) record.inner_iterates.push_back(w);
  }

  record.inner_sq_grad = inner_sq * inv_n;
  record.dev_sum_lt_n = dev_sum * inv_n;
  record.dev_sum_le_n = (dev_sum + (w - w0).squaredNorm()) * inv_n;
  if (have_star) {
    record.dist_sum_lt_n = dist_sum * inv_n;
    record.dist_sq_start = (w0 - *ctx.w_star).squaredNorm();
    record.dist_sq_end = (w - *ctx.w_star).squaredNorm();
  }
  if (ctx.keep_points) record.end_point = w;
  return w;
}

std::pair<Vector, EpochRecord> run_epoch(const FiniteSumProblem& problem, const Vector& w0, double eta,
                                         const Permutation& perm, std::size_t epoch) {
  const auto& truth = problem.ground_truth();
  EpochContext ctx;
  if (truth.w_star) ctx.w_star = &*truth.w_star;
  ctx.f_star = truth.f_star;
  ctx.cap = known_step_cap(problem, std::nullopt, std::nullopt);
  ctx.keep_points = true;
  EpochRecord record;
  Vector end = run_epoch(problem, w0, eta, perm, epoch, ctx, record);
  return {std::move(end), std::move(record)};
}

RunTrace run(const FiniteSumProblem& problem, const Vector& w0, const StepSchedule& schedule,
             const ShufflingScheme& scheme, std::size_t epochs, const RunOptions& options) {
  detail::require(epochs >= 1, "a run needs at least one epoch");
  detail::require(static_cast<std::size_t>(w0.size()) == problem.dimension(), "start point dimension mismatch");
  detail::require(w0.allFinite(), "start point must be finite");

  const auto& truth = problem.ground_truth();
  EpochContext ctx;
  if (truth.w_star) ctx.w_star = &*truth.w_star;
  ctx.f_star = truth.f_star;
  ctx.cap = known_step_cap(problem, options.smoothness, options.star_constant);
  ctx.full_trace = options.full_trace;
  ctx.keep_points = options.keep_points || options.full_trace;

  RunTrace trace;
  trace.problem_id = problem.kind();
  trace.scheme = scheme;
  trace.schedule_id = schedule_id(schedule);
  if (options.retain_records) trace.epochs.reserve(std::min<std::size_t>(epochs, 1 << 20));

  Vector w = w0;
  EpochRecord record;
  for (std::size_t t = 1; t <= epochs; ++t) {
    const Permutation perm = make_permutation(scheme, problem.size(), t);
    w = run_epoch(problem, w, step_at(schedule, t), perm, t, ctx, record);
    trace.epochs_run = t;
    const bool keep_going = !options.observer || options.observer(record);
    if (options.retain_records) trace.epochs.push_back(std::move(record));
    if (!keep_going) break;
  }
  trace.final_point = std::move(w);
  return trace;
}

}  // namespace shufflepl

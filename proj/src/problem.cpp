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

#include "shufflepl/problem.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "shufflepl/errors.hpp"

namespace shufflepl {

FiniteSumProblem::FiniteSumProblem(std::size_t n, std::size_t d, GroundTruth truth,
                                   nlohmann::json descriptor)
    : n_(n), d_(d), truth_(std::move(truth)), descriptor_(std::move(descriptor)) {
  detail::require(n_ >= 1, "problem needs at least one component");
  detail::require(d_ >= 1, "problem needs at least one parameter");
}

double FiniteSumProblem::component_lower_bound(std::size_t i) const {
  if (truth_.component_minima) return (*truth_.component_minima)[i];
  return 0.0;
}

namespace {

void check_point(const FiniteSumProblem& problem, const Vector& w) {
  if (static_cast<std::size_t>(w.size()) != problem.dimension()) {
    throw ContractError(
        fmt::format("weight vector has dimension {}, problem expects {}", w.size(), problem.dimension()));
  }
}

void check_index(const FiniteSumProblem& problem, std::size_t i) {
  if (i >= problem.size()) {
    throw ContractError(fmt::format("component index {} out of range [0, {})", i, problem.size()));
  }
}

}  // namespace

double eval_objective(const FiniteSumProblem& problem, const Vector& w) {
  check_point(problem, w);
  double sum = 0.0;
  for (std::size_t i = 0; i < problem.size(); ++i) sum += problem.value(w, i);
  return sum / static_cast<double>(problem.size());
}

Vector grad_component(const FiniteSumProblem& problem, const Vector& w, std::size_t i) {
  check_point(problem, w);
  check_index(problem, i);
  Vector g;
  problem.gradient(w, i, g);
  return g;
}

Vector full_gradient(const FiniteSumProblem& problem, const Vector& w) {
  check_point(problem, w);
  Vector total = Vector::Zero(w.size());
  Vector g;
  for (std::size_t i = 0; i < problem.size(); ++i) {
    problem.gradient(w, i, g);
    total += g;
  }
  return total / static_cast<double>(problem.size());
}

Vector finite_diff_grad(const FiniteSumProblem& problem, const Vector& w, std::size_t i, double h) {
  check_point(problem, w);
  check_index(problem, i);
  detail::require(h > 0.0 && std::isfinite(h), "finite-difference step must be positive");
  Vector probe = w;
  Vector g(w.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + h;
    const double up = problem.value(probe, i);
    probe[k] = orig - h;
    const double down = problem.value(probe, i);
    probe[k] = orig;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

}  // namespace shufflepl

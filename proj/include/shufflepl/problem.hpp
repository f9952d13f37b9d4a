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
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace shufflepl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// What is known analytically about a problem instance. Every field is optional;
// diagnostics fall back to estimates (or report "unavailable") when absent.
struct GroundTruth {
  std::optional<Vector> w_star;                         // a global minimizer of F
  std::optional<double> f_star;                         // F*
  std::optional<std::vector<double>> component_minima;  // f_i*
  std::optional<double> smoothness;                     // L
  std::optional<double> sigma_star_sq;                  // sigma_*^2 at w_star
  std::optional<double> pl_constant;                    // average-PL mu
  std::optional<double> star_constant;                  // M with N = 0
};

// F(w) = (1/n) sum_i f(w; i).
//
// Instances are immutable after construction; value() and gradient() are pure
// and may be called concurrently. Component indices are 0-based here; traces
// and permutations use 1-based labels.
class FiniteSumProblem {
 public:
  virtual ~FiniteSumProblem() = default;

  std::size_t size() const noexcept { return n_; }
  std::size_t dimension() const noexcept { return d_; }
  const GroundTruth& ground_truth() const noexcept { return truth_; }

  virtual double value(const Vector& w, std::size_t i) const = 0;
  // Writes grad f(w; i) into out (resized to d).
  virtual void gradient(const Vector& w, std::size_t i, Vector& out) const = 0;

  // A valid lower bound on f_i*. Uses the analytic minima when known.
  virtual double component_lower_bound(std::size_t i) const;

  // False for piecewise-linear activations; diagnostics flag the L-smoothness
  // assumption as violated.
  virtual bool is_smooth() const { return true; }

  virtual Vector initial_point() const { return Vector::Zero(static_cast<Eigen::Index>(d_)); }

  virtual std::string kind() const = 0;

  // Document that rebuilds an identical instance through load_problem().
  const nlohmann::json& descriptor() const noexcept { return descriptor_; }

 protected:
  FiniteSumProblem(std::size_t n, std::size_t d, GroundTruth truth, nlohmann::json descriptor);

 private:
  std::size_t n_;
  std::size_t d_;
  GroundTruth truth_;
  nlohmann::json descriptor_;
};

// Checked entry points. All throw ContractError on bad dimensions/indices.
double eval_objective(const FiniteSumProblem& problem, const Vector& w);
Vector grad_component(const FiniteSumProblem& problem, const Vector& w, std::size_t i);
Vector full_gradient(const FiniteSumProblem& problem, const Vector& w);

// Central differences, one coordinate at a time:
// (f(w + h e_k; i) - f(w - h e_k; i)) / (2h).
Vector finite_diff_grad(const FiniteSumProblem& problem, const Vector& w, std::size_t i, double h);

// ||a - b|| / max(||a||, ||b||), or 0 when both are exactly zero.
double relative_error(const Vector& a, const Vector& b);

}  // namespace shufflepl

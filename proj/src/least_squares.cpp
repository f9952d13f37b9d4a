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

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "shufflepl/errors.hpp"
#include "shufflepl/problems.hpp"
#include "shufflepl/random.hpp"

namespace shufflepl {

namespace {

// Generator substreams.
constexpr std::uint64_t kRowStream = 1;
constexpr std::uint64_t kHiddenStream = 2;

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

LeastSquaresProblem::LeastSquaresProblem(Matrix rows, Vector targets, GroundTruth truth,
                                         nlohmann::json descriptor)
    : FiniteSumProblem(static_cast<std::size_t>(rows.rows()), static_cast<std::size_t>(rows.cols()),
                       std::move(truth), std::move(descriptor)),
      rows_(std::move(rows)),
      targets_(std::move(targets)) {}

double LeastSquaresProblem::value(const Vector& w, std::size_t i) const {
  const auto r = static_cast<Eigen::Index>(i);
  const double residual = rows_.row(r).dot(w) - targets_[r];
  return 0.5 * residual * residual;
}

void LeastSquaresProblem::gradient(const Vector& w, std::size_t i, Vector& out) const {
  const auto r = static_cast<Eigen::Index>(i);
  const double residual = rows_.row(r).dot(w) - targets_[r];
  out = residual * rows_.row(r).transpose();
}

std::string LeastSquaresProblem::kind() const { return "least_squares"; }

GroundTruth LeastSquaresProblem::analytic_truth(const Matrix& rows, const Vector& targets) {
  const Eigen::Index n = rows.rows();
  GroundTruth truth;
  double l_max = 0.0;
  double l_min = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < n; ++r) {
    const double sq = rows.row(r).squaredNorm();
    if (sq == 0.0) {
      throw ContractError(fmt::format("row {} is all zeros; component would be constant", r));
    }
    l_max = std::max(l_max, sq);
    l_min = std::min(l_min, sq);
  }
  truth.smoothness = l_max;
  truth.pl_constant = l_min;
  truth.star_constant = l_max;
  truth.component_minima = std::vector<double>(static_cast<std::size_t>(n), 0.0);

  const Eigen::MatrixXd dense = rows;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(dense);
  Vector w = cod.solve(targets);
  const Vector residual = dense * w - targets;
  const bool consistent = residual.norm() <= 1e-10 * (1.0 + targets.norm());
  truth.w_star = w;
  if (consistent) {
    truth.f_star = 0.0;
    truth.sigma_star_sq = 0.0;
  } else {
    truth.f_star = 0.5 * residual.squaredNorm() / static_cast<double>(n);
    double sigma = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) sigma += residual[r] * residual[r] * rows.row(r).squaredNorm();
    truth.sigma_star_sq = sigma / static_cast<double>(n);
  }
  return truth;
}

std::shared_ptr<const LeastSquaresProblem> LeastSquaresProblem::build(Matrix rows, Vector targets) {
  detail::require(rows.rows() >= 1 && rows.cols() >= 1, "least squares needs n, d >= 1");
  detail::require(targets.size() == rows.rows(),
                  fmt::format("{} targets for {} rows", targets.size(), rows.rows()));
  detail::require(rows.allFinite() && targets.allFinite(), "least squares data must be finite");
  GroundTruth truth = analytic_truth(rows, targets);
  nlohmann::json desc = {{"kind", "least_squares"},
                         {"rows", matrix_to_json(rows)},
                         {"targets", std::vector<double>(targets.begin(), targets.end())}};
  return std::shared_ptr<const LeastSquaresProblem>(
      new LeastSquaresProblem(std::move(rows), std::move(targets), std::move(truth), std::move(desc)));
}

std::shared_ptr<const LeastSquaresProblem> LeastSquaresProblem::interpolating(std::size_t n,
                                                                              std::size_t d,
                                                                              std::uint64_t seed) {
  detail::require(n >= 1, "interpolating generator needs n >= 1");
  if (d < n) {
    throw ContractError(fmt::format(
        "interpolating generator needs d >= n (got n={}, d={}); with fewer parameters than "
        "components a common minimizer is not guaranteed",
        n, d));
  }
  const auto rows_n = static_cast<Eigen::Index>(n);
  const auto cols_d = static_cast<Eigen::Index>(d);

  Engine row_eng = make_engine(seed, kRowStream);
  Matrix rows(rows_n, cols_d);
  for (Eigen::Index r = 0; r < rows_n; ++r) {
    for (Eigen::Index c = 0; c < cols_d; ++c) rows(r, c) = standard_normal(row_eng);
    rows.row(r) /= rows.row(r).norm();
  }

  Engine hidden_eng = make_engine(seed, kHiddenStream);
  Vector hidden(cols_d);
  for (Eigen::Index c = 0; c < cols_d; ++c) hidden[c] = standard_normal(hidden_eng);

  // Same expression as value() so that F(w_dagger) evaluates to exactly zero.
  Vector targets(rows_n);
  for (Eigen::Index r = 0; r < rows_n; ++r) targets[r] = rows.row(r).dot(hidden);

  // w_star stays the minimum-norm solution: iterates started in the row space converge to it.
  GroundTruth truth = analytic_truth(rows, targets);
  truth.f_star = 0.0;
  truth.sigma_star_sq = 0.0;

  nlohmann::json desc = {{"kind", "interpolating"}, {"n", n}, {"d", d}, {"seed", seed}};
  return std::shared_ptr<const LeastSquaresProblem>(
      new LeastSquaresProblem(std::move(rows), std::move(targets), std::move(truth), std::move(desc)));
}

}  // namespace shufflepl

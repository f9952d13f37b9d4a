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

#include <fmt/format.h>

#include "shufflepl/errors.hpp"
#include "shufflepl/problems.hpp"
#include "shufflepl/random.hpp"

namespace shufflepl {

namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kInputStream = 12;
constexpr std::uint64_t kTeacherStream = 13;

using ConstMatrixMap = Eigen::Map<const Matrix>;
using MatrixMap = Eigen::Map<Matrix>;

std::vector<std::size_t> layer_sizes(const BiasMlpArchitecture& arch) {
  std::vector<std::size_t> sizes;
  sizes.push_back(arch.input_dim);
  sizes.insert(sizes.end(), arch.hidden.begin(), arch.hidden.end());
  sizes.push_back(arch.output_dim);
  return sizes;
}

void check_architecture(const BiasMlpArchitecture& arch) {
  detail::require(arch.input_dim >= 1, "bias MLP input_dim must be >= 1");
  detail::require(arch.output_dim >= 1, "bias MLP output_dim must be >= 1");
  for (std::size_t width : arch.hidden) detail::require(width >= 1, "hidden widths must be >= 1");
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kSigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
  }
  return x;
}

// Derivative expressed through the pre-activation.
double activate_deriv(Activation a, double x) {
  switch (a) {
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::kSigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
    case Activation::kRelu:
      return x > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

Vector draw_weights(const BiasMlpArchitecture& arch, Engine& eng) {
  const auto sizes = layer_sizes(arch);
  Vector w(static_cast<Eigen::Index>(arch.parameter_count()));
  Eigen::Index pos = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l - 1]));
    const std::size_t block = sizes[l] * sizes[l - 1] + sizes[l];
    for (std::size_t k = 0; k < block; ++k) w[pos++] = uniform(eng, -bound, bound);
  }
  return w;
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    out.push_back(row);
  }
  return out;
}

nlohmann::json arch_json(const BiasMlpArchitecture& arch) {
  return {{"kind", "bias_mlp"},
          {"input_dim", arch.input_dim},
          {"hidden", arch.hidden},
          {"output_dim", arch.output_dim},
          {"activation", to_string(arch.activation)}};
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kRelu:
      return "relu";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "relu") return Activation::kRelu;
  throw ContractError(fmt::format("unknown activation '{}' (expected tanh, sigmoid or relu)", name));
}

std::size_t BiasMlpArchitecture::parameter_count() const {
  const auto sizes = layer_sizes(*this);
  std::size_t count = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) count += sizes[l] * sizes[l - 1] + sizes[l];
  return count;
}

Vector init_mlp_weights(const BiasMlpArchitecture& arch, std::uint64_t seed) {
  check_architecture(arch);
  Engine eng = make_engine(seed, kInitStream);
  return draw_weights(arch, eng);
}

BiasMlpProblem::BiasMlpProblem(BiasMlpArchitecture arch, Matrix inputs, Matrix labels, Vector init,
                               GroundTruth truth, nlohmann::json descriptor)
    : FiniteSumProblem(static_cast<std::size_t>(inputs.rows()), arch.parameter_count(),
                       std::move(truth), std::move(descriptor)),
      arch_(std::move(arch)),
      layer_sizes_(layer_sizes(arch_)),
      inputs_(std::move(inputs)),
      labels_(std::move(labels)),
      init_(std::move(init)) {
  std::size_t pos = 0;
  offsets_.push_back(0);  // unused slot for the input layer
  for (std::size_t l = 1; l < layer_sizes_.size(); ++l) {
    offsets_.push_back(pos);
    pos += layer_sizes_[l] * layer_sizes_[l - 1] + layer_sizes_[l];
  }
}

std::string BiasMlpProblem::kind() const { return "bias_mlp"; }

double BiasMlpProblem::component_lower_bound(std::size_t) const { return 0.0; }

void BiasMlpProblem::forward(const Vector& w, std::size_t i, std::vector<Vector>& pre,
                             std::vector<Vector>& act) const {
  const std::size_t depth = layer_sizes_.size() - 1;
  pre.resize(depth + 1);
  act.resize(depth + 1);
  act[0] = inputs_.row(static_cast<Eigen::Index>(i)).transpose();
  for (std::size_t l = 1; l <= depth; ++l) {
    const auto rows = static_cast<Eigen::Index>(layer_sizes_[l]);
    const auto cols = static_cast<Eigen::Index>(layer_sizes_[l - 1]);
    const double* base = w.data() + offsets_[l];
    ConstMatrixMap weight(base, rows, cols);
    Eigen::Map<const Vector> bias(base + rows * cols, rows);
    pre[l] = weight * act[l - 1] + bias;
    if (l < depth) {
      act[l] = pre[l].unaryExpr([a = arch_.activation](double x) { return activate(a, x); });
    } else {
      act[l] = pre[l];
    }
  }
}

Vector BiasMlpProblem::predict(const Vector& w, std::size_t i) const {
  detail::require(static_cast<std::size_t>(w.size()) == dimension(), "weight dimension mismatch");
  detail::require(i < size(), "component index out of range");
  std::vector<Vector> pre;
  std::vector<Vector> act;
  forward(w, i, pre, act);
  return act.back();
}

double BiasMlpProblem::value(const Vector& w, std::size_t i) const {
  std::vector<Vector> pre;
  std::vector<Vector> act;
  forward(w, i, pre, act);
  return 0.5 * (act.back() - labels_.row(static_cast<Eigen::Index>(i)).transpose()).squaredNorm();
}

void BiasMlpProblem::gradient(const Vector& w, std::size_t i, Vector& out) const {
  std::vector<Vector> pre;
  std::vector<Vector> act;
  forward(w, i, pre, act);
  out.resize(w.size());

  const std::size_t depth = layer_sizes_.size() - 1;
  // delta holds d f / d pre[l]; at the output it is the residual h - y.
  Vector delta = act[depth] - labels_.row(static_cast<Eigen::Index>(i)).transpose();
  for (std::size_t l = depth; l >= 1; --l) {
    const auto rows = static_cast<Eigen::Index>(layer_sizes_[l]);
    const auto cols = static_cast<Eigen::Index>(layer_sizes_[l - 1]);
    MatrixMap grad_weight(out.data() + offsets_[l], rows, cols);
    Eigen::Map<Vector> grad_bias(out.data() + offsets_[l] + rows * cols, rows);
    grad_weight.noalias() = delta * act[l - 1].transpose();
    grad_bias = delta;
    if (l == 1) break;
    ConstMatrixMap weight(w.data() + offsets_[l], rows, cols);
    Vector back = weight.transpose() * delta;
    delta = back.cwiseProduct(
        pre[l - 1].unaryExpr([a = arch_.activation](double x) { return activate_deriv(a, x); }));
  }
}

std::shared_ptr<const BiasMlpProblem> BiasMlpProblem::build(const BiasMlpArchitecture& arch,
                                                            Matrix inputs, Matrix labels,
                                                            std::uint64_t init_seed) {
  check_architecture(arch);
  detail::require(inputs.rows() >= 1, "bias MLP needs at least one sample");
  detail::require(static_cast<std::size_t>(inputs.cols()) == arch.input_dim,
                  fmt::format("inputs have {} columns, architecture expects {}", inputs.cols(),
                              arch.input_dim));
  detail::require(labels.rows() == inputs.rows(),
                  fmt::format("{} label rows for {} inputs", labels.rows(), inputs.rows()));
  detail::require(static_cast<std::size_t>(labels.cols()) == arch.output_dim,
                  fmt::format("labels have {} columns, architecture expects output_dim {}",
                              labels.cols(), arch.output_dim));

  GroundTruth truth;
  truth.component_minima = std::vector<double>(static_cast<std::size_t>(inputs.rows()), 0.0);
  truth.pl_constant = 1.0;

  nlohmann::json desc = arch_json(arch);
  desc["init_seed"] = init_seed;
  desc["inputs"] = matrix_json(inputs);
  desc["labels"] = matrix_json(labels);

  Vector init = init_mlp_weights(arch, init_seed);
  return std::shared_ptr<const BiasMlpProblem>(new BiasMlpProblem(
      arch, std::move(inputs), std::move(labels), std::move(init), std::move(truth), std::move(desc)));
}

std::shared_ptr<const BiasMlpProblem> BiasMlpProblem::teacher(const BiasMlpArchitecture& arch,
                                                              std::size_t samples,
                                                              std::uint64_t data_seed,
                                                              std::uint64_t init_seed) {
  check_architecture(arch);
  detail::require(samples >= 1, "teacher data set needs at least one sample");
  const auto n = static_cast<Eigen::Index>(samples);

  Engine input_eng = make_engine(data_seed, kInputStream);
  Matrix inputs(n, static_cast<Eigen::Index>(arch.input_dim));
  for (Eigen::Index r = 0; r < inputs.rows(); ++r)
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) inputs(r, c) = standard_normal(input_eng);

  Engine teacher_eng = make_engine(data_seed, kTeacherStream);
  Vector teacher_w = draw_weights(arch, teacher_eng);

  // Evaluate the teacher through a scratch problem with placeholder labels.
  Matrix zero_labels = Matrix::Zero(n, static_cast<Eigen::Index>(arch.output_dim));
  BiasMlpProblem scratch(arch, inputs, zero_labels, teacher_w, GroundTruth{}, nlohmann::json{});
  Matrix labels(n, static_cast<Eigen::Index>(arch.output_dim));
  for (Eigen::Index r = 0; r < n; ++r)
    labels.row(r) = scratch.predict(teacher_w, static_cast<std::size_t>(r)).transpose();

  GroundTruth truth;
  truth.component_minima = std::vector<double>(samples, 0.0);
  truth.pl_constant = 1.0;
  truth.w_star = teacher_w;
  truth.f_star = 0.0;
  truth.sigma_star_sq = 0.0;

  nlohmann::json desc = arch_json(arch);
  desc["init_seed"] = init_seed;
  desc["samples"] = samples;
  desc["data_seed"] = data_seed;

  Vector init = init_mlp_weights(arch, init_seed);
  return std::shared_ptr<const BiasMlpProblem>(new BiasMlpProblem(
      arch, std::move(inputs), std::move(labels), std::move(init), std::move(truth), std::move(desc)));
}

}  // namespace shufflepl

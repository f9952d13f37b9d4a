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

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "shufflepl/problem.hpp"

namespace shufflepl {

// f(w; i) = 1/2 (a_i^T w - b_i)^2.
class LeastSquaresProblem final : public FiniteSumProblem {
 public:
  double value(const Vector& w, std::size_t i) const override;
  void gradient(const Vector& w, std::size_t i, Vector& out) const override;
  std::string kind() const override;

  const Matrix& rows() const noexcept { return rows_; }
  const Vector& targets() const noexcept { return targets_; }

  // Rows must be nonzero. Ground truth is filled analytically:
  //   L = max_i ||a_i||^2, f_i* = 0, mu = min_i ||a_i||^2, M = L (convex);
  //   w_star is the minimum-norm least-squares solution, sigma_*^2 evaluated there.
  static std::shared_ptr<const LeastSquaresProblem> build(Matrix rows, Vector targets);

  // Over-parameterized instance (d >= n): rows uniform on the unit sphere,
  // hidden w_dagger ~ N(0, I), b = A w_dagger. w_star is the minimum-norm
  // interpolant, F* = 0 and sigma_*^2 = 0. Bit-identical for a given seed.
  static std::shared_ptr<const LeastSquaresProblem> interpolating(std::size_t n, std::size_t d,
                                                                  std::uint64_t seed);

 private:
  LeastSquaresProblem(Matrix rows, Vector targets, GroundTruth truth, nlohmann::json descriptor);

  static GroundTruth analytic_truth(const Matrix& rows, const Vector& targets);

  Matrix rows_;
  Vector targets_;
};

inline std::shared_ptr<const LeastSquaresProblem> build_least_squares(Matrix rows, Vector targets) {
  return LeastSquaresProblem::build(std::move(rows), std::move(targets));
}

inline std::shared_ptr<const LeastSquaresProblem> build_interpolating_generator(std::size_t n,
                                                                                std::size_t d,
                                                                                std::uint64_t seed) {
  return LeastSquaresProblem::interpolating(n, d, seed);
}

enum class Activation { kTanh, kSigmoid, kRelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct BiasMlpArchitecture {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden;  // empty means h(w; x) = W^T x + b
  std::size_t output_dim = 1;
  Activation activation = Activation::kTanh;

  std::size_t parameter_count() const;
};

// Fully connected network with squared loss f(w; i) = 1/2 ||h(w; i) - y_i||^2.
//
// Flattened parameter layout, layer by layer: weight matrix (fan_out x fan_in,
// row-major) followed by that layer's bias. The output layer comes last, so the
// final output_dim entries of w are exactly the final bias b.
class BiasMlpProblem final : public FiniteSumProblem {
 public:
  double value(const Vector& w, std::size_t i) const override;
  void gradient(const Vector& w, std::size_t i, Vector& out) const override;
  double component_lower_bound(std::size_t i) const override;
  bool is_smooth() const override { return arch_.activation != Activation::kRelu; }
  Vector initial_point() const override { return init_; }
  std::string kind() const override;

  const BiasMlpArchitecture& architecture() const noexcept { return arch_; }
  const Matrix& inputs() const noexcept { return inputs_; }
  const Matrix& labels() const noexcept { return labels_; }

  // Network output h(w; i).
  Vector predict(const Vector& w, std::size_t i) const;

  // inputs: n x input_dim, labels: n x output_dim. Initial point drawn from
  // U[-1/sqrt(fan_in), 1/sqrt(fan_in)] under init_seed.
  static std::shared_ptr<const BiasMlpProblem> build(const BiasMlpArchitecture& arch, Matrix inputs,
                                                     Matrix labels, std::uint64_t init_seed);

  // Inputs ~ N(0, 1); labels produced by a teacher network of the same
  // architecture, so a zero-loss solution (the teacher) exists and is recorded
  // as w_star.
  static std::shared_ptr<const BiasMlpProblem> teacher(const BiasMlpArchitecture& arch,
                                                       std::size_t samples,
                                                       std::uint64_t data_seed,
                                                       std::uint64_t init_seed);

 private:
  BiasMlpProblem(BiasMlpArchitecture arch, Matrix inputs, Matrix labels, Vector init,
                 GroundTruth truth, nlohmann::json descriptor);

  // Forward pass; fills per-layer pre-activations and activations.
  void forward(const Vector& w, std::size_t i, std::vector<Vector>& pre,
               std::vector<Vector>& act) const;

  BiasMlpArchitecture arch_;
  std::vector<std::size_t> layer_sizes_;  // input, hidden..., output
  std::vector<std::size_t> offsets_;      // start of each layer's weight block
  Matrix inputs_;
  Matrix labels_;
  Vector init_;
};

inline std::shared_ptr<const BiasMlpProblem> build_bias_mlp(const BiasMlpArchitecture& arch,
                                                            Matrix inputs, Matrix labels,
                                                            std::uint64_t seed) {
  return BiasMlpProblem::build(arch, std::move(inputs), std::move(labels), seed);
}

// Seeded U[-1/sqrt(fan_in), 1/sqrt(fan_in)] weights and biases.
Vector init_mlp_weights(const BiasMlpArchitecture& arch, std::uint64_t seed);

// Rebuild a problem from its JSON description. Supported kinds:
//   {"kind":"least_squares","rows":[[...],...],"targets":[...]}
//   {"kind":"interpolating","n":20,"d":50,"seed":1}
//   {"kind":"bias_mlp","input_dim":m,"hidden":[...],"output_dim":c,
//    "activation":"tanh","init_seed":s, then either "inputs"/"labels" arrays
//    or "samples":n,"data_seed":s for a teacher-generated data set}
// Throws ConfigError on malformed documents.
std::shared_ptr<const FiniteSumProblem> load_problem(const nlohmann::json& doc);

}  // namespace shufflepl

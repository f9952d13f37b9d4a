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

#include <fmt/format.h>

#include "shufflepl/errors.hpp"
#include "shufflepl/problems.hpp"

namespace shufflepl {

namespace {

Matrix matrix_from_json(const nlohmann::json& doc, const char* field) {
  if (!doc.contains(field) || !doc.at(field).is_array() || doc.at(field).empty()) {
    throw ConfigError(fmt::format("problem field '{}' must be a nonempty array of rows", field));
  }
  const auto& rows = doc.at(field);
  const std::size_t cols = rows.at(0).size();
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!rows[r].is_array() || rows[r].size() != cols) {
      throw ConfigError(fmt::format("problem field '{}' row {} has wrong length", field, r));
    }
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
  }
  return m;
}

BiasMlpArchitecture arch_from_json(const nlohmann::json& doc) {
  BiasMlpArchitecture arch;
  arch.input_dim = doc.at("input_dim").get<std::size_t>();
  arch.hidden = doc.value("hidden", std::vector<std::size_t>{});
  arch.output_dim = doc.at("output_dim").get<std::size_t>();
  arch.activation = activation_from_string(doc.value("activation", std::string("tanh")));
  return arch;
}

}  // namespace

std::shared_ptr<const FiniteSumProblem> load_problem(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("kind")) {
    throw ConfigError("problem document must be an object with a 'kind' field");
  }
  const auto kind = doc.at("kind").get<std::string>();
  try {
    if (kind == "least_squares") {
      Matrix rows = matrix_from_json(doc, "rows");
      const auto targets = doc.at("targets").get<std::vector<double>>();
      Vector b = Eigen::Map<const Vector>(targets.data(), static_cast<Eigen::Index>(targets.size()));
      return build_least_squares(std::move(rows), std::move(b));
    }
    if (kind == "interpolating") {
      return build_interpolating_generator(doc.at("n").get<std::size_t>(),
                                           doc.at("d").get<std::size_t>(),
                                           doc.value("seed", std::uint64_t{0}));
    }
    if (kind == "bias_mlp") {
      const BiasMlpArchitecture arch = arch_from_json(doc);
      const auto init_seed = doc.value("init_seed", std::uint64_t{0});
      if (doc.contains("inputs")) {
        return build_bias_mlp(arch, matrix_from_json(doc, "inputs"), matrix_from_json(doc, "labels"),
                              init_seed);
      }
      return BiasMlpProblem::teacher(arch, doc.at("samples").get<std::size_t>(),
                                     doc.value("data_seed", std::uint64_t{0}), init_seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed '{}' problem: {}", kind, e.what()));
  } catch (const ContractError& e) {
    throw ConfigError(fmt::format("invalid '{}' problem: {}", kind, e.what()));
  }
  throw ConfigError(
      fmt::format("unknown problem kind '{}' (expected least_squares, interpolating or bias_mlp)", kind));
}

}  // namespace shufflepl

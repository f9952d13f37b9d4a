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

#include "shufflepl/shuffling.hpp"

#include <numeric>
#include <utility>

#include <fmt/format.h>

#include "shufflepl/errors.hpp"
#include "shufflepl/random.hpp"

namespace shufflepl {

std::string scheme_code(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::kIncrementalGradient:
      return "ig";
    case SchemeKind::kSingleShuffle:
      return "ss";
    case SchemeKind::kRandomReshuffle:
      return "rr";
  }
  return "?";
}

ShufflingScheme parse_scheme(const std::string& code, std::uint64_t seed) {
  if (code == "ig") return ShufflingScheme::incremental();
  if (code == "ss") return ShufflingScheme::single_shuffle(seed);
  if (code == "rr") return ShufflingScheme::random_reshuffle(seed);
  throw ContractError(fmt::format("unknown scheme '{}' (expected ig, ss or rr)", code));
}

Permutation::Permutation(std::vector<std::size_t> zero_based) : order_(std::move(zero_based)) {
  detail::require(is_bijection(order_), "permutation must be a bijection of {1..n}");
}

std::vector<std::size_t> Permutation::one_based() const {
  std::vector<std::size_t> out(order_);
  for (auto& v : out) ++v;
  return out;
}

bool is_bijection(const std::vector<std::size_t>& zero_based) {
  std::vector<bool> seen(zero_based.size(), false);
  for (std::size_t v : zero_based) {
    if (v >= seen.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

Permutation make_permutation(const ShufflingScheme& scheme, std::size_t n, std::size_t epoch) {
  detail::require(n >= 1, "permutation size must be >= 1");
  detail::require(epoch >= 1, "epochs are numbered from 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (scheme.kind == SchemeKind::kIncrementalGradient) return Permutation(std::move(order));

  const std::uint64_t stream = scheme.kind == SchemeKind::kSingleShuffle ? 1 : epoch;
  Engine eng = make_engine(scheme.seed, stream);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(eng, i + 1));
    std::swap(order[i], order[j]);
  }
  return Permutation(std::move(order));
}

}  // namespace shufflepl

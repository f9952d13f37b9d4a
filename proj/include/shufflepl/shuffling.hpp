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
#include <string>
#include <vector>

namespace shufflepl {

enum class SchemeKind { kIncrementalGradient, kSingleShuffle, kRandomReshuffle };

// Sampling scheme for the epoch permutations.
//   IncrementalGradient: identity order every epoch.
//   SingleShuffle:       one seeded permutation, reused for every epoch.
//   RandomReshuffle:     an independent seeded permutation per epoch.
struct ShufflingScheme {
  SchemeKind kind = SchemeKind::kRandomReshuffle;
  std::uint64_t seed = 0;

  static ShufflingScheme incremental() { return {SchemeKind::kIncrementalGradient, 0}; }
  static ShufflingScheme single_shuffle(std::uint64_t seed) { return {SchemeKind::kSingleShuffle, seed}; }
  static ShufflingScheme random_reshuffle(std::uint64_t seed) {
    return {SchemeKind::kRandomReshuffle, seed};
  }

  friend bool operator==(const ShufflingScheme&, const ShufflingScheme&) = default;
};

// CLI spelling: ig, ss, rr.
std::string scheme_code(SchemeKind kind);
ShufflingScheme parse_scheme(const std::string& code, std::uint64_t seed);

// A bijection of {1, ..., n}. Stored 0-based; label() gives the 1-based value
// used in traces.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> zero_based);

  std::size_t size() const noexcept { return order_.size(); }
  // Component index (0-based) processed at inner step k (0-based).
  std::size_t operator[](std::size_t k) const { return order_[k]; }
  std::size_t label(std::size_t k) const { return order_[k] + 1; }

  const std::vector<std::size_t>& zero_based() const noexcept { return order_; }
  std::vector<std::size_t> one_based() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> order_;
};

bool is_bijection(const std::vector<std::size_t>& zero_based);

// Deterministic in (scheme, n, epoch). epoch is 1-based. Random schemes run
// Fisher-Yates on the substream stream_seed(seed, epoch) (SingleShuffle always
// uses the epoch-1 substream).
Permutation make_permutation(const ShufflingScheme& scheme, std::size_t n, std::size_t epoch);

}  // namespace shufflepl

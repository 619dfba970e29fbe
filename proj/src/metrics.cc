// Copyright 2026 The ReplyBank Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "replybank/metrics.h"

#include <map>
#include <unordered_set>
#include <utility>

#include "replybank/common.h"
#include "replybank/rng.h"

namespace replybank {

double UniquePer100(std::span<const std::string> suggestions,
                    std::size_t samples, std::uint64_t seed) {
  if (suggestions.size() < kBootstrapSize) {
    throw ValidationError("unique-per-100 needs at least 100 suggestions, got " +
                          std::to_string(suggestions.size()));
  }
  if (samples == 0) throw ValidationError("need at least one bootstrap sample");
  Rng rng(seed);
  double total = 0;
  std::unordered_set<std::string_view> distinct;
  for (std::size_t s = 0; s < samples; ++s) {
    distinct.clear();
    for (std::size_t i = 0; i < kBootstrapSize; ++i) {
      distinct.insert(suggestions[rng.UniformIndex(suggestions.size())]);
    }
    total += static_cast<double>(distinct.size());
  }
  return total / static_cast<double>(samples);
}

PairwiseScores PairwiseF1(std::span<const int> predicted,
                          std::span<const int> reference) {
  if (predicted.size() != reference.size()) {
    throw ValidationError("partitions cover different item counts");
  }
  // Pair counts from contingency cells: sum of C(n, 2).
  std::map<std::pair<int, int>, std::int64_t> cells;
  std::map<int, std::int64_t> predicted_sizes;
  std::map<int, std::int64_t> reference_sizes;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (reference[i] < 0) continue;
    ++cells[{predicted[i], reference[i]}];
    ++predicted_sizes[predicted[i]];
    ++reference_sizes[reference[i]];
  }
  const auto pairs = [](std::int64_t n) { return n * (n - 1) / 2; };
  std::int64_t together_both = 0;
  std::int64_t together_predicted = 0;
  std::int64_t together_reference = 0;
  for (const auto& [key, n] : cells) together_both += pairs(n);
  for (const auto& [key, n] : predicted_sizes) together_predicted += pairs(n);
  for (const auto& [key, n] : reference_sizes) together_reference += pairs(n);

  PairwiseScores scores;
  scores.precision = together_predicted == 0
                         ? 1.0
                         : static_cast<double>(together_both) /
                               static_cast<double>(together_predicted);
  scores.recall = together_reference == 0
                      ? 1.0
                      : static_cast<double>(together_both) /
                            static_cast<double>(together_reference);
  const double denominator = scores.precision + scores.recall;
  scores.f1 = denominator == 0
                  ? 0.0
                  : 2 * scores.precision * scores.recall / denominator;
  return scores;
}

}  // namespace replybank

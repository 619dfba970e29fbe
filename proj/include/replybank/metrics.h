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

#ifndef REPLYBANK_METRICS_H_
#define REPLYBANK_METRICS_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace replybank {

inline constexpr std::size_t kBootstrapSize = 100;

// Mean number of distinct texts in `samples` bootstrap draws of 100
// suggestions (with replacement). Needs at least 100 suggestions.
double UniquePer100(std::span<const std::string> suggestions,
                    std::size_t samples, std::uint64_t seed);

struct PairwiseScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Pair-counting agreement between a predicted and a reference partition of
// the same items. Labels are arbitrary integers; items with a negative
// reference label are ignored.
PairwiseScores PairwiseF1(std::span<const int> predicted,
                          std::span<const int> reference);

}  // namespace replybank

#endif  // REPLYBANK_METRICS_H_

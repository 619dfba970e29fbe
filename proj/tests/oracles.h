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

#ifndef REPLYBANK_TESTS_ORACLES_H_
#define REPLYBANK_TESTS_ORACLES_H_

// Independent reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>
#include <vector>

#include "replybank/encode.h"
#include "replybank/rng.h"
#include "replybank/simcluster.h"

namespace replybank::oracle {

// Dense complete-linkage clustering, O(n^3) per merge: every step recomputes
// the linkage of every cluster pair from scratch.
inline std::vector<std::vector<int>> NaiveCompleteLinkage(
    const std::vector<std::vector<double>>& dense, double threshold) {
  const int n = static_cast<int>(dense.size());
  std::vector<std::vector<int>> clusters;
  for (int i = 0; i < n; ++i) clusters.push_back({i});
  while (true) {
    bool found = false;
    std::tuple<double, int, int> best{};
    std::size_t best_a = 0, best_b = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        double linkage = 0;
        for (int i : clusters[a]) {
          for (int j : clusters[b]) linkage = std::max(linkage, dense[i][j]);
        }
        if (linkage > threshold) continue;
        const int min_a = clusters[a].front(), min_b = clusters[b].front();
        const std::tuple<double, int, int> key{linkage, std::min(min_a, min_b),
                                               std::max(min_a, min_b)};
        if (!found || key < best) {
          found = true;
          best = key;
          best_a = a;
          best_b = b;
        }
      }
    }
    if (!found) break;
    clusters[best_a].insert(clusters[best_a].end(), clusters[best_b].begin(),
                            clusters[best_b].end());
    std::sort(clusters[best_a].begin(), clusters[best_a].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_b));
  }
  std::sort(clusters.begin(), clusters.end(), [](const auto& x, const auto& y) {
    if (x.size() != y.size()) return x.size() > y.size();
    return x.front() < y.front();
  });
  return clusters;
}

struct RandomDistances {
  std::vector<std::vector<double>> dense;
  std::vector<SimilarityScore> scores;
};

// Random sparse score set over n points. Probabilities are drawn from a
// coarse grid so that equal distances (and ties at the threshold) occur.
inline RandomDistances MakeRandomDistances(Rng& rng, int n, double density) {
  RandomDistances out;
  out.dense.assign(n, std::vector<double>(n, 1.0));
  for (int i = 0; i < n; ++i) out.dense[i][i] = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.UniformReal() >= density) continue;
      const double prob = static_cast<double>(rng.UniformIndex(21)) / 20.0;
      out.scores.push_back({{i, j}, prob});
      out.dense[i][j] = out.dense[j][i] = 1.0 - prob;
    }
  }
  return out;
}

inline std::vector<std::vector<int>> Members(const std::vector<Cluster>& clusters) {
  std::vector<std::vector<int>> out;
  for (const Cluster& c : clusters) out.emplace_back(c.member_ids.begin(), c.member_ids.end());
  return out;
}

// Exhaustive cosine KNN straight from the definition.
inline std::set<CandidatePair> BruteForceKnnPairs(
    const std::vector<std::vector<double>>& rows, std::size_t k) {
  auto norm = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  std::set<CandidatePair> pairs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (norm(rows[i]) == 0) continue;
    std::vector<std::pair<double, std::size_t>> others;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (j == i || norm(rows[j]) == 0) continue;
      double dot = 0;
      for (std::size_t d = 0; d < rows[i].size(); ++d) dot += rows[i][d] * rows[j][d];
      others.emplace_back(1 - dot / (norm(rows[i]) * norm(rows[j])), j);
    }
    std::sort(others.begin(), others.end());
    for (std::size_t m = 0; m < std::min(k, others.size()); ++m) {
      pairs.insert(MakePair(static_cast<ResponseId>(i),
                            static_cast<ResponseId>(others[m].second)));
    }
  }
  return pairs;
}

// Label-smoothed cross-entropy written out densely: targets (1-t) on the
// label plus t/K everywhere, log-probabilities via log-sum-exp.
inline double SmoothedCrossEntropy(const std::vector<double>& weights,
                                   const std::vector<double>& bias,
                                   const std::vector<std::vector<double>>& inputs,
                                   const std::vector<int>& labels, double t) {
  const std::size_t classes = bias.size();
  const std::size_t dim = inputs.empty() ? 0 : inputs[0].size();
  double total = 0;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    std::vector<double> logits(classes);
    for (std::size_t k = 0; k < classes; ++k) {
      logits[k] = bias[k];
      for (std::size_t d = 0; d < dim; ++d) logits[k] += weights[k * dim + d] * inputs[n][d];
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0;
    for (double z : logits) sum += std::exp(z - peak);
    const double log_norm = peak + std::log(sum);
    for (std::size_t k = 0; k < classes; ++k) {
      const double target = (static_cast<int>(k) == labels[n] ? 1.0 - t : 0.0) +
                            t / static_cast<double>(classes);
      total -= target * (logits[k] - log_norm);
    }
  }
  return total / static_cast<double>(inputs.size());
}

}  // namespace replybank::oracle

#endif  // REPLYBANK_TESTS_ORACLES_H_

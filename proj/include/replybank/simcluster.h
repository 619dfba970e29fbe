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

#ifndef REPLYBANK_SIMCLUSTER_H_
#define REPLYBANK_SIMCLUSTER_H_

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "replybank/common.h"
#include "replybank/corpus.h"
#include "replybank/encode.h"

namespace replybank {

inline constexpr double kDefaultMergeThreshold = 0.25;

struct SimilarityScore {
  CandidatePair pair;
  double prob_similar = 0;
};

// Reads `idA<TAB>idB<TAB>probSimilar` rows. Every row must name a canonical
// candidate pair with ids below n and a probability in [0, 1].
std::vector<SimilarityScore> LoadScores(std::span<const CandidatePair> candidates,
                                        std::size_t n, const std::string& path);
std::vector<SimilarityScore> ParseScores(
    std::span<const CandidatePair> candidates, std::size_t n,
    std::string_view contents, std::string_view source = "scores");
void WriteScoresTsv(std::span<const SimilarityScore> scores,
                    const std::string& path);

// Built-in scorer: token-set Jaccard similarity of the two normalized texts.
double TokenJaccard(std::string_view a, std::string_view b);
std::vector<SimilarityScore> JaccardScores(
    std::span<const CandidatePair> candidates,
    std::span<const ResponseRecord> records);

// Symmetric sparse dissimilarities. Only scored pairs are stored; every other
// off-diagonal pair reads as 1.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(std::size_t n) : n_(n) {}

  std::size_t size() const { return n_; }
  std::size_t stored_count() const { return entries_.size(); }

  // Stores 1 - prob_similar for the pair. Duplicates are rejected.
  void Set(CandidatePair pair, double distance);
  double Get(ResponseId i, ResponseId j) const;
  bool IsStored(ResponseId i, ResponseId j) const;

  // Stored entries in ascending pair order.
  std::vector<std::pair<CandidatePair, double>> Entries() const;

 private:
  static std::uint64_t Key(CandidatePair pair);

  std::size_t n_;
  std::unordered_map<std::uint64_t, double> entries_;
};

DistanceMatrix BuildDistanceMatrix(std::size_t n,
                                   std::span<const SimilarityScore> scores);

struct Cluster {
  ClusterId cluster_id = 0;
  std::vector<ResponseId> member_ids;  // ascending
  ResponseId centroid_id = 0;
};

// Threshold-constrained complete-linkage agglomeration. Starting from
// singletons, repeatedly merges the admissible cluster pair with the smallest
// complete-linkage distance (maximum cross-pair D), breaking ties by the
// (smaller min member id, larger min member id) pair. A pair is admissible
// when its linkage is at most `threshold`. Stops when nothing is admissible.
//
// Output is ordered by member count descending, then smallest member id;
// cluster ids are positions in that order. With `records`, the centroid is
// the most frequent member (ties: lexicographically smallest text);
// otherwise it is the smallest member id.
std::vector<Cluster> Agglomerate(const DistanceMatrix& distances,
                                 double threshold,
                                 std::span<const ResponseRecord> records = {});

// Total occurrence count over a cluster's members.
std::int64_t OccurrenceCount(const Cluster& cluster,
                             std::span<const ResponseRecord> records);

struct ClusterStats {
  std::size_t num_clusters = 0;
  double singleton_fraction = 0;
  std::size_t largest_cluster_size = 0;
  // coverage_of_top_k[k-1]: share of all doctor turns covered by the k
  // clusters with the most occurrences.
  std::vector<double> coverage_of_top_k;

  double CoverageOfTopK(std::size_t k) const;
};

// total_doctor_turns is the denominator for coverage.
ClusterStats ComputeClusterStats(std::span<const Cluster> clusters,
                                 std::span<const ResponseRecord> records,
                                 std::int64_t total_doctor_turns);

// clusters.json: [{"clusterId", "centroidId", "members"}].
std::string ClustersToJson(std::span<const Cluster> clusters);
std::vector<Cluster> ClustersFromJson(std::string_view text);
void WriteClustersJson(std::span<const Cluster> clusters,
                       const std::string& path);
std::vector<Cluster> ReadClustersJson(const std::string& path);

}  // namespace replybank

#endif  // REPLYBANK_SIMCLUSTER_H_

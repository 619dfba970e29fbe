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

#include "replybank/simcluster.h"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace replybank {

using nlohmann::json;

std::vector<SimilarityScore> ParseScores(
    std::span<const CandidatePair> candidates, std::size_t n,
    std::string_view contents, std::string_view source) {
  const std::set<CandidatePair> candidate_set(candidates.begin(),
                                              candidates.end());
  std::set<CandidatePair> seen;
  std::vector<SimilarityScore> scores;
  std::istringstream in{std::string(contents)};
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const auto fail = [&](const std::string& why) {
      return ValidationError(std::string(source) + " line " +
                             std::to_string(line_number) + " (" + line +
                             "): " + why);
    };
    const auto fields = SplitTabs(line);
    if (fields.size() != 3) throw fail("expected idA, idB, probSimilar");
    SimilarityScore score;
    try {
      std::size_t used = 0;
      const std::string a(fields[0]), b(fields[1]), p(fields[2]);
      score.pair.a = std::stoi(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
      score.pair.b = std::stoi(b, &used);
      if (used != b.size()) throw std::invalid_argument(b);
      score.prob_similar = std::stod(p, &used);
      if (used != p.size()) throw std::invalid_argument(p);
    } catch (const std::exception&) {
      throw fail("unparseable field");
    }
    if (score.pair.a < 0 || score.pair.b < 0 ||
        static_cast<std::size_t>(score.pair.a) >= n ||
        static_cast<std::size_t>(score.pair.b) >= n) {
      throw fail("unknown response id");
    }
    if (score.pair.a >= score.pair.b) throw fail("pair is not canonical");
    if (!(score.prob_similar >= 0.0 && score.prob_similar <= 1.0)) {
      throw fail("probability outside [0, 1]");
    }
    if (!candidate_set.contains(score.pair)) {
      throw fail("pair is not a candidate pair");
    }
    if (!seen.insert(score.pair).second) throw fail("duplicate pair");
    scores.push_back(score);
  }
  return scores;
}

std::vector<SimilarityScore> LoadScores(std::span<const CandidatePair> candidates,
                                        std::size_t n,
                                        const std::string& path) {
  return ParseScores(candidates, n, ReadFile(path), path);
}

void WriteScoresTsv(std::span<const SimilarityScore> scores,
                    const std::string& path) {
  std::ostringstream out;
  out.precision(17);
  for (const SimilarityScore& score : scores) {
    out << score.pair.a << '\t' << score.pair.b << '\t' << score.prob_similar
        << '\n';
  }
  WriteFileAtomic(path, out.str());
}

double TokenJaccard(std::string_view a, std::string_view b) {
  const auto ta = SplitWhitespace(a);
  const auto tb = SplitWhitespace(b);
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t shared = 0;
  for (const std::string& token : sa) shared += sb.count(token);
  const std::size_t total = sa.size() + sb.size() - shared;
  return static_cast<double>(shared) / static_cast<double>(total);
}

std::vector<SimilarityScore> JaccardScores(
    std::span<const CandidatePair> candidates,
    std::span<const ResponseRecord> records) {
  std::vector<SimilarityScore> scores;
  scores.reserve(candidates.size());
  for (const CandidatePair& pair : candidates) {
    scores.push_back(
        {pair, TokenJaccard(records[pair.a].response.normalized_text,
                            records[pair.b].response.normalized_text)});
  }
  return scores;
}

std::uint64_t DistanceMatrix::Key(CandidatePair pair) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(pair.a)) << 32) |
         static_cast<std::uint32_t>(pair.b);
}

void DistanceMatrix::Set(CandidatePair pair, double distance) {
  if (pair.a < 0 || pair.a >= pair.b ||
      static_cast<std::size_t>(pair.b) >= n_) {
    throw ValidationError("invalid pair (" + std::to_string(pair.a) + "," +
                          std::to_string(pair.b) + ") for " +
                          std::to_string(n_) + " responses");
  }
  if (!entries_.emplace(Key(pair), distance).second) {
    throw ValidationError("duplicate distance for pair (" +
                          std::to_string(pair.a) + "," +
                          std::to_string(pair.b) + ")");
  }
}

double DistanceMatrix::Get(ResponseId i, ResponseId j) const {
  if (i == j) return 0.0;
  auto it = entries_.find(Key(MakePair(i, j)));
  return it == entries_.end() ? 1.0 : it->second;
}

bool DistanceMatrix::IsStored(ResponseId i, ResponseId j) const {
  return i != j && entries_.contains(Key(MakePair(i, j)));
}

std::vector<std::pair<CandidatePair, double>> DistanceMatrix::Entries() const {
  std::vector<std::pair<CandidatePair, double>> out;
  out.reserve(entries_.size());
  for (const auto& [key, distance] : entries_) {
    out.push_back({{static_cast<ResponseId>(key >> 32),
                    static_cast<ResponseId>(key & 0xffffffffu)},
                   distance});
  }
  std::sort(out.begin(), out.end());
  return out;
}

DistanceMatrix BuildDistanceMatrix(std::size_t n,
                                   std::span<const SimilarityScore> scores) {
  DistanceMatrix matrix(n);
  for (const SimilarityScore& score : scores) {
    matrix.Set(score.pair, 1.0 - score.prob_similar);
  }
  return matrix;
}

namespace {

// Cross-cluster link. Only pairs with D <= threshold are counted; a link is
// admissible once every cross pair is counted, and its linkage distance is
// then the largest counted D.
struct Link {
  double max_distance = 0;
  std::int64_t count = 0;
};

struct MergeCandidate {
  double distance;
  ResponseId low_min;
  ResponseId high_min;
  std::size_t slot_a;
  std::size_t slot_b;

  bool operator>(const MergeCandidate& other) const {
    return std::tie(distance, low_min, high_min) >
           std::tie(other.distance, other.low_min, other.high_min);
  }
};

}  // namespace

std::vector<Cluster> Agglomerate(const DistanceMatrix& distances,
                                 double threshold,
                                 std::span<const ResponseRecord> records) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ValidationError("merge threshold must lie in (0, 1)");
  }
  const std::size_t n = distances.size();
  if (!records.empty() && records.size() != n) {
    throw ValidationError("record count does not match distance matrix");
  }

  std::vector<std::vector<ResponseId>> members(n);
  std::vector<ResponseId> min_id(n);
  std::vector<bool> alive(n, true);
  std::vector<std::unordered_map<std::size_t, Link>> links(n);
  for (std::size_t i = 0; i < n; ++i) {
    members[i] = {static_cast<ResponseId>(i)};
    min_id[i] = static_cast<ResponseId>(i);
  }

  std::priority_queue<MergeCandidate, std::vector<MergeCandidate>,
                      std::greater<>>
      heap;
  const auto push_if_admissible = [&](std::size_t x, std::size_t y,
                                      const Link& link) {
    const auto product = static_cast<std::int64_t>(members[x].size()) *
                         static_cast<std::int64_t>(members[y].size());
    if (link.count != product) return;
    heap.push({link.max_distance, std::min(min_id[x], min_id[y]),
               std::max(min_id[x], min_id[y]), x, y});
  };

  for (const auto& [pair, distance] : distances.Entries()) {
    if (distance > threshold) continue;
    const auto a = static_cast<std::size_t>(pair.a);
    const auto b = static_cast<std::size_t>(pair.b);
    const Link link{distance, 1};
    links[a][b] = link;
    links[b][a] = link;
    push_if_admissible(a, b, link);
  }

  while (!heap.empty()) {
    const MergeCandidate top = heap.top();
    heap.pop();
    if (!alive[top.slot_a] || !alive[top.slot_b]) continue;

    const std::size_t a = top.slot_a;
    const std::size_t b = top.slot_b;
    const std::size_t merged = members.size();
    std::vector<ResponseId> joined;
    joined.reserve(members[a].size() + members[b].size());
    std::merge(members[a].begin(), members[a].end(), members[b].begin(),
               members[b].end(), std::back_inserter(joined));
    members.push_back(std::move(joined));
    min_id.push_back(std::min(min_id[a], min_id[b]));
    alive.push_back(true);
    alive[a] = false;
    alive[b] = false;

    std::unordered_map<std::size_t, Link> combined;
    for (std::size_t source : {a, b}) {
      for (const auto& [other, link] : links[source]) {
        if (other == a || other == b) continue;
        Link& target = combined[other];
        target.max_distance = std::max(target.max_distance, link.max_distance);
        target.count += link.count;
      }
    }
    links[a].clear();
    links[b].clear();
    for (const auto& [other, link] : combined) {
      links[other].erase(a);
      links[other].erase(b);
      links[other][merged] = link;
    }
    links.push_back(std::move(combined));
    // Sorted traversal keeps heap insertion order platform independent.
    std::vector<std::size_t> neighbors;
    for (const auto& [other, link] : links[merged]) neighbors.push_back(other);
    std::sort(neighbors.begin(), neighbors.end());
    for (std::size_t other : neighbors) {
      push_if_admissible(merged, other, links[merged].at(other));
    }
  }

  std::vector<Cluster> clusters;
  for (std::size_t slot = 0; slot < members.size(); ++slot) {
    if (!alive[slot]) continue;
    Cluster cluster;
    cluster.member_ids = std::move(members[slot]);
    cluster.centroid_id = cluster.member_ids.front();
    if (!records.empty()) {
      for (ResponseId id : cluster.member_ids) {
        const auto& candidate = records[id].response;
        const auto& best = records[cluster.centroid_id].response;
        if (candidate.count > best.count ||
            (candidate.count == best.count &&
             candidate.normalized_text < best.normalized_text)) {
          cluster.centroid_id = id;
        }
      }
    }
    clusters.push_back(std::move(cluster));
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const Cluster& x, const Cluster& y) {
              if (x.member_ids.size() != y.member_ids.size()) {
                return x.member_ids.size() > y.member_ids.size();
              }
              return x.member_ids.front() < y.member_ids.front();
            });
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    clusters[i].cluster_id = static_cast<ClusterId>(i);
  }
  return clusters;
}

std::int64_t OccurrenceCount(const Cluster& cluster,
                             std::span<const ResponseRecord> records) {
  std::int64_t total = 0;
  for (ResponseId id : cluster.member_ids) {
    total += records[static_cast<std::size_t>(id)].response.count;
  }
  return total;
}

double ClusterStats::CoverageOfTopK(std::size_t k) const {
  if (k == 0 || coverage_of_top_k.empty()) return 0.0;
  return coverage_of_top_k[std::min(k, coverage_of_top_k.size()) - 1];
}

ClusterStats ComputeClusterStats(std::span<const Cluster> clusters,
                                 std::span<const ResponseRecord> records,
                                 std::int64_t total_doctor_turns) {
  ClusterStats stats;
  stats.num_clusters = clusters.size();
  if (clusters.empty()) return stats;
  std::size_t singletons = 0;
  std::vector<std::int64_t> occurrences;
  for (const Cluster& cluster : clusters) {
    if (cluster.member_ids.size() == 1) ++singletons;
    stats.largest_cluster_size =
        std::max(stats.largest_cluster_size, cluster.member_ids.size());
    occurrences.push_back(OccurrenceCount(cluster, records));
  }
  stats.singleton_fraction =
      static_cast<double>(singletons) / static_cast<double>(clusters.size());
  std::sort(occurrences.begin(), occurrences.end(), std::greater<>());
  std::int64_t running = 0;
  for (std::int64_t count : occurrences) {
    running += count;
    stats.coverage_of_top_k.push_back(
        total_doctor_turns > 0 ? static_cast<double>(running) /
                                     static_cast<double>(total_doctor_turns)
                               : 0.0);
  }
  return stats;
}

std::string ClustersToJson(std::span<const Cluster> clusters) {
  json out = json::array();
  for (const Cluster& cluster : clusters) {
    out.push_back({{"clusterId", cluster.cluster_id},
                   {"centroidId", cluster.centroid_id},
                   {"members", cluster.member_ids}});
  }
  return out.dump(1) + "\n";
}

std::vector<Cluster> ClustersFromJson(std::string_view text) {
  std::vector<Cluster> clusters;
  try {
    const json doc = json::parse(text);
    for (const json& entry : doc) {
      Cluster cluster;
      cluster.cluster_id = entry.at("clusterId").get<ClusterId>();
      cluster.centroid_id = entry.at("centroidId").get<ResponseId>();
      cluster.member_ids = entry.at("members").get<std::vector<ResponseId>>();
      if (cluster.member_ids.empty()) {
        throw ValidationError("cluster " + std::to_string(cluster.cluster_id) +
                              " has no members");
      }
      std::sort(cluster.member_ids.begin(), cluster.member_ids.end());
      clusters.push_back(std::move(cluster));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed clusters JSON: ") + e.what());
  }
  return clusters;
}

void WriteClustersJson(std::span<const Cluster> clusters,
                       const std::string& path) {
  WriteFileAtomic(path, ClustersToJson(clusters));
}

std::vector<Cluster> ReadClustersJson(const std::string& path) {
  return ClustersFromJson(ReadFile(path));
}

}  // namespace replybank

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

#ifndef REPLYBANK_RESPONSEBANK_H_
#define REPLYBANK_RESPONSEBANK_H_

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "replybank/common.h"
#include "replybank/corpus.h"
#include "replybank/simcluster.h"

namespace replybank {

struct ResponseClass {
  ClassId class_id = 0;
  std::string name;
  std::vector<ResponseId> member_response_ids;  // ascending
  std::string exemplar_text;
  std::vector<ClusterId> source_cluster_ids;  // in merge order

  bool operator==(const ResponseClass&) const = default;
};

// Curated response classes. `version` increases on every mutation;
// `structure_version` records the version of the last membership change, so
// a classifier trained at version v stays valid while
// structure_version <= v <= version.
class ResponseBank {
 public:
  const std::vector<ResponseClass>& classes() const { return classes_; }
  std::size_t size() const { return classes_.size(); }
  bool empty() const { return classes_.empty(); }
  std::int64_t version() const { return version_; }
  std::int64_t structure_version() const { return structure_version_; }

  const ResponseClass& at(ClassId id) const;
  bool Contains(ClassId id) const;
  // Class owning a response, if any.
  std::optional<ClassId> ClassOf(ResponseId response) const;

  ClassId CreateClass(std::string name, std::span<const ResponseId> members,
                      std::string exemplar, ClusterId source_cluster);
  // Adds members not already owned by another class. Returns how many were
  // added.
  std::size_t AddToClass(ClassId id, std::span<const ResponseId> members,
                         ClusterId source_cluster);
  void EditExemplar(ClassId id, std::string new_text);

  bool IsCompatibleWith(std::int64_t trained_version,
                        std::size_t num_classes) const;

  std::string ToJson() const;
  static ResponseBank FromJson(std::string_view text);
  void Save(const std::string& path) const;
  static ResponseBank Load(const std::string& path);

  bool operator==(const ResponseBank&) const = default;

 private:
  std::vector<ResponseClass> classes_;
  std::map<ResponseId, ClassId> owner_;
  std::int64_t version_ = 0;
  std::int64_t structure_version_ = 0;
};

// Text of a cluster's centroid response.
const std::string& CentroidText(const Cluster& cluster,
                                std::span<const ResponseRecord> records);

// One class per cluster, exemplar = centroid text, in cluster order.
ResponseBank AutoBank(std::span<const Cluster> clusters,
                      std::span<const ResponseRecord> records);

struct AssignTo {
  ClassId class_id = 0;
  bool operator==(const AssignTo&) const = default;
};
struct CreateNew {
  std::string name;
  bool operator==(const CreateNew&) const = default;
};
struct Skip {
  bool operator==(const Skip&) const = default;
};
using MergeAction = std::variant<AssignTo, CreateNew, Skip>;

struct MergeDecision {
  ClusterId cluster_id = 0;
  MergeAction action;
  std::string timestamp;  // ISO-8601, informational
  std::string annotator;
  bool operator==(const MergeDecision&) const = default;
};

std::string DecisionToJson(const MergeDecision& decision);
MergeDecision DecisionFromJson(std::string_view line);

struct QueueEntry {
  Cluster cluster;
  std::int64_t occurrence_count = 0;
};

// Cluster-at-a-time review. Decisions are an append-only log; replaying the
// log over the starting state reproduces the bank exactly.
class MergeSession {
 public:
  // Queue ordered by occurrence count descending, ties by cluster id.
  static MergeSession Start(std::span<const Cluster> clusters,
                            std::span<const ResponseRecord> records,
                            ResponseBank initial = {});

  const std::vector<QueueEntry>& queue() const { return queue_; }
  std::size_t cursor() const { return cursor_; }
  bool complete() const { return cursor_ >= queue_.size(); }
  const QueueEntry* Current() const;
  const std::vector<MergeDecision>& decisions() const { return decisions_; }
  const ResponseBank& bank() const { return bank_; }
  const ResponseBank& initial_bank() const { return initial_bank_; }

  // Applies a decision for the cursor cluster. Throws ValidationError and
  // leaves the session unchanged when the decision targets another cluster,
  // an unknown class, or the queue is exhausted.
  void Apply(const MergeDecision& decision);

  // Same as Apply, but calls `persist` with the decision before committing;
  // if persist throws, the session is unchanged.
  void Apply(const MergeDecision& decision,
             const std::function<void(const MergeDecision&)>& persist);

  std::size_t clusters_reviewed() const { return cursor_; }
  std::size_t classes_created() const;
  // Share of all occurrences in the queue now owned by some class.
  double LabeledCoverage() const;

  // Rebuilds from the starting state by re-applying every decision.
  MergeSession Replay(std::span<const MergeDecision> decisions) const;

 private:
  std::vector<QueueEntry> queue_;
  std::vector<ResponseRecord> records_;
  std::size_t cursor_ = 0;
  std::vector<MergeDecision> decisions_;
  ResponseBank bank_;
  ResponseBank initial_bank_;
};

std::vector<MergeDecision> ReadDecisionLog(const std::string& path);
// Appends one record and flushes it to disk.
void AppendDecisionLog(const std::string& path, const MergeDecision& decision);

struct LabeledExample {
  std::vector<std::string> context_tokens;
  ClassId class_id = 0;
};

struct LabeledExtraction {
  std::vector<LabeledExample> examples;
  std::int64_t doctor_turns = 0;
  std::int64_t labeled_turns = 0;

  double labeled_fraction() const {
    return doctor_turns == 0 ? 0.0
                             : static_cast<double>(labeled_turns) /
                                   static_cast<double>(doctor_turns);
  }
};

// Emits (context, class) for each doctor turn whose normalized text is a
// member of some class. Doctor turns at position 0 have no context; they
// count as doctor turns but never produce an example.
LabeledExtraction ExtractLabeledExamples(
    std::span<const Conversation> conversations, const ResponseBank& bank,
    std::span<const ResponseRecord> records, const ContextConfig& config);

// examples.bin: "RBEX" magic, u32 format version, u64 count, then per
// example u32 class id, u32 token count, and length-prefixed UTF-8 tokens.
// Little-endian throughout.
void WriteExamples(std::span<const LabeledExample> examples,
                   const std::string& path);
std::vector<LabeledExample> ReadExamples(const std::string& path);

}  // namespace replybank

#endif  // REPLYBANK_RESPONSEBANK_H_

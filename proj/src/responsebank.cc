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

#include "replybank/responsebank.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace replybank {

using nlohmann::json;

const ResponseClass& ResponseBank::at(ClassId id) const {
  if (!Contains(id)) {
    throw ValidationError("unknown class " + std::to_string(id));
  }
  return classes_[static_cast<std::size_t>(id)];
}

bool ResponseBank::Contains(ClassId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < classes_.size();
}

std::optional<ClassId> ResponseBank::ClassOf(ResponseId response) const {
  auto it = owner_.find(response);
  if (it == owner_.end()) return std::nullopt;
  return it->second;
}

ClassId ResponseBank::CreateClass(std::string name,
                                  std::span<const ResponseId> members,
                                  std::string exemplar,
                                  ClusterId source_cluster) {
  if (exemplar.empty()) throw ValidationError("exemplar text is empty");
  ResponseClass added;
  added.class_id = static_cast<ClassId>(classes_.size());
  added.name = std::move(name);
  added.exemplar_text = std::move(exemplar);
  added.source_cluster_ids = {source_cluster};
  for (ResponseId member : members) {
    if (!owner_.contains(member)) added.member_response_ids.push_back(member);
  }
  if (added.member_response_ids.empty()) {
    throw ValidationError("every member is already in another class");
  }
  std::sort(added.member_response_ids.begin(), added.member_response_ids.end());
  for (ResponseId member : added.member_response_ids) {
    owner_[member] = added.class_id;
  }
  classes_.push_back(std::move(added));
  structure_version_ = ++version_;
  return classes_.back().class_id;
}

std::size_t ResponseBank::AddToClass(ClassId id,
                                     std::span<const ResponseId> members,
                                     ClusterId source_cluster) {
  if (!Contains(id)) {
    throw ValidationError("unknown class " + std::to_string(id));
  }
  ResponseClass& target = classes_[static_cast<std::size_t>(id)];
  std::size_t added = 0;
  for (ResponseId member : members) {
    if (owner_.emplace(member, id).second) {
      target.member_response_ids.push_back(member);
      ++added;
    }
  }
  std::sort(target.member_response_ids.begin(),
            target.member_response_ids.end());
  target.source_cluster_ids.push_back(source_cluster);
  structure_version_ = ++version_;
  return added;
}

void ResponseBank::EditExemplar(ClassId id, std::string new_text) {
  if (!Contains(id)) {
    throw ValidationError("unknown class " + std::to_string(id));
  }
  if (SplitWhitespace(new_text).empty()) {
    throw ValidationError("exemplar text is empty");
  }
  classes_[static_cast<std::size_t>(id)].exemplar_text = std::move(new_text);
  ++version_;
}

bool ResponseBank::IsCompatibleWith(std::int64_t trained_version,
                                    std::size_t num_classes) const {
  return num_classes == classes_.size() &&
         structure_version_ <= trained_version && trained_version <= version_;
}

std::string ResponseBank::ToJson() const {
  json classes = json::array();
  for (const ResponseClass& c : classes_) {
    classes.push_back({{"classId", c.class_id},
                       {"name", c.name},
                       {"exemplarText", c.exemplar_text},
                       {"members", c.member_response_ids},
                       {"sourceClusters", c.source_cluster_ids}});
  }
  json doc = {{"version", version_},
              {"structureVersion", structure_version_},
              {"classes", std::move(classes)}};
  return doc.dump(1) + "\n";
}

ResponseBank ResponseBank::FromJson(std::string_view text) {
  ResponseBank bank;
  try {
    const json doc = json::parse(text);
    bank.version_ = doc.at("version").get<std::int64_t>();
    bank.structure_version_ =
        doc.value("structureVersion", bank.version_);
    for (const json& entry : doc.at("classes")) {
      ResponseClass c;
      c.class_id = entry.at("classId").get<ClassId>();
      c.name = entry.value("name", std::string());
      c.exemplar_text = entry.at("exemplarText").get<std::string>();
      c.member_response_ids =
          entry.at("members").get<std::vector<ResponseId>>();
      c.source_cluster_ids =
          entry.value("sourceClusters", std::vector<ClusterId>{});
      if (c.class_id != static_cast<ClassId>(bank.classes_.size())) {
        throw ValidationError("class ids must be dense and ordered");
      }
      if (c.member_response_ids.empty() || c.exemplar_text.empty()) {
        throw ValidationError("class " + std::to_string(c.class_id) +
                              " needs members and an exemplar");
      }
      std::sort(c.member_response_ids.begin(), c.member_response_ids.end());
      for (ResponseId member : c.member_response_ids) {
        if (!bank.owner_.emplace(member, c.class_id).second) {
          throw ValidationError("response " + std::to_string(member) +
                                " belongs to two classes");
        }
      }
      bank.classes_.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed bank JSON: ") + e.what());
  }
  if (bank.structure_version_ > bank.version_) {
    throw ValidationError("structureVersion exceeds version");
  }
  return bank;
}

void ResponseBank::Save(const std::string& path) const {
  WriteFileAtomic(path, ToJson());
}

ResponseBank ResponseBank::Load(const std::string& path) {
  return FromJson(ReadFile(path));
}

const std::string& CentroidText(const Cluster& cluster,
                                std::span<const ResponseRecord> records) {
  if (cluster.centroid_id < 0 ||
      static_cast<std::size_t>(cluster.centroid_id) >= records.size()) {
    throw ValidationError("centroid " + std::to_string(cluster.centroid_id) +
                          " is not a known response");
  }
  return records[static_cast<std::size_t>(cluster.centroid_id)]
      .response.normalized_text;
}

ResponseBank AutoBank(std::span<const Cluster> clusters,
                      std::span<const ResponseRecord> records) {
  ResponseBank bank;
  for (const Cluster& cluster : clusters) {
    const std::string& centroid = CentroidText(cluster, records);
    bank.CreateClass(centroid, cluster.member_ids, centroid,
                     cluster.cluster_id);
  }
  return bank;
}

std::string DecisionToJson(const MergeDecision& decision) {
  json doc = {{"clusterId", decision.cluster_id}};
  std::visit(
      [&](const auto& action) {
        using T = std::decay_t<decltype(action)>;
        if constexpr (std::is_same_v<T, AssignTo>) {
          doc["action"] = "assign";
          doc["classId"] = action.class_id;
        } else if constexpr (std::is_same_v<T, CreateNew>) {
          doc["action"] = "create";
          doc["name"] = action.name;
        } else {
          doc["action"] = "skip";
        }
      },
      decision.action);
  doc["timestamp"] = decision.timestamp;
  doc["annotator"] = decision.annotator;
  return doc.dump();
}

MergeDecision DecisionFromJson(std::string_view line) {
  MergeDecision decision;
  try {
    const json doc = json::parse(line);
    decision.cluster_id = doc.at("clusterId").get<ClusterId>();
    const std::string action = doc.at("action").get<std::string>();
    if (action == "assign") {
      decision.action = AssignTo{doc.at("classId").get<ClassId>()};
    } else if (action == "create") {
      decision.action = CreateNew{doc.value("name", std::string())};
    } else if (action == "skip") {
      decision.action = Skip{};
    } else {
      throw ValidationError("unknown merge action '" + action + "'");
    }
    decision.timestamp = doc.value("timestamp", std::string());
    decision.annotator = doc.value("annotator", std::string());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed decision: ") + e.what());
  }
  return decision;
}

MergeSession MergeSession::Start(std::span<const Cluster> clusters,
                                 std::span<const ResponseRecord> records,
                                 ResponseBank initial) {
  MergeSession session;
  session.records_.assign(records.begin(), records.end());
  for (const Cluster& cluster : clusters) {
    CentroidText(cluster, records);
    session.queue_.push_back({cluster, OccurrenceCount(cluster, records)});
  }
  std::stable_sort(session.queue_.begin(), session.queue_.end(),
                   [](const QueueEntry& a, const QueueEntry& b) {
                     if (a.occurrence_count != b.occurrence_count) {
                       return a.occurrence_count > b.occurrence_count;
                     }
                     return a.cluster.cluster_id < b.cluster.cluster_id;
                   });
  session.bank_ = initial;
  session.initial_bank_ = std::move(initial);
  return session;
}

const QueueEntry* MergeSession::Current() const {
  return complete() ? nullptr : &queue_[cursor_];
}

void MergeSession::Apply(const MergeDecision& decision) {
  Apply(decision, [](const MergeDecision&) {});
}

void MergeSession::Apply(
    const MergeDecision& decision,
    const std::function<void(const MergeDecision&)>& persist) {
  const QueueEntry* current = Current();
  if (current == nullptr) throw ValidationError("merge session is complete");
  if (decision.cluster_id != current->cluster.cluster_id) {
    throw ValidationError("decision for cluster " +
                          std::to_string(decision.cluster_id) +
                          " but the cursor is at cluster " +
                          std::to_string(current->cluster.cluster_id));
  }
  ResponseBank next = bank_;
  const Cluster& cluster = current->cluster;
  if (const auto* assign = std::get_if<AssignTo>(&decision.action)) {
    next.AddToClass(assign->class_id, cluster.member_ids, cluster.cluster_id);
  } else if (const auto* create = std::get_if<CreateNew>(&decision.action)) {
    const std::string& centroid = CentroidText(cluster, records_);
    next.CreateClass(create->name.empty() ? centroid : create->name,
                     cluster.member_ids, centroid, cluster.cluster_id);
  }
  persist(decision);
  bank_ = std::move(next);
  decisions_.push_back(decision);
  ++cursor_;
}

std::size_t MergeSession::classes_created() const {
  return bank_.size() - initial_bank_.size();
}

double MergeSession::LabeledCoverage() const {
  std::int64_t total = 0;
  std::int64_t labeled = 0;
  for (const QueueEntry& entry : queue_) {
    for (ResponseId id : entry.cluster.member_ids) {
      const std::int64_t count = records_[static_cast<std::size_t>(id)].response.count;
      total += count;
      if (bank_.ClassOf(id)) labeled += count;
    }
  }
  return total == 0 ? 0.0
                    : static_cast<double>(labeled) / static_cast<double>(total);
}

MergeSession MergeSession::Replay(
    std::span<const MergeDecision> decisions) const {
  MergeSession replayed;
  replayed.queue_ = queue_;
  replayed.records_ = records_;
  replayed.bank_ = initial_bank_;
  replayed.initial_bank_ = initial_bank_;
  for (const MergeDecision& decision : decisions) replayed.Apply(decision);
  return replayed;
}

std::vector<MergeDecision> ReadDecisionLog(const std::string& path) {
  std::istringstream in(ReadFile(path));
  std::vector<MergeDecision> decisions;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (SplitWhitespace(line).empty()) continue;
    try {
      decisions.push_back(DecisionFromJson(line));
    } catch (const ValidationError& e) {
      throw ValidationError(path + " line " + std::to_string(line_number) +
                            ": " + e.what());
    }
  }
  return decisions;
}

void AppendDecisionLog(const std::string& path, const MergeDecision& decision) {
  const std::string line = DecisionToJson(decision) + "\n";
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) {
    throw IoError("cannot open decision log " + path + ": " +
                  std::strerror(errno));
  }
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int saved = errno;
      ::close(fd);
      throw IoError("cannot append to " + path + ": " + std::strerror(saved));
    }
    written += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) throw IoError("cannot sync decision log " + path);
}

LabeledExtraction ExtractLabeledExamples(
    std::span<const Conversation> conversations, const ResponseBank& bank,
    std::span<const ResponseRecord> records, const ContextConfig& config) {
  if (bank.empty()) throw ValidationError("response bank is empty");
  std::unordered_map<std::string, ClassId> class_of_text;
  for (const ResponseClass& c : bank.classes()) {
    for (ResponseId member : c.member_response_ids) {
      if (member < 0 || static_cast<std::size_t>(member) >= records.size()) {
        throw ValidationError("bank member " + std::to_string(member) +
                              " is not a known response");
      }
      class_of_text.emplace(
          records[static_cast<std::size_t>(member)].response.normalized_text,
          c.class_id);
    }
  }
  LabeledExtraction result;
  for (const Conversation& conversation : conversations) {
    const std::vector<NormalizedTurn> turns = NormalizeTurns(conversation);
    for (std::size_t i = 0; i < turns.size(); ++i) {
      if (turns[i].speaker != Speaker::kDoctor) continue;
      ++result.doctor_turns;
      auto it = class_of_text.find(JoinTokens(turns[i].tokens));
      if (it == class_of_text.end()) continue;
      ++result.labeled_turns;
      if (i == 0) continue;
      result.examples.push_back({AssembleContext(turns, i, config), it->second});
    }
  }
  return result;
}

namespace {

void PutU32(std::string& out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(value >> (8 * i)));
}

void PutU64(std::string& out, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(value >> (8 * i)));
}

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string source)
      : data_(data), source_(std::move(source)) {}

  std::uint64_t Get(int bytes) {
    Need(static_cast<std::size_t>(bytes));
    std::uint64_t value = 0;
    for (int i = 0; i < bytes; ++i) {
      value |= static_cast<std::uint64_t>(
                   static_cast<unsigned char>(data_[pos_ + i]))
               << (8 * i);
    }
    pos_ += static_cast<std::size_t>(bytes);
    return value;
  }

  std::string_view Bytes(std::size_t n) {
    Need(n);
    std::string_view out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void Need(std::size_t n) const {
    if (pos_ + n > data_.size()) {
      throw ValidationError(source_ + ": truncated at byte " +
                            std::to_string(pos_));
    }
  }

  std::string_view data_;
  std::string source_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kExamplesMagic = "RBEX";
constexpr std::uint32_t kExamplesFormat = 1;

}  // namespace

void WriteExamples(std::span<const LabeledExample> examples,
                   const std::string& path) {
  std::string out(kExamplesMagic);
  PutU32(out, kExamplesFormat);
  PutU64(out, examples.size());
  for (const LabeledExample& example : examples) {
    PutU32(out, static_cast<std::uint32_t>(example.class_id));
    PutU32(out, static_cast<std::uint32_t>(example.context_tokens.size()));
    for (const std::string& token : example.context_tokens) {
      PutU32(out, static_cast<std::uint32_t>(token.size()));
      out += token;
    }
  }
  WriteFileAtomic(path, out);
}

std::vector<LabeledExample> ReadExamples(const std::string& path) {
  const std::string data = ReadFile(path);
  ByteReader reader(data, path);
  if (reader.Bytes(4) != kExamplesMagic) {
    throw ValidationError(path + ": not an examples file");
  }
  if (reader.Get(4) != kExamplesFormat) {
    throw ValidationError(path + ": unsupported examples format");
  }
  const std::uint64_t count = reader.Get(8);
  std::vector<LabeledExample> examples;
  for (std::uint64_t i = 0; i < count; ++i) {
    LabeledExample example;
    example.class_id = static_cast<ClassId>(reader.Get(4));
    const std::uint64_t tokens = reader.Get(4);
    for (std::uint64_t t = 0; t < tokens; ++t) {
      const std::uint64_t length = reader.Get(4);
      example.context_tokens.emplace_back(reader.Bytes(length));
    }
    examples.push_back(std::move(example));
  }
  if (!reader.done()) throw ValidationError(path + ": trailing bytes");
  return examples;
}

}  // namespace replybank

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

#include "replybank/service.h"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <regex>

#include "httplib.h"

namespace replybank {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ApiResponse Error(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

std::string UtcTimestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm parts{};
  gmtime_r(&now, &parts);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &parts);
  return buffer;
}

bool ValidSessionId(const std::string& id) {
  static const std::regex kPattern("[A-Za-z0-9_-]{1,64}");
  return std::regex_match(id, kPattern);
}

json ClassSummary(const ResponseClass& c) {
  return {{"classId", c.class_id},
          {"name", c.name},
          {"exemplarText", c.exemplar_text},
          {"memberCount", c.member_response_ids.size()}};
}

}  // namespace

SuggestionService::SuggestionService(std::shared_ptr<const SuggestionModel> model,
                                     std::string model_version,
                                     ResponseBank bank,
                                     std::vector<ResponseRecord> records,
                                     std::vector<Cluster> clusters,
                                     ServiceConfig config)
    : model_(std::move(model)),
      model_version_(std::move(model_version)),
      records_(std::move(records)),
      clusters_(std::move(clusters)),
      config_(std::move(config)),
      bank_(std::make_shared<const ResponseBank>(std::move(bank))) {}

std::unique_ptr<SuggestionService> SuggestionService::FromConfig(
    const ServiceConfig& config) {
  std::shared_ptr<const SuggestionModel> model;
  std::string model_version;
  if (!config.model_path.empty()) {
    const std::string bytes = ReadFile(config.model_path);
    model = std::make_shared<const SuggestionModel>(ParseCheckpoint(bytes));
    model_version = Sha256Hex(bytes).substr(0, 12);
  }
  ResponseBank bank;
  if (!config.bank_path.empty()) bank = ResponseBank::Load(config.bank_path);
  std::vector<ResponseRecord> records;
  if (!config.responses_path.empty()) {
    records = ReadResponsesTsv(config.responses_path);
  }
  std::vector<Cluster> clusters;
  if (!config.clusters_path.empty()) {
    clusters = ReadClustersJson(config.clusters_path);
  }
  if (!config.decision_log_dir.empty()) {
    fs::create_directories(config.decision_log_dir);
  }
  return std::make_unique<SuggestionService>(
      std::move(model), std::move(model_version), std::move(bank),
      std::move(records), std::move(clusters), config);
}

std::shared_ptr<const ResponseBank> SuggestionService::bank_snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return bank_;
}

ApiResponse SuggestionService::Suggest(const json& request) const {
  const auto started = std::chrono::steady_clock::now();
  if (!model_) return Error(503, "no model loaded");
  if (!request.is_object() || !request.contains("turns") ||
      !request.at("turns").is_array() || request.at("turns").empty()) {
    return Error(422, "body needs a non-empty 'turns' array");
  }
  std::size_t max_turns = kDefaultMaxTurns;
  bool include_probabilities = false;
  Conversation conversation;
  try {
    if (request.contains("maxTurns")) {
      const long long value = request.at("maxTurns").get<long long>();
      if (value < 1) return Error(422, "maxTurns must be at least 1");
      max_turns = static_cast<std::size_t>(value);
    }
    include_probabilities = request.value("includeProbabilities", false);
    json messages = json::array();
    for (const json& turn : request.at("turns")) {
      json message = {{"speaker", turn.at("speaker").get<std::string>()},
                      {"text", turn.at("text").get<std::string>()}};
      if (turn.contains("pii")) message["pii"] = turn.at("pii");
      messages.push_back(std::move(message));
    }
    conversation =
        ParseConversation(json{{"id", "request"}, {"messages", messages}}.dump());
  } catch (const json::exception& e) {
    return Error(422, std::string("malformed request: ") + e.what());
  } catch (const ValidationError& e) {
    return Error(422, e.what());
  }
  if (conversation.turns.back().speaker != Speaker::kPatient) {
    return Error(422, "the last turn must come from the patient");
  }

  const std::shared_ptr<const ResponseBank> bank = bank_snapshot();
  const ClassifierModel& classifier = model_->classifier;
  if (!bank->IsCompatibleWith(classifier.bank_version, classifier.num_classes)) {
    return Error(409, "model was trained on bank version " +
                          std::to_string(classifier.bank_version) +
                          ", live bank is at version " +
                          std::to_string(bank->version()) +
                          " (structure version " +
                          std::to_string(bank->structure_version()) + ")");
  }

  Prediction prediction;
  try {
    const std::vector<NormalizedTurn> turns = NormalizeTurns(conversation);
    const std::vector<std::string> context = AssembleContext(
        turns, turns.size(), {max_turns, config_.max_tokens});
    prediction = Predict(classifier, model_->extractor.Featurize(context));
  } catch (const ValidationError& e) {
    return Error(422, e.what());
  }
  const double threshold =
      config_.threshold_override.value_or(classifier.opt_out_threshold);
  const bool abstained = prediction.max_prob < threshold;

  json body = {{"abstained", abstained},
               {"maxProb", prediction.max_prob},
               {"bankVersion", bank->version()},
               {"modelVersion", model_version_}};
  if (abstained) {
    body["suggestion"] = nullptr;
  } else {
    body["suggestion"] = {
        {"classId", prediction.top_class_id},
        {"exemplarText", bank->at(prediction.top_class_id).exemplar_text}};
  }
  if (include_probabilities) body["probabilities"] = prediction.probabilities;
  body["latencyMs"] = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  return {200, std::move(body)};
}

ApiResponse SuggestionService::GetBank() const {
  return {200, json::parse(bank_snapshot()->ToJson())};
}

ApiResponse SuggestionService::PutExemplar(ClassId class_id,
                                           const json& request) {
  std::string text;
  try {
    text = request.at("exemplarText").get<std::string>();
  } catch (const json::exception&) {
    return Error(400, "body needs a string 'exemplarText'");
  }
  std::lock_guard writer(writer_mutex_);
  const std::shared_ptr<const ResponseBank> current = bank_snapshot();
  if (!current->Contains(class_id)) {
    return Error(404, "unknown class " + std::to_string(class_id));
  }
  if (SplitWhitespace(text).empty()) return Error(400, "exemplar text is empty");
  auto next = std::make_shared<ResponseBank>(*current);
  next->EditExemplar(class_id, text);
  if (!config_.bank_path.empty()) {
    try {
      next->Save(config_.bank_path);
    } catch (const IoError& e) {
      return Error(500, e.what());
    }
  }
  {
    std::lock_guard lock(snapshot_mutex_);
    bank_ = next;
  }
  return {200,
          {{"bankVersion", next->version()},
           {"class", ClassSummary(next->at(class_id))}}};
}

ApiResponse SuggestionService::GetBankStats() const {
  const std::shared_ptr<const ResponseBank> bank = bank_snapshot();
  std::size_t members = 0;
  std::int64_t covered = 0;
  std::int64_t total = 0;
  for (const ResponseRecord& record : records_) total += record.response.count;
  for (const ResponseClass& c : bank->classes()) {
    members += c.member_response_ids.size();
    for (ResponseId id : c.member_response_ids) {
      if (id >= 0 && static_cast<std::size_t>(id) < records_.size()) {
        covered += records_[static_cast<std::size_t>(id)].response.count;
      }
    }
  }
  json body = {{"numClasses", bank->size()},
               {"bankVersion", bank->version()},
               {"structureVersion", bank->structure_version()},
               {"memberResponses", members},
               {"frequentResponses", records_.size()},
               {"occurrenceCoverage",
                total == 0 ? 0.0
                           : static_cast<double>(covered) /
                                 static_cast<double>(total)}};
  if (!clusters_.empty() && !records_.empty()) {
    const ClusterStats stats = ComputeClusterStats(clusters_, records_, total);
    body["clusters"] = {{"numClusters", stats.num_clusters},
                        {"singletonFraction", stats.singleton_fraction},
                        {"largestClusterSize", stats.largest_cluster_size},
                        {"coverageOfTop10", stats.CoverageOfTopK(10)}};
  }
  return {200, std::move(body)};
}

ApiResponse SuggestionService::CreateSession(const json& request) {
  if (clusters_.empty() || records_.empty()) {
    return Error(503, "no clusters loaded");
  }
  std::unique_lock lock(sessions_mutex_);
  std::string id;
  try {
    id = request.is_object() ? request.value("id", std::string()) : std::string();
  } catch (const json::exception&) {
    return Error(422, "'id' must be a string");
  }
  if (id.empty()) {
    do {
      id = "s" + std::to_string(next_session_++);
    } while (sessions_.contains(id));
  }
  if (!ValidSessionId(id)) return Error(422, "invalid session id");
  if (sessions_.contains(id)) return Error(409, "session already open");

  auto state = std::make_unique<SessionState>(
      SessionState{MergeSession::Start(clusters_, records_), ""});
  if (!config_.decision_log_dir.empty()) {
    state->log_path = (fs::path(config_.decision_log_dir) / (id + ".ndjson")).string();
    if (fs::exists(state->log_path)) {
      try {
        state->session = state->session.Replay(ReadDecisionLog(state->log_path));
      } catch (const ValidationError& e) {
        return Error(422, std::string("cannot resume session: ") + e.what());
      }
    }
  }
  json body = SessionSummaryJson(*state);
  body["sessionId"] = id;
  sessions_.emplace(id, std::move(state));
  return {201, std::move(body)};
}

ApiResponse SuggestionService::NextCluster(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return Error(404, "unknown session");
  const MergeSession& session = it->second->session;
  json classes = json::array();
  for (const ResponseClass& c : session.bank().classes()) {
    classes.push_back(ClassSummary(c));
  }
  json body = {{"sessionId", session_id},
               {"cursor", session.cursor()},
               {"queueLength", session.queue().size()},
               {"complete", session.complete()},
               {"bankVersion", session.bank().version()},
               {"existingClasses", std::move(classes)}};
  if (const QueueEntry* entry = session.Current()) {
    json samples = json::array();
    for (ResponseId id : entry->cluster.member_ids) {
      if (samples.size() >= 10) break;
      samples.push_back(records_[static_cast<std::size_t>(id)].response.normalized_text);
    }
    body["clusterId"] = entry->cluster.cluster_id;
    body["centroidText"] = CentroidText(entry->cluster, records_);
    body["occurrenceCount"] = entry->occurrence_count;
    body["sampleMembers"] = std::move(samples);
  }
  return {200, std::move(body)};
}

ApiResponse SuggestionService::PostDecision(const std::string& session_id,
                                            const json& request) {
  std::unique_lock lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return Error(404, "unknown session");
  SessionState& state = *it->second;
  MergeSession& session = state.session;

  MergeDecision decision;
  std::size_t cursor = 0;
  try {
    cursor = request.at("cursor").get<std::size_t>();
    const std::string action = request.at("action").get<std::string>();
    if (action == "assign") {
      decision.action = AssignTo{request.at("classId").get<ClassId>()};
    } else if (action == "create") {
      decision.action = CreateNew{request.value("name", std::string())};
    } else if (action == "skip") {
      decision.action = Skip{};
    } else {
      return Error(422, "action must be assign, create, or skip");
    }
    decision.annotator = request.value("annotator", std::string());
    decision.timestamp = request.value("timestamp", UtcTimestamp());
  } catch (const json::exception& e) {
    return Error(422, std::string("malformed decision: ") + e.what());
  }
  if (cursor != session.cursor() || session.complete()) {
    json body = {{"error", "stale cursor"}, {"cursor", session.cursor()}};
    return {409, std::move(body)};
  }
  decision.cluster_id = session.Current()->cluster.cluster_id;
  if (request.contains("clusterId") &&
      request.at("clusterId") != json(decision.cluster_id)) {
    json body = {{"error", "decision targets a different cluster"},
                 {"cursor", session.cursor()},
                 {"clusterId", decision.cluster_id}};
    return {409, std::move(body)};
  }
  try {
    session.Apply(decision, [&](const MergeDecision& d) {
      if (!state.log_path.empty()) AppendDecisionLog(state.log_path, d);
    });
  } catch (const ValidationError& e) {
    return Error(422, e.what());
  } catch (const IoError& e) {
    return Error(500, e.what());
  }
  json body = SessionSummaryJson(state);
  body["sessionId"] = session_id;
  return {200, std::move(body)};
}

json SuggestionService::SessionSummaryJson(const SessionState& state) const {
  const MergeSession& session = state.session;
  return {{"cursor", session.cursor()},
          {"queueLength", session.queue().size()},
          {"complete", session.complete()},
          {"clustersReviewed", session.clusters_reviewed()},
          {"classesCreated", session.classes_created()},
          {"labeledCoverage", session.LabeledCoverage()},
          {"bankVersion", session.bank().version()}};
}

ApiResponse SuggestionService::SessionSummary(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return Error(404, "unknown session");
  json body = SessionSummaryJson(*it->second);
  body["sessionId"] = session_id;
  return {200, std::move(body)};
}

ApiResponse SuggestionService::SessionBank(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return Error(404, "unknown session");
  return {200, json::parse(it->second->session.bank().ToJson())};
}

void RegisterRoutes(httplib::Server& server, SuggestionService& service) {
  using Handler = std::function<ApiResponse(const httplib::Request&)>;
  const auto route = [](Handler handler) {
    return [handler = std::move(handler)](const httplib::Request& request,
                                          httplib::Response& response) {
      const auto started = std::chrono::steady_clock::now();
      ApiResponse result;
      try {
        result = handler(request);
      } catch (const std::exception& e) {
        result = Error(500, e.what());
      }
      response.status = result.status;
      response.set_content(result.body.dump(), "application/json");
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - started)
                            .count();
      std::cerr << json{{"method", request.method},
                        {"path", request.path},
                        {"status", result.status},
                        {"latencyMs", ms}}
                       .dump()
                << '\n';
    };
  };
  const auto parse = [](const httplib::Request& request) -> std::optional<json> {
    if (request.body.empty()) return json::object();
    json body = json::parse(request.body, nullptr, false);
    if (body.is_discarded()) return std::nullopt;
    return body;
  };

  server.Post("/v1/suggest", route([&](const httplib::Request& request) {
                auto body = parse(request);
                if (!body) return Error(422, "body is not valid JSON");
                return service.Suggest(*body);
              }));
  server.Get("/v1/bank", route([&](const httplib::Request&) {
               return service.GetBank();
             }));
  server.Get("/v1/bank/stats", route([&](const httplib::Request&) {
               return service.GetBankStats();
             }));
  server.Put(R"(/v1/bank/classes/(-?\d+)/exemplar)",
             route([&](const httplib::Request& request) {
               auto body = parse(request);
               if (!body) return Error(400, "body is not valid JSON");
               ClassId id = 0;
               try {
                 id = std::stoi(request.matches[1].str());
               } catch (const std::exception&) {
                 return Error(404, "unknown class");
               }
               return service.PutExemplar(id, *body);
             }));
  server.Post("/v1/sessions", route([&](const httplib::Request& request) {
                auto body = parse(request);
                if (!body) return Error(422, "body is not valid JSON");
                return service.CreateSession(*body);
              }));
  server.Get(R"(/v1/sessions/([A-Za-z0-9_-]+)/next)",
             route([&](const httplib::Request& request) {
               return service.NextCluster(request.matches[1].str());
             }));
  server.Post(R"(/v1/sessions/([A-Za-z0-9_-]+)/decisions)",
              route([&](const httplib::Request& request) {
                auto body = parse(request);
                if (!body) return Error(422, "body is not valid JSON");
                return service.PostDecision(request.matches[1].str(), *body);
              }));
  server.Get(R"(/v1/sessions/([A-Za-z0-9_-]+)/summary)",
             route([&](const httplib::Request& request) {
               return service.SessionSummary(request.matches[1].str());
             }));
  server.Get(R"(/v1/sessions/([A-Za-z0-9_-]+)/bank)",
             route([&](const httplib::Request& request) {
               return service.SessionBank(request.matches[1].str());
             }));
}

}  // namespace replybank

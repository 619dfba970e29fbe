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

#ifndef REPLYBANK_SERVICE_H_
#define REPLYBANK_SERVICE_H_

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "replybank/classifier.h"
#include "replybank/corpus.h"
#include "replybank/responsebank.h"
#include "replybank/simcluster.h"

namespace httplib {
class Server;
}

namespace replybank {

struct ServiceConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;
  std::string model_path;
  std::string bank_path;
  std::string responses_path;
  std::string clusters_path;
  std::string decision_log_dir;
  std::optional<double> threshold_override;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::string static_dir;  // optional UI assets
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// Request handling independent of the HTTP transport. Readers work on
// immutable (model, bank) snapshots; mutations are serialized and publish a
// new bank snapshot atomically.
class SuggestionService {
 public:
  SuggestionService(std::shared_ptr<const SuggestionModel> model,
                    std::string model_version, ResponseBank bank,
                    std::vector<ResponseRecord> records,
                    std::vector<Cluster> clusters, ServiceConfig config);

  // Loads whatever paths the config names; missing model means 503 on
  // suggest.
  static std::unique_ptr<SuggestionService> FromConfig(const ServiceConfig& config);

  ApiResponse Suggest(const nlohmann::json& request) const;
  ApiResponse GetBank() const;
  ApiResponse PutExemplar(ClassId class_id, const nlohmann::json& request);
  ApiResponse GetBankStats() const;

  ApiResponse CreateSession(const nlohmann::json& request);
  ApiResponse NextCluster(const std::string& session_id) const;
  ApiResponse PostDecision(const std::string& session_id,
                           const nlohmann::json& request);
  ApiResponse SessionSummary(const std::string& session_id) const;
  ApiResponse SessionBank(const std::string& session_id) const;

  std::shared_ptr<const ResponseBank> bank_snapshot() const;

 private:
  struct SessionState {
    MergeSession session;
    std::string log_path;
  };

  nlohmann::json SessionSummaryJson(const SessionState& state) const;

  std::shared_ptr<const SuggestionModel> model_;
  std::string model_version_;
  std::vector<ResponseRecord> records_;
  std::vector<Cluster> clusters_;
  ServiceConfig config_;

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const ResponseBank> bank_;

  std::mutex writer_mutex_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::unique_ptr<SessionState>> sessions_;
  std::size_t next_session_ = 1;
};

// Binds every /v1 route onto `server`, with one structured log line per
// request on stderr.
void RegisterRoutes(httplib::Server& server, SuggestionService& service);

}  // namespace replybank

#endif  // REPLYBANK_SERVICE_H_

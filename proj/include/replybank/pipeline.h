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

#ifndef REPLYBANK_PIPELINE_H_
#define REPLYBANK_PIPELINE_H_

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "replybank/classifier.h"
#include "replybank/corpus.h"

namespace replybank {

// Every field defaults to the reference settings, so an empty config file
// reproduces them.
struct PipelineConfig {
  std::vector<std::string> encoders = {"tfidf"};
  std::size_t k = 10;
  double threshold = 0.25;
  std::string scores_file;   // empty: built-in token Jaccard scorer
  std::string decision_log;  // empty: one class per cluster
  ContextConfig context;
  TrainConfig train;
  double validation_fraction = 0.2;
  std::string opt_out = "mean";  // "mean" or "coverage:<fraction>"
  std::size_t unique_samples = 1000;

  std::string ToJson() const;
  static PipelineConfig FromJson(std::string_view text);
  // Hash of the canonical JSON form.
  std::string Hash() const;
};

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what),
        stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageOutcome {
  std::string name;
  bool ran = false;  // false: artifacts were fresh
};

struct PipelineResult {
  std::vector<StageOutcome> stages;
  std::string manifest_path;
};

// ingest -> candidates -> score -> cluster -> bank -> extract -> train ->
// eval, writing artifacts under workdir. A stage is skipped when
// manifest.json records the same input key for it and its artifacts still
// match their checksums.
PipelineResult RunPipeline(const std::string& corpus_path,
                           const PipelineConfig& config,
                           const std::string& workdir);

OptOutRule ParseOptOutRule(const std::string& text);

}  // namespace replybank

#endif  // REPLYBANK_PIPELINE_H_

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

#include "replybank/pipeline.h"

#include <filesystem>

#include "doctest.h"
#include "json.hpp"
#include "replybank/responsebank.h"
#include "replybank/simcluster.h"
#include "replybank/synth.h"
#include "test_util.h"

namespace replybank {
namespace {

namespace fs = std::filesystem;

PipelineConfig SmallConfig() {
  PipelineConfig config;
  config.train.epochs = 5;
  config.unique_samples = 50;
  return config;
}

std::string WriteCorpus(const testing::TempDir& dir) {
  SynthConfig synth;
  synth.classes = 6;
  synth.conversations = 150;
  const std::string path = dir.File("corpus.jsonl");
  WriteSynthCorpus(synth, path);
  return path;
}

std::size_t CountRan(const PipelineResult& result) {
  std::size_t ran = 0;
  for (const auto& stage : result.stages) ran += stage.ran ? 1 : 0;
  return ran;
}

TEST_CASE("Config JSON round trip and validation") {
  PipelineConfig config;
  config.encoders = {"tfidf", "wordvec:v.txt"};
  config.threshold = 0.3;
  config.train.seed = 9;
  const PipelineConfig copy = PipelineConfig::FromJson(config.ToJson());
  CHECK(copy.ToJson() == config.ToJson());
  CHECK(copy.Hash() == config.Hash());
  CHECK(PipelineConfig::FromJson("{}").ToJson() == PipelineConfig{}.ToJson());
  CHECK_THROWS_AS(PipelineConfig::FromJson(R"({"thresold":0.2})"), ValidationError);
  CHECK_THROWS_AS(PipelineConfig::FromJson(R"({"threshold":1.2})"), ValidationError);
  CHECK_THROWS_AS(PipelineConfig::FromJson(R"({"k":0})"), ValidationError);
  CHECK_THROWS_AS(PipelineConfig::FromJson("[1]"), ValidationError);
  CHECK_THROWS_AS(PipelineConfig::FromJson(R"({"optOut":"median"})"), ValidationError);
}

TEST_CASE("Opt-out rule parsing") {
  CHECK(std::holds_alternative<MeanConfidence>(ParseOptOutRule("mean")));
  CHECK(std::get<TargetCoverage>(ParseOptOutRule("coverage:0.5")).coverage == 0.5);
  CHECK_THROWS_AS(ParseOptOutRule("coverage:0"), ValidationError);
  CHECK_THROWS_AS(ParseOptOutRule("coverage:x"), ValidationError);
}

TEST_CASE("Pipeline runs, resumes and is path independent") {
  testing::TempDir dir;
  const std::string corpus = WriteCorpus(dir);
  const PipelineConfig config = SmallConfig();

  const PipelineResult first = RunPipeline(corpus, config, dir.File("a"));
  REQUIRE(first.stages.size() == 8);
  CHECK(CountRan(first) == 8);
  for (const char* artifact : {"responses.tsv", "pairs.tsv", "scores.tsv", "clusters.json",
                               "bank.json", "examples.bin", "val.bin", "model.ckpt",
                               "eval.json", "curve.csv", "manifest.json"}) {
    CHECK(fs::exists(dir.path() / "a" / artifact));
  }
  const std::string manifest = ReadFile(first.manifest_path);

  const PipelineResult again = RunPipeline(corpus, config, dir.File("a"));
  CHECK(CountRan(again) == 0);
  CHECK(ReadFile(again.manifest_path) == manifest);

  const PipelineResult elsewhere = RunPipeline(corpus, config, dir.File("b"));
  CHECK(ReadFile(elsewhere.manifest_path) == manifest);
  CHECK(ReadFile(dir.File("a/model.ckpt")) == ReadFile(dir.File("b/model.ckpt")));

  // A damaged artifact re-runs its own stage and nothing upstream.
  WriteFileAtomic(dir.File("a/clusters.json"), "[]");
  const PipelineResult repaired = RunPipeline(corpus, config, dir.File("a"));
  CHECK_FALSE(repaired.stages[0].ran);
  CHECK(repaired.stages[3].ran);
  CHECK(ReadFile(repaired.manifest_path) == manifest);

  // Changing the config resets the manifest.
  PipelineConfig changed = config;
  changed.train.epochs = 6;
  CHECK(CountRan(RunPipeline(corpus, changed, dir.File("a"))) == 8);
}

TEST_CASE("Pipeline replays a decision log") {
  testing::TempDir dir;
  const std::string corpus = WriteCorpus(dir);
  PipelineConfig config = SmallConfig();
  RunPipeline(corpus, config, dir.File("auto"));

  const auto clusters = ReadClustersJson(dir.File("auto/clusters.json"));
  const auto records = ReadResponsesTsv(dir.File("auto/responses.tsv"));
  MergeSession session = MergeSession::Start(clusters, records);
  session.Apply({session.Current()->cluster.cluster_id, CreateNew{"first"}, "", "t"});
  session.Apply({session.Current()->cluster.cluster_id, Skip{}, "", "t"});
  session.Apply({session.Current()->cluster.cluster_id, CreateNew{"second"}, "", "t"});
  session.Apply({session.Current()->cluster.cluster_id, AssignTo{0}, "", "t"});
  const std::string log = dir.File("decisions.ndjson");
  for (const auto& d : session.decisions()) AppendDecisionLog(log, d);

  config.decision_log = log;
  RunPipeline(corpus, config, dir.File("manual"));
  const ResponseBank bank = ResponseBank::Load(dir.File("manual/bank.json"));
  CHECK(bank.ToJson() == session.bank().ToJson());
  CHECK(bank.size() == 2);
}

TEST_CASE("Stage failures name the stage") {
  testing::TempDir dir;
  try {
    RunPipeline(dir.File("missing.jsonl"), SmallConfig(), dir.File("w"));
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "ingest");
  }
  WriteFileAtomic(dir.File("tiny.jsonl"),
                  R"({"id":"a","messages":[{"speaker":"doctor","text":"ok"}]})" "\n");
  try {
    RunPipeline(dir.File("tiny.jsonl"), SmallConfig(), dir.File("w2"));
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "candidates");
  }
}

}  // namespace
}  // namespace replybank

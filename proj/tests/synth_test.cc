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

#include "replybank/synth.h"

#include <map>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "replybank/corpus.h"
#include "replybank/simcluster.h"
#include "test_util.h"

namespace replybank {
namespace {

std::vector<std::string> FamilyResponses(const IntentFamily& family) {
  std::vector<std::string> out;
  for (const std::string& slot : family.slot_options) {
    std::string text = family.doctor_template;
    text.replace(text.find("{slot}"), 6, slot);
    for (const auto& [marker, token] : {std::pair<std::string, std::string_view>{"{name}", kPatientName},
                                        {"{dname}", kDoctorName}}) {
      if (const auto at = text.find(marker); at != std::string::npos) {
        text.replace(at, marker.size(), token);
      }
    }
    out.push_back(Normalize(text));
  }
  return out;
}

TEST_CASE("Generation is deterministic per seed") {
  SynthConfig config;
  config.conversations = 200;
  const SynthCorpus a = GenerateSynthCorpus(config);
  const SynthCorpus b = GenerateSynthCorpus(config);
  CHECK(a.corpus_jsonl == b.corpus_jsonl);
  CHECK(a.truth_json == b.truth_json);
  config.seed = 8;
  CHECK(GenerateSynthCorpus(config).corpus_jsonl != a.corpus_jsonl);
}

TEST_CASE("Configuration limits") {
  SynthConfig config;
  config.classes = 1;
  CHECK_THROWS_AS(GenerateSynthCorpus(config), ValidationError);
  config.classes = BuiltinIntentFamilies().size() + 1;
  CHECK_THROWS_AS(GenerateSynthCorpus(config), ValidationError);
  config.classes = 10;
  config.conversations = 5;
  CHECK_THROWS_AS(GenerateSynthCorpus(config), ValidationError);
}

TEST_CASE("Families are tight inside and apart across") {
  const auto& families = BuiltinIntentFamilies();
  std::vector<std::vector<std::string>> responses;
  for (const auto& family : families) responses.push_back(FamilyResponses(family));
  for (std::size_t f = 0; f < families.size(); ++f) {
    for (std::size_t g = f; g < families.size(); ++g) {
      for (const auto& x : responses[f]) {
        for (const auto& y : responses[g]) {
          if (x == y) continue;
          if (f == g) {
            CHECK(TokenJaccard(x, y) >= 0.75);
          } else {
            CHECK(TokenJaccard(x, y) < 0.75);
          }
        }
      }
    }
  }
}

TEST_CASE("Labels agree with the rendered doctor turns") {
  SynthConfig config;
  config.classes = 12;
  config.conversations = 300;
  const SynthCorpus synth = GenerateSynthCorpus(config);
  testing::TempDir dir;
  WriteSynthCorpus(config, dir.File("c.jsonl"));
  const SynthTruth truth = ReadSynthTruth(dir.File("c.jsonl.truth.json"));
  CHECK(truth.classes == 12);
  std::map<std::string, int> intent_of(truth.response_intents.begin(),
                                       truth.response_intents.end());

  const auto labels = nlohmann::json::parse(synth.truth_json).at("labels");
  std::istringstream in(synth.corpus_jsonl);
  const auto conversations = ReadCorpus(in);
  REQUIRE(conversations.size() == 300);
  std::vector<int> seen(12, 0);
  for (std::size_t c = 0; c < conversations.size(); ++c) {
    const auto& intents = labels[c].at("doctorIntents");
    std::size_t d = 0;
    for (const Turn& turn : conversations[c].turns) {
      if (turn.speaker != Speaker::kDoctor) continue;
      const int label = intents.at(d++).get<int>();
      const std::string text = Normalize(turn.text, turn.identity_spans);
      if (label < 0) {
        CHECK(intent_of.count(text) == 0);
      } else {
        REQUIRE(intent_of.count(text) == 1);
        CHECK(intent_of[text] == label);
        ++seen[label];
      }
    }
    CHECK(d == intents.size());
    CHECK(conversations[c].turns.front().speaker == Speaker::kPatient);
  }
  for (int count : seen) CHECK(count > 0);
}

TEST_CASE("Bundled corpus matches regeneration") {
  const std::string path = std::string(REPLYBANK_TEST_DATA) + "/synth_k20_n2000.jsonl";
  const SynthCorpus synth = GenerateSynthCorpus(SynthConfig{});
  CHECK(ReadFile(path) == synth.corpus_jsonl);
  CHECK(ReadFile(path + ".truth.json") == synth.truth_json);
}

}  // namespace
}  // namespace replybank

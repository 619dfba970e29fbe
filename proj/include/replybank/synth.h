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

#ifndef REPLYBANK_SYNTH_H_
#define REPLYBANK_SYNTH_H_

#include <cstdint>
#include <string>
#include <vector>

namespace replybank {

// Templated doctor intent used by the synthetic corpus.
struct IntentFamily {
  std::string name;
  // Doctor template with a "{slot}" filled from slot_options and optional
  // "{name}" / "{dname}" identity placeholders.
  std::string doctor_template;
  std::vector<std::string> slot_options;
  std::vector<std::string> patient_triggers;
};

const std::vector<IntentFamily>& BuiltinIntentFamilies();

struct SynthConfig {
  std::size_t classes = 20;
  std::size_t conversations = 2000;
  std::uint64_t seed = 7;
  double noise_rate = 0.12;     // doctor turns with one-off text
  double generic_rate = 0.05;   // patient turns with no intent cue
};

struct SynthCorpus {
  std::string corpus_jsonl;  // one conversation per line
  std::string truth_json;    // sidecar with ground-truth intents
};

// Deterministic per seed. Requires 2 <= classes <= built-in family count and
// conversations >= classes.
SynthCorpus GenerateSynthCorpus(const SynthConfig& config);

// Writes `path` and `path + ".truth.json"`.
void WriteSynthCorpus(const SynthConfig& config, const std::string& path);

// Ground truth read back from a sidecar: normalized response text -> intent.
struct SynthTruth {
  std::size_t classes = 0;
  std::vector<std::string> intent_names;
  std::vector<std::pair<std::string, int>> response_intents;
};

SynthTruth ReadSynthTruth(const std::string& path);

}  // namespace replybank

#endif  // REPLYBANK_SYNTH_H_

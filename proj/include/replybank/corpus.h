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

#ifndef REPLYBANK_CORPUS_H_
#define REPLYBANK_CORPUS_H_

#include <cstddef>
#include <istream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "replybank/common.h"

namespace replybank {

enum class Speaker { kPatient, kDoctor };

std::string_view SpeakerName(Speaker speaker);
Speaker ParseSpeaker(std::string_view name);

inline constexpr std::string_view kPatientStart = "<p_start>";
inline constexpr std::string_view kDoctorStart = "<d_start>";
inline constexpr std::string_view kPatientName = "<patient_name>";
inline constexpr std::string_view kDoctorName = "<doctor_name>";

inline constexpr std::size_t kDefaultMaxTurns = 6;
inline constexpr std::size_t kDefaultMaxTokens = 304;

// Identifying span over a raw message. Offsets count Unicode code points,
// end exclusive. kind says which placeholder replaces the span.
struct IdentitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  Speaker kind = Speaker::kPatient;
};

struct Turn {
  Speaker speaker = Speaker::kPatient;
  std::string text;
  std::vector<IdentitySpan> identity_spans;
  std::size_t index = 0;
};

struct Conversation {
  std::string id;
  std::vector<Turn> turns;
};

struct PreprocessedResponse {
  std::string normalized_text;
  std::set<std::string> source_texts;
  std::int64_t count = 0;
};

struct ResponseRecord {
  ResponseId response_id = 0;
  PreprocessedResponse response;
};

// Lowercases, replaces identity spans with placeholder tokens, strips every
// Unicode punctuation character (general category P*), and collapses
// whitespace. Literal placeholder tokens already present in `raw` are kept,
// which makes the function idempotent. Input must be valid UTF-8.
PreprocessedResponse Preprocess(std::string_view raw,
                                std::span<const IdentitySpan> spans = {});
std::string Normalize(std::string_view raw,
                      std::span<const IdentitySpan> spans = {});

// One JSON conversation record per line. Consecutive messages from the same
// speaker are merged into a single turn (texts joined by a space, spans
// shifted accordingly).
Conversation ParseConversation(std::string_view json_line);
std::vector<Conversation> ReadCorpus(std::istream& in);
std::vector<Conversation> ReadCorpusFile(const std::string& path);

// Distinct normalized doctor responses seen at least twice. Ids follow
// descending count, ties broken by byte-wise lexicographic order.
std::vector<ResponseRecord> BuildFrequentSet(
    std::span<const Conversation> conversations);

struct NormalizedTurn {
  Speaker speaker = Speaker::kPatient;
  std::vector<std::string> tokens;
};

std::vector<NormalizedTurn> NormalizeTurns(const Conversation& conversation);

struct ContextConfig {
  std::size_t max_turns = kDefaultMaxTurns;
  std::size_t max_tokens = kDefaultMaxTokens;
};

// Context for predicting turn `upto_turn`: the preceding max_turns turns,
// each prefixed with its speaker marker, truncated to the last max_tokens
// tokens.
std::vector<std::string> AssembleContext(std::span<const NormalizedTurn> turns,
                                         std::size_t upto_turn,
                                         const ContextConfig& config);
std::vector<std::string> AssembleContext(const Conversation& conversation,
                                         std::size_t upto_turn,
                                         std::size_t max_turns,
                                         std::size_t max_tokens);

struct CorpusStats {
  double mean_utterances = 0;
  double sd_utterances = 0;
  double mean_words_per_utterance = 0;
  double sd_words = 0;
};

// Population statistics over turns per conversation and normalized tokens
// per turn.
CorpusStats ComputeCorpusStats(std::span<const Conversation> conversations);

// responses.tsv: responseId, count, normalizedText.
void WriteResponsesTsv(std::span<const ResponseRecord> records,
                       const std::string& path);
std::vector<ResponseRecord> ReadResponsesTsv(const std::string& path);

}  // namespace replybank

#endif  // REPLYBANK_CORPUS_H_

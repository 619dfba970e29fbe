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

#include "replybank/corpus.h"

#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace replybank {
namespace {

using nlohmann::json;

std::u32string DecodeUtf8(std::string_view raw) {
  icu::UnicodeString unicode = icu::UnicodeString::fromUTF8(
      icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  std::u32string out;
  out.reserve(static_cast<std::size_t>(unicode.length()));
  for (int32_t i = 0; i < unicode.length(); i = unicode.moveIndex32(i, 1)) {
    out.push_back(static_cast<char32_t>(unicode.char32At(i)));
  }
  return out;
}

std::u32string Lowercase(std::u32string_view text) {
  icu::UnicodeString unicode;
  for (char32_t c : text) unicode.append(static_cast<UChar32>(c));
  unicode.toLower(icu::Locale::getRoot());
  std::u32string out;
  for (int32_t i = 0; i < unicode.length(); i = unicode.moveIndex32(i, 1)) {
    out.push_back(static_cast<char32_t>(unicode.char32At(i)));
  }
  return out;
}

void AppendUtf8(char32_t c, std::string& out) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

bool MatchesAt(std::u32string_view text, std::size_t pos,
               std::string_view ascii) {
  if (pos + ascii.size() > text.size()) return false;
  for (std::size_t i = 0; i < ascii.size(); ++i) {
    if (text[pos + i] != static_cast<char32_t>(ascii[i])) return false;
  }
  return true;
}

void AppendPlaceholder(std::string_view placeholder, std::string& out) {
  out.push_back(' ');
  out += placeholder;
  out.push_back(' ');
}

// Lowercase, drop punctuation, map whitespace to ' ', keep placeholders.
void AppendCleanSegment(std::u32string_view segment, std::string& out) {
  const std::u32string lowered = Lowercase(segment);
  std::size_t i = 0;
  while (i < lowered.size()) {
    if (MatchesAt(lowered, i, kPatientName)) {
      AppendPlaceholder(kPatientName, out);
      i += kPatientName.size();
      continue;
    }
    if (MatchesAt(lowered, i, kDoctorName)) {
      AppendPlaceholder(kDoctorName, out);
      i += kDoctorName.size();
      continue;
    }
    const char32_t c = lowered[i++];
    if (u_ispunct(static_cast<UChar32>(c))) continue;
    if (u_isUWhiteSpace(static_cast<UChar32>(c))) {
      out.push_back(' ');
    } else {
      AppendUtf8(c, out);
    }
  }
}

std::size_t CodePointLength(std::string_view text) {
  return DecodeUtf8(text).size();
}

}  // namespace

std::string_view SpeakerName(Speaker speaker) {
  return speaker == Speaker::kPatient ? "patient" : "doctor";
}

Speaker ParseSpeaker(std::string_view name) {
  if (name == "patient") return Speaker::kPatient;
  if (name == "doctor") return Speaker::kDoctor;
  throw ValidationError("unknown speaker '" + std::string(name) + "'");
}

std::string Normalize(std::string_view raw,
                      std::span<const IdentitySpan> spans) {
  const std::u32string text = DecodeUtf8(raw);
  std::vector<IdentitySpan> sorted(spans.begin(), spans.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const IdentitySpan& a, const IdentitySpan& b) {
              return a.start < b.start;
            });
  std::size_t previous_end = 0;
  for (const IdentitySpan& span : sorted) {
    if (span.start >= span.end || span.end > text.size()) {
      throw ValidationError("identity span [" + std::to_string(span.start) +
                            "," + std::to_string(span.end) +
                            ") out of bounds for text of length " +
                            std::to_string(text.size()));
    }
    if (span.start < previous_end) {
      throw ValidationError("overlapping identity spans at offset " +
                            std::to_string(span.start));
    }
    previous_end = span.end;
  }

  std::string dirty;
  std::size_t cursor = 0;
  const std::u32string_view view(text);
  for (const IdentitySpan& span : sorted) {
    AppendCleanSegment(view.substr(cursor, span.start - cursor), dirty);
    AppendPlaceholder(
        span.kind == Speaker::kPatient ? kPatientName : kDoctorName, dirty);
    cursor = span.end;
  }
  AppendCleanSegment(view.substr(cursor), dirty);
  return JoinTokens(SplitWhitespace(dirty));
}

PreprocessedResponse Preprocess(std::string_view raw,
                                std::span<const IdentitySpan> spans) {
  PreprocessedResponse result;
  result.normalized_text = Normalize(raw, spans);
  result.source_texts.emplace(raw);
  result.count = 1;
  return result;
}

Conversation ParseConversation(std::string_view json_line) {
  json doc;
  try {
    doc = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed conversation JSON: ") +
                          e.what());
  }
  Conversation conversation;
  try {
    conversation.id = doc.at("id").get<std::string>();
    for (const json& message : doc.at("messages")) {
      const Speaker speaker =
          ParseSpeaker(message.at("speaker").get<std::string>());
      std::string text = message.at("text").get<std::string>();
      if (SplitWhitespace(text).empty()) {
        throw ValidationError("conversation " + conversation.id +
                              " has an empty message");
      }
      std::vector<IdentitySpan> spans;
      if (message.contains("pii")) {
        for (const json& entry : message.at("pii")) {
          IdentitySpan span;
          span.start = entry.at(0).get<std::size_t>();
          span.end = entry.at(1).get<std::size_t>();
          span.kind = ParseSpeaker(entry.at(2).get<std::string>());
          spans.push_back(span);
        }
      }
      if (!conversation.turns.empty() &&
          conversation.turns.back().speaker == speaker) {
        Turn& last = conversation.turns.back();
        const std::size_t shift = CodePointLength(last.text) + 1;
        last.text += ' ';
        last.text += text;
        for (IdentitySpan span : spans) {
          span.start += shift;
          span.end += shift;
          last.identity_spans.push_back(span);
        }
      } else {
        Turn turn;
        turn.speaker = speaker;
        turn.text = std::move(text);
        turn.identity_spans = std::move(spans);
        turn.index = conversation.turns.size();
        conversation.turns.push_back(std::move(turn));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed conversation record: ") +
                          e.what());
  }
  if (conversation.turns.empty()) {
    throw ValidationError("conversation " + conversation.id +
                          " has no messages");
  }
  return conversation;
}

std::vector<Conversation> ReadCorpus(std::istream& in) {
  std::vector<Conversation> conversations;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (SplitWhitespace(line).empty()) continue;
    try {
      conversations.push_back(ParseConversation(line));
    } catch (const ValidationError& e) {
      throw ValidationError("corpus line " + std::to_string(line_number) +
                            ": " + e.what());
    }
  }
  return conversations;
}

std::vector<Conversation> ReadCorpusFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path);
  return ReadCorpus(in);
}

std::vector<ResponseRecord> BuildFrequentSet(
    std::span<const Conversation> conversations) {
  std::map<std::string, PreprocessedResponse> by_text;
  for (const Conversation& conversation : conversations) {
    for (const Turn& turn : conversation.turns) {
      if (turn.speaker != Speaker::kDoctor) continue;
      std::string normalized = Normalize(turn.text, turn.identity_spans);
      PreprocessedResponse& entry = by_text[normalized];
      entry.normalized_text = std::move(normalized);
      entry.source_texts.insert(turn.text);
      ++entry.count;
    }
  }
  std::vector<PreprocessedResponse> frequent;
  for (auto& [text, response] : by_text) {
    if (response.count > 1) frequent.push_back(std::move(response));
  }
  std::stable_sort(frequent.begin(), frequent.end(),
                   [](const PreprocessedResponse& a,
                      const PreprocessedResponse& b) {
                     return a.count > b.count;
                   });
  std::vector<ResponseRecord> records;
  records.reserve(frequent.size());
  for (std::size_t i = 0; i < frequent.size(); ++i) {
    records.push_back({static_cast<ResponseId>(i), std::move(frequent[i])});
  }
  return records;
}

std::vector<NormalizedTurn> NormalizeTurns(const Conversation& conversation) {
  std::vector<NormalizedTurn> turns;
  turns.reserve(conversation.turns.size());
  for (const Turn& turn : conversation.turns) {
    turns.push_back(
        {turn.speaker,
         SplitWhitespace(Normalize(turn.text, turn.identity_spans))});
  }
  return turns;
}

std::vector<std::string> AssembleContext(std::span<const NormalizedTurn> turns,
                                         std::size_t upto_turn,
                                         const ContextConfig& config) {
  if (config.max_turns < 1 || config.max_tokens < 1) {
    throw ValidationError("context budgets must be at least 1");
  }
  if (upto_turn > turns.size()) {
    throw ValidationError("context end beyond conversation length");
  }
  const std::size_t first =
      upto_turn > config.max_turns ? upto_turn - config.max_turns : 0;
  std::vector<std::string> tokens;
  for (std::size_t i = first; i < upto_turn; ++i) {
    tokens.emplace_back(turns[i].speaker == Speaker::kPatient ? kPatientStart
                                                              : kDoctorStart);
    tokens.insert(tokens.end(), turns[i].tokens.begin(),
                  turns[i].tokens.end());
  }
  if (tokens.size() > config.max_tokens) {
    tokens.erase(tokens.begin(),
                 tokens.end() - static_cast<std::ptrdiff_t>(config.max_tokens));
  }
  return tokens;
}

std::vector<std::string> AssembleContext(const Conversation& conversation,
                                         std::size_t upto_turn,
                                         std::size_t max_turns,
                                         std::size_t max_tokens) {
  if (upto_turn >= conversation.turns.size()) {
    throw ValidationError("turn index " + std::to_string(upto_turn) +
                          " out of range");
  }
  const std::vector<NormalizedTurn> turns = NormalizeTurns(conversation);
  return AssembleContext(turns, upto_turn, {max_turns, max_tokens});
}

CorpusStats ComputeCorpusStats(std::span<const Conversation> conversations) {
  if (conversations.empty()) {
    throw ValidationError("corpus statistics need at least one conversation");
  }
  double utterance_sum = 0;
  double utterance_sq = 0;
  double word_sum = 0;
  double word_sq = 0;
  double turn_total = 0;
  for (const Conversation& conversation : conversations) {
    const double n = static_cast<double>(conversation.turns.size());
    utterance_sum += n;
    utterance_sq += n * n;
    for (const NormalizedTurn& turn : NormalizeTurns(conversation)) {
      const double words = static_cast<double>(turn.tokens.size());
      word_sum += words;
      word_sq += words * words;
      turn_total += 1;
    }
  }
  const double count = static_cast<double>(conversations.size());
  CorpusStats stats;
  stats.mean_utterances = utterance_sum / count;
  stats.sd_utterances = std::sqrt(std::max(
      0.0, utterance_sq / count - stats.mean_utterances * stats.mean_utterances));
  stats.mean_words_per_utterance = word_sum / turn_total;
  stats.sd_words = std::sqrt(std::max(
      0.0, word_sq / turn_total -
               stats.mean_words_per_utterance * stats.mean_words_per_utterance));
  return stats;
}

void WriteResponsesTsv(std::span<const ResponseRecord> records,
                       const std::string& path) {
  std::ostringstream out;
  for (const ResponseRecord& record : records) {
    out << record.response_id << '\t' << record.response.count << '\t'
        << record.response.normalized_text << '\n';
  }
  WriteFileAtomic(path, out.str());
}

std::vector<ResponseRecord> ReadResponsesTsv(const std::string& path) {
  std::istringstream in(ReadFile(path));
  std::vector<ResponseRecord> records;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const auto fields = SplitTabs(line);
    try {
      if (fields.size() != 3) throw std::invalid_argument("field count");
      ResponseRecord record;
      record.response_id = std::stoi(std::string(fields[0]));
      record.response.count = std::stoll(std::string(fields[1]));
      record.response.normalized_text = std::string(fields[2]);
      if (record.response_id != static_cast<ResponseId>(records.size())) {
        throw std::invalid_argument("ids must be dense and ordered");
      }
      records.push_back(std::move(record));
    } catch (const std::exception& e) {
      throw ValidationError(path + " line " + std::to_string(line_number) +
                            ": " + e.what());
    }
  }
  return records;
}

}  // namespace replybank

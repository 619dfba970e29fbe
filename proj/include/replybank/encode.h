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

#ifndef REPLYBANK_ENCODE_H_
#define REPLYBANK_ENCODE_H_

#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "replybank/common.h"
#include "replybank/corpus.h"

namespace replybank {

// Maps normalized response text to a fixed-size dense vector. Encoders are
// immutable once built and safe to share across threads.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> Encode(std::string_view text) const = 0;
};

// Inverse document frequencies, idf = ln(N / df).
class IdfTable {
 public:
  static IdfTable Fit(std::span<const std::vector<std::string>> documents);

  // Tokens never seen in fitting have no entry.
  const double* Find(std::string_view token) const;
  std::size_t document_count() const { return document_count_; }
  // Sorted vocabulary; position is the feature index.
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const std::vector<double>& idf() const { return idf_; }
  std::ptrdiff_t IndexOf(std::string_view token) const;

  static IdfTable FromParts(std::vector<std::string> vocabulary,
                            std::vector<double> idf,
                            std::size_t document_count);

 private:
  std::vector<std::string> vocabulary_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t document_count_ = 0;
};

// L2-normalized raw-count tf * idf over the fitted vocabulary.
class TfidfEncoder : public Encoder {
 public:
  static std::unique_ptr<TfidfEncoder> Fit(
      std::span<const ResponseRecord> records);

  explicit TfidfEncoder(IdfTable idf) : idf_(std::move(idf)) {}

  std::string name() const override { return "tfidf"; }
  std::size_t dimension() const override {
    return idf_.vocabulary().size();
  }
  std::vector<double> Encode(std::string_view text) const override;

  const IdfTable& idf() const { return idf_; }

 private:
  IdfTable idf_;
};

struct WordVectorTable {
  std::size_t dimension = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

// Parses the plain-text `token v1 ... vD` format. Malformed rows and
// dimension changes raise ValidationError naming the line.
WordVectorTable LoadWordVectors(const std::string& path);
WordVectorTable ParseWordVectors(std::string_view contents);

enum class Weighting { kUniform, kTfidf };

// (Weighted) mean of in-vocabulary token vectors. Under tf-idf weighting each
// occurrence contributes its idf; tokens outside the idf table get weight 0.
class WordVectorEncoder : public Encoder {
 public:
  WordVectorEncoder(std::shared_ptr<const WordVectorTable> table,
                    Weighting weighting,
                    std::shared_ptr<const IdfTable> idf = nullptr);

  std::string name() const override;
  std::size_t dimension() const override { return table_->dimension; }
  std::vector<double> Encode(std::string_view text) const override;

 private:
  std::shared_ptr<const WordVectorTable> table_;
  Weighting weighting_;
  std::shared_ptr<const IdfTable> idf_;
};

struct CandidatePair {
  ResponseId a = 0;
  ResponseId b = 0;
  auto operator<=>(const CandidatePair&) const = default;
};

CandidatePair MakePair(ResponseId x, ResponseId y);

double CosineDistance(std::span<const double> x, std::span<const double> y);

// Encodes every record once. Row i belongs to response id i.
std::vector<std::vector<double>> EncodeAll(
    const Encoder& encoder, std::span<const ResponseRecord> records);

// For each row, the k nearest other rows by cosine distance, ordered by
// (distance, id). Zero rows have no neighbors and are nobody's neighbor.
std::vector<std::vector<ResponseId>> NearestNeighbors(
    std::span<const std::vector<double>> vectors, std::size_t k);

// Union over encoders of canonical (a < b) KNN pairs, sorted.
std::vector<CandidatePair> GenerateCandidatePairs(
    std::span<const ResponseRecord> records,
    std::span<const Encoder* const> encoders, std::size_t k);

// Builds encoders from a spec list such as {"tfidf", "wordvec:PATH",
// "wordvec-tfidf:PATH"}.
std::vector<std::unique_ptr<Encoder>> MakeEncoders(
    std::span<const std::string> specs,
    std::span<const ResponseRecord> records);

void WritePairsTsv(std::span<const CandidatePair> pairs,
                   const std::string& path);
std::vector<CandidatePair> ReadPairsTsv(const std::string& path);

}  // namespace replybank

#endif  // REPLYBANK_ENCODE_H_

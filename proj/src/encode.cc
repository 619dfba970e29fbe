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

#include "replybank/encode.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace replybank {
namespace {

// Runs body(i) for i in [0, n) across hardware threads. Each index is
// handled by exactly one thread, so per-index outputs are deterministic.
template <typename Body>
void ParallelFor(std::size_t n, Body body) {
  const std::size_t workers = std::max<std::size_t>(
      1, std::min<std::size_t>(std::thread::hardware_concurrency(), n / 64));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) body(i);
    });
  }
  for (std::thread& t : threads) t.join();
}

double Norm(std::span<const double> v) {
  double sum = 0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

double Dot(std::span<const double> x, std::span<const double> y) {
  double sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += x[i] * y[i];
  return sum;
}

}  // namespace

IdfTable IdfTable::Fit(std::span<const std::vector<std::string>> documents) {
  std::map<std::string, std::size_t> document_frequency;
  for (const auto& document : documents) {
    std::set<std::string_view> seen(document.begin(), document.end());
    for (std::string_view token : seen) ++document_frequency[std::string(token)];
  }
  std::vector<std::string> vocabulary;
  std::vector<double> idf;
  const double n = static_cast<double>(documents.size());
  for (const auto& [token, df] : document_frequency) {
    vocabulary.push_back(token);
    idf.push_back(std::log(n / static_cast<double>(df)));
  }
  return FromParts(std::move(vocabulary), std::move(idf), documents.size());
}

IdfTable IdfTable::FromParts(std::vector<std::string> vocabulary,
                             std::vector<double> idf,
                             std::size_t document_count) {
  if (vocabulary.size() != idf.size()) {
    throw ValidationError("vocabulary and idf sizes differ");
  }
  IdfTable table;
  table.vocabulary_ = std::move(vocabulary);
  table.idf_ = std::move(idf);
  table.document_count_ = document_count;
  for (std::size_t i = 0; i < table.vocabulary_.size(); ++i) {
    table.index_.emplace(table.vocabulary_[i], i);
  }
  return table;
}

const double* IdfTable::Find(std::string_view token) const {
  const std::ptrdiff_t index = IndexOf(token);
  return index < 0 ? nullptr : &idf_[static_cast<std::size_t>(index)];
}

std::ptrdiff_t IdfTable::IndexOf(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::unique_ptr<TfidfEncoder> TfidfEncoder::Fit(
    std::span<const ResponseRecord> records) {
  std::vector<std::vector<std::string>> documents;
  documents.reserve(records.size());
  for (const ResponseRecord& record : records) {
    documents.push_back(SplitWhitespace(record.response.normalized_text));
  }
  return std::make_unique<TfidfEncoder>(IdfTable::Fit(documents));
}

std::vector<double> TfidfEncoder::Encode(std::string_view text) const {
  std::vector<double> vector(dimension(), 0.0);
  for (const std::string& token : SplitWhitespace(text)) {
    const std::ptrdiff_t index = idf_.IndexOf(token);
    if (index >= 0) vector[static_cast<std::size_t>(index)] += 1.0;
  }
  for (std::size_t i = 0; i < vector.size(); ++i) vector[i] *= idf_.idf()[i];
  const double norm = Norm(vector);
  if (norm > 0) {
    for (double& x : vector) x /= norm;
  }
  return vector;
}

WordVectorTable ParseWordVectors(std::string_view contents) {
  WordVectorTable table;
  std::size_t line_number = 0;
  std::size_t start = 0;
  while (start < contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    const std::string_view line = contents.substr(start, end - start);
    start = end + 1;
    ++line_number;
    const std::vector<std::string> fields = SplitWhitespace(line);
    if (fields.empty()) continue;
    const auto fail = [&](const std::string& why) {
      return ValidationError("word vectors line " +
                             std::to_string(line_number) + ": " + why);
    };
    if (fields.size() < 2) throw fail("expected a token and components");
    std::vector<double> vector;
    vector.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      std::size_t used = 0;
      double value = 0;
      try {
        value = std::stod(fields[i], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != fields[i].size() || !std::isfinite(value)) {
        throw fail("bad component '" + fields[i] + "'");
      }
      vector.push_back(value);
    }
    if (table.dimension == 0) {
      table.dimension = vector.size();
    } else if (vector.size() != table.dimension) {
      throw fail("dimension " + std::to_string(vector.size()) +
                 " differs from " + std::to_string(table.dimension));
    }
    table.vectors[fields[0]] = std::move(vector);
  }
  if (table.dimension == 0) throw ValidationError("word vector file is empty");
  return table;
}

WordVectorTable LoadWordVectors(const std::string& path) {
  return ParseWordVectors(ReadFile(path));
}

WordVectorEncoder::WordVectorEncoder(
    std::shared_ptr<const WordVectorTable> table, Weighting weighting,
    std::shared_ptr<const IdfTable> idf)
    : table_(std::move(table)), weighting_(weighting), idf_(std::move(idf)) {
  if (weighting_ == Weighting::kTfidf && !idf_) {
    throw ValidationError("tf-idf weighting needs an idf table");
  }
}

std::string WordVectorEncoder::name() const {
  return weighting_ == Weighting::kUniform ? "wordvec" : "wordvec-tfidf";
}

std::vector<double> WordVectorEncoder::Encode(std::string_view text) const {
  std::vector<double> sum(table_->dimension, 0.0);
  double total_weight = 0;
  for (const std::string& token : SplitWhitespace(text)) {
    auto it = table_->vectors.find(token);
    if (it == table_->vectors.end()) continue;
    double weight = 1.0;
    if (weighting_ == Weighting::kTfidf) {
      const double* idf = idf_->Find(token);
      weight = idf ? *idf : 0.0;
    }
    if (weight == 0.0) continue;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += weight * it->second[i];
    total_weight += weight;
  }
  if (total_weight > 0) {
    for (double& x : sum) x /= total_weight;
  }
  return sum;
}

CandidatePair MakePair(ResponseId x, ResponseId y) {
  if (x == y) throw ValidationError("pair of a response with itself");
  return x < y ? CandidatePair{x, y} : CandidatePair{y, x};
}

double CosineDistance(std::span<const double> x, std::span<const double> y) {
  return 1.0 - Dot(x, y) / (Norm(x) * Norm(y));
}

std::vector<std::vector<double>> EncodeAll(
    const Encoder& encoder, std::span<const ResponseRecord> records) {
  std::vector<std::vector<double>> vectors(records.size());
  ParallelFor(records.size(), [&](std::size_t i) {
    vectors[i] = encoder.Encode(records[i].response.normalized_text);
  });
  return vectors;
}

std::vector<std::vector<ResponseId>> NearestNeighbors(
    std::span<const std::vector<double>> vectors, std::size_t k) {
  const std::size_t n = vectors.size();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = Norm(vectors[i]);

  std::vector<std::vector<ResponseId>> neighbors(n);
  ParallelFor(n, [&](std::size_t i) {
    if (norms[i] == 0.0) return;
    std::vector<std::pair<double, ResponseId>> scored;
    scored.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || norms[j] == 0.0) continue;
      const double distance =
          1.0 - Dot(vectors[i], vectors[j]) / (norms[i] * norms[j]);
      scored.emplace_back(distance, static_cast<ResponseId>(j));
    }
    const std::size_t keep = std::min(k, scored.size());
    std::partial_sort(scored.begin(),
                      scored.begin() + static_cast<std::ptrdiff_t>(keep),
                      scored.end());
    neighbors[i].reserve(keep);
    for (std::size_t r = 0; r < keep; ++r) {
      neighbors[i].push_back(scored[r].second);
    }
  });
  return neighbors;
}

std::vector<CandidatePair> GenerateCandidatePairs(
    std::span<const ResponseRecord> records,
    std::span<const Encoder* const> encoders, std::size_t k) {
  if (k < 1) throw ValidationError("k must be at least 1");
  std::set<CandidatePair> pairs;
  for (const Encoder* encoder : encoders) {
    const auto vectors = EncodeAll(*encoder, records);
    const auto neighbors = NearestNeighbors(vectors, k);
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
      for (ResponseId j : neighbors[i]) {
        pairs.insert(MakePair(static_cast<ResponseId>(i), j));
      }
    }
  }
  return {pairs.begin(), pairs.end()};
}

std::vector<std::unique_ptr<Encoder>> MakeEncoders(
    std::span<const std::string> specs,
    std::span<const ResponseRecord> records) {
  std::vector<std::unique_ptr<Encoder>> encoders;
  std::shared_ptr<const IdfTable> idf;
  const auto shared_idf = [&] {
    if (!idf) {
      idf = std::make_shared<const IdfTable>(TfidfEncoder::Fit(records)->idf());
    }
    return idf;
  };
  for (const std::string& spec : specs) {
    if (spec == "tfidf") {
      encoders.push_back(std::make_unique<TfidfEncoder>(*shared_idf()));
      continue;
    }
    const std::size_t colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    if (colon == std::string::npos || (kind != "wordvec" && kind != "wordvec-tfidf")) {
      throw ValidationError("unknown encoder '" + spec + "'");
    }
    auto table = std::make_shared<const WordVectorTable>(
        LoadWordVectors(spec.substr(colon + 1)));
    if (kind == "wordvec") {
      encoders.push_back(
          std::make_unique<WordVectorEncoder>(table, Weighting::kUniform));
    } else {
      encoders.push_back(std::make_unique<WordVectorEncoder>(
          table, Weighting::kTfidf, shared_idf()));
    }
  }
  if (encoders.empty()) throw ValidationError("no encoders configured");
  return encoders;
}

void WritePairsTsv(std::span<const CandidatePair> pairs,
                   const std::string& path) {
  std::ostringstream out;
  for (const CandidatePair& pair : pairs) out << pair.a << '\t' << pair.b << '\n';
  WriteFileAtomic(path, out.str());
}

std::vector<CandidatePair> ReadPairsTsv(const std::string& path) {
  std::istringstream in(ReadFile(path));
  std::vector<CandidatePair> pairs;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const auto fields = SplitTabs(line);
    try {
      if (fields.size() != 2) throw std::invalid_argument("expected 2 fields");
      const ResponseId a = std::stoi(std::string(fields[0]));
      const ResponseId b = std::stoi(std::string(fields[1]));
      if (a >= b || a < 0) throw std::invalid_argument("pair not canonical");
      pairs.push_back({a, b});
    } catch (const std::exception& e) {
      throw ValidationError(path + " line " + std::to_string(line_number) +
                            ": " + e.what());
    }
  }
  return pairs;
}

}  // namespace replybank

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
#include <set>

#include "doctest.h"
#include "replybank/rng.h"
#include "oracles.h"
#include "test_util.h"

namespace replybank {
namespace {

std::vector<ResponseRecord> Records(const std::vector<std::string>& texts) {
  std::vector<ResponseRecord> records;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    records.push_back({static_cast<ResponseId>(i), {texts[i], {}, 2}});
  }
  return records;
}

TEST_CASE("Idf of a single document is zero everywhere") {
  const auto records = Records({"take care now"});
  const auto encoder = TfidfEncoder::Fit(records);
  for (double x : encoder->Encode("take care")) CHECK(x == 0.0);
}

TEST_CASE("Idf follows ln(N / df)") {
  const auto records = Records({"a b", "a c"});
  const auto encoder = TfidfEncoder::Fit(records);
  const IdfTable& idf = encoder->idf();
  CHECK(*idf.Find("a") == doctest::Approx(0.0));
  CHECK(*idf.Find("b") == doctest::Approx(std::log(2.0)));
  CHECK(*idf.Find("c") == doctest::Approx(std::log(2.0)));
  CHECK(idf.Find("zzz") == nullptr);
  const auto v = encoder->Encode("b b c");
  // tf*idf = (2 ln2, ln2) normalized = (2, 1) / sqrt 5
  CHECK(v[idf.IndexOf("b")] == doctest::Approx(2 / std::sqrt(5.0)));
  CHECK(v[idf.IndexOf("c")] == doctest::Approx(1 / std::sqrt(5.0)));
  CHECK(encoder->Encode("b b c") == v);
  for (double x : encoder->Encode("zzz")) CHECK(x == 0.0);
}

TEST_CASE("Word vector means") {
  auto table = std::make_shared<WordVectorTable>(
      ParseWordVectors("take 1 0\ncare 0 1\n"));
  const WordVectorEncoder uniform(table, Weighting::kUniform);
  CHECK(uniform.Encode("take care") == std::vector<double>{0.5, 0.5});
  CHECK(uniform.Encode("zzz") == std::vector<double>{0, 0});
  CHECK(uniform.name() == "wordvec");

  auto idf = std::make_shared<IdfTable>(
      IdfTable::FromParts({"care", "take"}, {std::log(2.0), 0.0}, 2));
  const WordVectorEncoder weighted(table, Weighting::kTfidf, idf);
  CHECK(weighted.Encode("take care") == std::vector<double>{0, 1});
  CHECK(weighted.name() == "wordvec-tfidf");
}

TEST_CASE("Word vector files report the bad line") {
  auto message = [](std::string_view contents) {
    try {
      ParseWordVectors(contents);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("a 1 2\nb 1 x\n").find("line 2") != std::string::npos);
  CHECK(message("a 1 2\nb 1 2\nc 1\n").find("line 3") != std::string::npos);
  CHECK(message("a\n").find("line 1") != std::string::npos);
  CHECK_THROWS_AS(LoadWordVectors("/nonexistent/vectors.txt"), IoError);
}

TEST_CASE("Cosine distance") {
  const std::vector<double> x = {1, 0}, y = {0, 2}, z = {3, 0};
  CHECK(CosineDistance(x, y) == doctest::Approx(1));
  CHECK(CosineDistance(x, z) == doctest::Approx(0));
}

TEST_CASE("Saturated neighborhoods give every pair") {
  const auto records = Records({"a b", "a c", "b c", "c d", "d e"});
  const auto encoder = TfidfEncoder::Fit(records);
  const Encoder* encoders[] = {encoder.get()};
  std::set<CandidatePair> expected;
  const auto rows = EncodeAll(*encoder, records);
  for (int i = 0; i < 5; ++i) {
    for (int j = i + 1; j < 5; ++j) {
      bool zero_i = std::all_of(rows[i].begin(), rows[i].end(), [](double v) { return v == 0; });
      bool zero_j = std::all_of(rows[j].begin(), rows[j].end(), [](double v) { return v == 0; });
      if (!zero_i && !zero_j) expected.insert({i, j});
    }
  }
  REQUIRE(expected.size() == 10);
  const auto pairs = GenerateCandidatePairs(records, encoders, 4);
  CHECK(std::set<CandidatePair>(pairs.begin(), pairs.end()) == expected);
}

TEST_CASE("Toy corpus matches the exhaustive oracle") {
  const auto records = Records({"take care", "take care now", "see you soon",
                                "see you later", "hello there", "care now please"});
  const auto encoder = TfidfEncoder::Fit(records);
  const Encoder* encoders[] = {encoder.get()};
  for (std::size_t k = 1; k <= 5; ++k) {
    const auto pairs = GenerateCandidatePairs(records, encoders, k);
    CHECK(std::set<CandidatePair>(pairs.begin(), pairs.end()) ==
          oracle::BruteForceKnnPairs(EncodeAll(*encoder, records), k));
  }
}

TEST_CASE("Neighbors skip zero rows and break ties by id") {
  const std::vector<std::vector<double>> rows = {{1, 0}, {0, 0}, {1, 0}, {1, 0}, {0, 1}};
  const auto neighbors = NearestNeighbors(rows, 2);
  CHECK(neighbors[0] == std::vector<ResponseId>{2, 3});
  CHECK(neighbors[1].empty());
  CHECK(neighbors[4] == std::vector<ResponseId>{0, 2});
}

TEST_CASE("Random corpora: oracle agreement, bounds and monotonicity") {
  Rng rng(11);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g", "h"};
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.UniformIndex(30);
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      const std::size_t length = 1 + rng.UniformIndex(4);
      for (std::size_t w = 0; w < length; ++w) text += words[rng.UniformIndex(words.size())] + " ";
      texts.push_back(text + "t" + std::to_string(i % 5));
    }
    const auto records = Records(texts);
    const auto tfidf = TfidfEncoder::Fit(records);
    auto table = std::make_shared<WordVectorTable>();
    table->dimension = 3;
    for (const auto& word : words) {
      table->vectors[word] = {rng.UniformReal() - 0.5, rng.UniformReal() - 0.5,
                              rng.UniformReal() - 0.5};
    }
    const WordVectorEncoder wordvec(table, Weighting::kUniform);
    const std::size_t k = 1 + rng.UniformIndex(5);
    const Encoder* one[] = {tfidf.get()};
    const Encoder* both[] = {tfidf.get(), &wordvec};
    const auto small = GenerateCandidatePairs(records, one, k);
    const auto large = GenerateCandidatePairs(records, both, k);
    const auto wider = GenerateCandidatePairs(records, one, k + 1);

    auto expected = oracle::BruteForceKnnPairs(EncodeAll(*tfidf, records), k);
    CHECK(std::set<CandidatePair>(small.begin(), small.end()) == expected);
    const auto extra = oracle::BruteForceKnnPairs(EncodeAll(wordvec, records), k);
    expected.insert(extra.begin(), extra.end());
    CHECK(std::set<CandidatePair>(large.begin(), large.end()) == expected);

    CHECK(large.size() <= 2 * n * k);
    CHECK(std::is_sorted(large.begin(), large.end()));
    for (const auto& p : large) CHECK(p.a < p.b);
    CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
    CHECK(std::includes(wider.begin(), wider.end(), small.begin(), small.end()));
  }
}

TEST_CASE("Encoder specs and pair files") {
  testing::TempDir dir;
  WriteFileAtomic(dir.File("vec.txt"), "take 1 0\ncare 0 1\n");
  const auto records = Records({"take care", "take", "care"});
  const std::vector<std::string> specs = {"tfidf", "wordvec:" + dir.File("vec.txt"),
                                          "wordvec-tfidf:" + dir.File("vec.txt")};
  const auto encoders = MakeEncoders(specs, records);
  REQUIRE(encoders.size() == 3);
  CHECK(encoders[2]->name() == "wordvec-tfidf");
  const std::vector<std::string> bad = {"bert"};
  CHECK_THROWS_AS(MakeEncoders(bad, records), ValidationError);

  const std::vector<CandidatePair> pairs = {{0, 1}, {1, 2}};
  WritePairsTsv(pairs, dir.File("pairs.tsv"));
  CHECK(ReadPairsTsv(dir.File("pairs.tsv")) == pairs);
}

}  // namespace
}  // namespace replybank

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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "json.hpp"
#include "oracles.h"
#include "replybank/classifier.h"
#include "replybank/corpus.h"
#include "replybank/encode.h"
#include "replybank/metrics.h"
#include "replybank/pipeline.h"
#include "replybank/responsebank.h"
#include "replybank/rng.h"
#include "replybank/service.h"
#include "replybank/simcluster.h"
#include "replybank/synth.h"
#include "test_util.h"

namespace replybank {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Format(const char* fmt, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof(buffer), fmt, args...);
  return buffer;
}

Outcome ClusteringOracle() {
  const auto start = Clock::now();
  Rng rng(20260101);
  int mismatches = 0, unsound = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.UniformIndex(50));
    const double density = 0.05 + 0.9 * rng.UniformReal();
    const auto random = oracle::MakeRandomDistances(rng, n, density);
    const DistanceMatrix d = BuildDistanceMatrix(n, random.scores);
    const auto clusters = Agglomerate(d, kDefaultMergeThreshold);
    if (oracle::Members(clusters) !=
        oracle::NaiveCompleteLinkage(random.dense, kDefaultMergeThreshold)) {
      ++mismatches;
    }
    for (const Cluster& c : clusters) {
      for (ResponseId i : c.member_ids) {
        for (ResponseId j : c.member_ids) {
          if (d.Get(i, j) > kDefaultMergeThreshold) ++unsound;
        }
      }
    }
  }
  const double elapsed = Seconds(start);
  return {mismatches == 0 && unsound == 0 && elapsed < 30,
          Format("200 matrices, %d mismatches, %d violating pairs, %.2f s (limit 30 s)",
                 mismatches, unsound, elapsed)};
}

Outcome KnnOracle() {
  Rng rng(77);
  std::vector<std::string> words;
  for (int w = 0; w < 40; ++w) words.push_back("w" + std::to_string(w));
  int mismatches = 0;
  std::size_t total_pairs = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.UniformIndex(199);
    std::vector<ResponseRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      const std::size_t length = 1 + rng.UniformIndex(6);
      for (std::size_t t = 0; t < length; ++t) {
        if (t > 0) text += ' ';
        text += words[rng.UniformIndex(words.size())];
      }
      records.push_back({static_cast<ResponseId>(i), {text, {}, 2}});
    }
    std::vector<std::unique_ptr<Encoder>> owned;
    owned.push_back(TfidfEncoder::Fit(records));
    const auto* tfidf = static_cast<const TfidfEncoder*>(owned[0].get());
    auto idf = std::make_shared<IdfTable>(tfidf->idf());
    for (int table_id = 0; table_id < 2; ++table_id) {
      auto table = std::make_shared<WordVectorTable>();
      table->dimension = 2 + rng.UniformIndex(6);
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (rng.UniformIndex(8) == 0) continue;  // leave some words out of vocabulary
        std::vector<double> v(table->dimension);
        for (double& x : v) x = rng.UniformReal() - 0.5;
        table->vectors[words[w]] = v;
      }
      owned.push_back(std::make_unique<WordVectorEncoder>(
          table, table_id == 0 ? Weighting::kUniform : Weighting::kTfidf, idf));
    }
    // 1 to 4 encoders, the last one a repeat of tf-idf when all four are used.
    const std::size_t count = 1 + rng.UniformIndex(4);
    std::vector<const Encoder*> encoders;
    for (std::size_t e = 0; e < count; ++e) encoders.push_back(owned[e % owned.size()].get());
    const std::size_t k = 1 + rng.UniformIndex(12);

    std::set<CandidatePair> expected;
    for (const Encoder* encoder : encoders) {
      const auto part = oracle::BruteForceKnnPairs(EncodeAll(*encoder, records), k);
      expected.insert(part.begin(), part.end());
    }
    const auto pairs = GenerateCandidatePairs(records, encoders, k);
    total_pairs += pairs.size();
    if (std::set<CandidatePair>(pairs.begin(), pairs.end()) != expected ||
        pairs.size() != expected.size()) {
      ++mismatches;
    }
  }
  return {mismatches == 0,
          Format("100 corpora, %zu pairs total, %d mismatches", total_pairs, mismatches)};
}

Outcome DistanceFormula() {
  constexpr int kN = 10;
  Rng rng(10);
  int wrong = 0, checked = 0;
  for (int fixture = 0; fixture < 64; ++fixture) {
    std::vector<CandidatePair> candidates;
    std::map<std::pair<int, int>, double> expected_prob;
    std::ostringstream file;
    file.precision(17);
    for (int i = 0; i < kN; ++i) {
      for (int j = i + 1; j < kN; ++j) {
        candidates.push_back({i, j});
        // Fixture 0 scores nothing, fixture 1 everything, the rest a random subset.
        const bool scored = fixture == 1 || (fixture > 1 && rng.UniformIndex(2) == 0);
        if (!scored) continue;
        const double prob = fixture % 3 == 0 ? static_cast<double>(rng.UniformIndex(5)) / 4
                                             : rng.UniformReal();
        expected_prob[{i, j}] = prob;
        file << i << '\t' << j << '\t' << prob << '\n';
      }
    }
    const DistanceMatrix d =
        BuildDistanceMatrix(kN, ParseScores(candidates, kN, file.str()));
    for (int i = 0; i < kN; ++i) {
      for (int j = 0; j < kN; ++j) {
        double want = 1.0;
        if (i == j) {
          want = 0.0;
        } else if (auto it = expected_prob.find({std::min(i, j), std::max(i, j)});
                   it != expected_prob.end()) {
          want = 1.0 - it->second;
        }
        ++checked;
        if (d.Get(i, j) != want) ++wrong;
      }
    }
  }
  return {wrong == 0, Format("64 fixtures, %d entries checked, %d wrong", checked, wrong)};
}

Outcome GradientCheck() {
  Rng rng(606);
  double worst = 0;
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t classes = 2 + rng.UniformIndex(9);
    const std::size_t dim = 1 + rng.UniformIndex(16);
    const std::size_t batch = 1 + rng.UniformIndex(8);
    const double t = 0.3 * rng.UniformReal();
    ClassifierModel model = ClassifierModel::Zeros(classes, dim);
    model.smoothing = t;
    for (double& w : model.weights) w = 2 * rng.UniformReal() - 1;
    for (double& b : model.bias) b = 2 * rng.UniformReal() - 1;
    std::vector<std::vector<double>> inputs;
    std::vector<int> labels;
    std::vector<FeatureExample> examples;
    for (std::size_t n = 0; n < batch; ++n) {
      std::vector<double> x(dim);
      for (double& v : x) v = 2 * rng.UniformReal() - 1;
      const int label = static_cast<int>(rng.UniformIndex(classes));
      inputs.push_back(x);
      labels.push_back(label);
      examples.push_back({SparseVector::FromDense(x), label});
    }
    const auto analytic = ComputeLossAndGrad(model, examples);
    const double eps = 1e-5;
    auto check = [&](std::vector<double>& param, const std::vector<double>& grad) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + eps;
        const double up = oracle::SmoothedCrossEntropy(model.weights, model.bias, inputs, labels, t);
        param[i] = saved - eps;
        const double down = oracle::SmoothedCrossEntropy(model.weights, model.bias, inputs, labels, t);
        param[i] = saved;
        const double numeric = (up - down) / (2 * eps);
        const double scale = std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
        worst = std::max(worst, std::abs(numeric - grad[i]) / scale);
      }
    };
    check(model.weights, analytic.gradients.weights);
    check(model.bias, analytic.gradients.bias);
  }

  double worst_sum = 0;
  for (std::size_t classes = 2; classes <= 50; ++classes) {
    for (double t : {0.0, 0.05, 0.1, 0.3, 0.9}) {
      const auto y = SmoothedTargets(static_cast<ClassId>(classes - 1), classes, t);
      worst_sum = std::max(worst_sum, std::abs(std::accumulate(y.begin(), y.end(), 0.0) - 1));
    }
  }
  const auto y = SmoothedTargets(0, 4, 0.1);
  const double target_error = std::max({std::abs(y[0] - 0.925), std::abs(y[1] - 0.025),
                                        std::abs(y[2] - 0.025), std::abs(y[3] - 0.025)});
  return {worst <= 1e-4 && worst_sum <= 1e-12 && target_error <= 1e-12,
          Format("max relative error %.2e (limit 1e-4), max |sum-1| %.1e, "
                 "t=0.1 K=4 target error %.1e (limit 1e-12)",
                 worst, worst_sum, target_error)};
}

Outcome Convergence() {
  Rng rng(300);
  const double centers[3][2] = {{2, 0}, {-1, 1.73}, {-1, -1.73}};
  std::vector<FeatureExample> examples;
  for (int n = 0; n < 300; ++n) {
    const int c = n % 3;
    const double r = 0.8 * rng.UniformReal(), angle = 6.283185307179586 * rng.UniformReal();
    const std::vector<double> x = {centers[c][0] + r * std::cos(angle),
                                   centers[c][1] + r * std::sin(angle)};
    examples.push_back({SparseVector::FromDense(x), c});
  }
  const auto start = Clock::now();
  TrainConfig config;
  config.epochs = 200;
  config.seed = 1;
  const TrainResult result = Train(examples, 3, 2, config);
  const double elapsed = Seconds(start);
  const double accuracy = *Accuracy(result.model, examples);
  return {accuracy == 1.0 && elapsed < 10,
          Format("training accuracy %.4f after 200 epochs, %.2f s (limit 10 s)", accuracy,
                 elapsed)};
}

Outcome OptOut() {
  Rng rng(8);
  std::vector<ScoredPrediction> scored;
  std::vector<double> confidences;
  for (int n = 0; n < 10000; ++n) {
    const double p = 0.1 + 0.9 * rng.UniformReal();
    scored.push_back({p, rng.UniformReal() < p});
    confidences.push_back(p);
  }
  std::vector<double> grid;
  for (int i = 0; i <= 100; ++i) grid.push_back(i / 100.0);
  const auto curve = OptOutCurve(scored, grid);
  bool monotone = true;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    monotone = monotone && curve[i].coverage <= curve[i - 1].coverage;
  }
  const double overall = *OptOutCurve(scored, std::vector<double>{0.0})[0].retained_accuracy;
  const double mean_threshold = CalibrateOptOut(confidences, MeanConfidence{});
  const double at_mean =
      *OptOutCurve(scored, std::vector<double>{mean_threshold})[0].retained_accuracy;
  const double half_threshold = CalibrateOptOut(confidences, TargetCoverage{0.5});
  const auto half = OptOutCurve(scored, std::vector<double>{half_threshold})[0];
  const double error_ratio = (1 - *half.retained_accuracy) / (1 - overall);
  return {at_mean > overall && monotone && error_ratio <= 0.6,
          Format("overall acc %.4f, retained at mean threshold %.3f: %.4f, coverage "
                 "non-increasing: %s, error ratio at %.1f%% coverage %.3f (limit 0.6)",
                 overall, mean_threshold, at_mean, monotone ? "yes" : "no",
                 100 * half.coverage, error_ratio)};
}

Outcome Unique() {
  Rng rng(1000);
  std::vector<std::string> suggestions;
  for (int n = 0; n < 1000; ++n) suggestions.push_back("reply " + std::to_string(rng.UniformIndex(10)));
  const double value = UniquePer100(suggestions, 1000, 42);
  const double expected = 10 * (1 - std::pow(0.9, 100));
  const std::vector<std::string> same(1000, "take care");
  const double identical = UniquePer100(same, 1000, 42);
  return {std::abs(value - expected) <= 0.05 && identical == 1.0,
          Format("estimate %.5f vs expected %.5f (tolerance 0.05), identical input %.1f",
                 value, expected, identical)};
}

struct EndToEnd {
  std::string workdir;
  double seconds = 0;
};

std::string CorpusPath() { return std::string(REPLYBANK_TEST_DATA) + "/synth_k20_n2000.jsonl"; }

Outcome EndToEndRecovery(const EndToEnd& run) {
  const std::string dir = run.workdir;
  const auto records = ReadResponsesTsv(dir + "/responses.tsv");
  const auto clusters = ReadClustersJson(dir + "/clusters.json");
  const SynthTruth truth = ReadSynthTruth(CorpusPath() + ".truth.json");
  std::map<std::string, int> intent_of(truth.response_intents.begin(),
                                       truth.response_intents.end());
  std::vector<int> predicted(records.size(), -1), reference(records.size(), -1);
  for (const Cluster& c : clusters) {
    for (ResponseId id : c.member_ids) predicted[id] = c.cluster_id;
  }
  for (const auto& r : records) {
    auto it = intent_of.find(r.response.normalized_text);
    if (it != intent_of.end()) reference[r.response_id] = it->second;
  }
  const PairwiseScores f1 = PairwiseF1(predicted, reference);
  const json extract = json::parse(ReadFile(dir + "/extract.json"));
  const json eval = json::parse(ReadFile(dir + "/eval.json"));
  const double labeled = extract.at("labeledFraction").get<double>();
  const double accuracy = eval.at("accuracy").get<double>();
  return {f1.f1 >= 0.9 && labeled >= 0.6 && accuracy >= 0.8 && run.seconds < 300,
          Format("cluster pairwise F1 %.4f (>= 0.9), labeled fraction %.4f (>= 0.6), "
                 "held-out accuracy %.4f (>= 0.8), %.1f s (< 300 s)",
                 f1.f1, labeled, accuracy, run.seconds)};
}

Outcome Determinism(const EndToEnd& first, const testing::TempDir& scratch) {
  const PipelineResult second = RunPipeline(CorpusPath(), PipelineConfig{}, scratch.File("second"));
  const bool manifests = ReadFile(first.workdir + "/manifest.json") == ReadFile(second.manifest_path);

  const auto records = ReadResponsesTsv(first.workdir + "/responses.tsv");
  const auto clusters = ReadClustersJson(first.workdir + "/clusters.json");
  MergeSession session = MergeSession::Start(clusters, records);
  Rng rng(611);
  const std::string log = scratch.File("decisions.ndjson");
  while (!session.complete()) {
    const ClusterId cluster = session.Current()->cluster.cluster_id;
    const auto choice = session.bank().empty() ? 0 : rng.UniformIndex(3);
    MergeDecision decision{cluster, Skip{}, "2026-01-01T00:00:00Z", "acceptance"};
    if (choice == 0) {
      decision.action = CreateNew{"class " + std::to_string(session.bank().size())};
    } else if (choice == 1) {
      decision.action = AssignTo{static_cast<ClassId>(rng.UniformIndex(session.bank().size()))};
    }
    session.Apply(decision, [&](const MergeDecision& d) { AppendDecisionLog(log, d); });
  }
  session.bank().Save(scratch.File("live_bank.json"));
  MergeSession::Start(clusters, records)
      .Replay(ReadDecisionLog(log))
      .bank()
      .Save(scratch.File("replayed_bank.json"));
  const bool replay =
      ReadFile(scratch.File("live_bank.json")) == ReadFile(scratch.File("replayed_bank.json"));
  return {manifests && replay,
          Format("manifests identical: %s, replayed bank identical: %s (%zu decisions)",
                 manifests ? "yes" : "no", replay ? "yes" : "no", session.decisions().size())};
}

Outcome ExemplarInvariance(const EndToEnd& run) {
  const std::string dir = run.workdir;
  const std::string bytes = ReadFile(dir + "/model.ckpt");
  auto model = std::make_shared<const SuggestionModel>(ParseCheckpoint(bytes));
  const ResponseBank bank = ResponseBank::Load(dir + "/bank.json");
  ServiceConfig config;
  config.threshold_override = 0.0;
  SuggestionService service(model, "acceptance", bank, ReadResponsesTsv(dir + "/responses.tsv"),
                            ReadClustersJson(dir + "/clusters.json"), config);

  // 100 contexts: conversation prefixes ending on a patient turn.
  std::vector<json> requests;
  for (const Conversation& conversation : ReadCorpusFile(CorpusPath())) {
    json turns = json::array();
    for (const Turn& turn : conversation.turns) {
      json pii = json::array();
      for (const IdentitySpan& s : turn.identity_spans) {
        pii.push_back({s.start, s.end, SpeakerName(s.kind)});
      }
      turns.push_back({{"speaker", SpeakerName(turn.speaker)}, {"text", turn.text}, {"pii", pii}});
      if (turn.speaker == Speaker::kPatient) {
        requests.push_back({{"turns", turns}, {"includeProbabilities", true}});
        if (requests.size() == 100) break;
      }
    }
    if (requests.size() == 100) break;
  }

  std::vector<std::vector<double>> before;
  for (const json& r : requests) {
    before.push_back(service.Suggest(r).body.at("probabilities").get<std::vector<double>>());
  }
  const json first = service.Suggest(requests[0]).body;
  const ClassId served = first.at("suggestion").at("classId").get<ClassId>();
  const std::string new_text = "edited exemplar for class " + std::to_string(served);
  for (ClassId id = 0; id < static_cast<ClassId>(bank.size()); ++id) {
    const std::string text = id == served ? new_text : "rewritten " + std::to_string(id);
    if (service.PutExemplar(id, {{"exemplarText", text}}).status != 200) {
      return {false, "exemplar edit rejected"};
    }
  }
  int changed = 0;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto after = service.Suggest(requests[i]).body.at("probabilities").get<std::vector<double>>();
    if (after != before[i]) ++changed;
  }
  const json after_first = service.Suggest(requests[0]).body;
  const bool text_changed =
      after_first.at("suggestion").at("exemplarText") == new_text &&
      first.at("suggestion").at("exemplarText") != new_text;
  return {requests.size() == 100 && changed == 0 && text_changed,
          Format("%zu contexts, %d probability vectors changed, served text updated: %s",
                 requests.size(), changed, text_changed ? "yes" : "no")};
}

}  // namespace
}  // namespace replybank

int main() {
  using namespace replybank;
  int failures = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& check) {
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", outcome.pass ? "PASS" : "FAIL", name, outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  };

  report("clustering-oracle", ClusteringOracle);
  report("knn-oracle", KnnOracle);
  report("distance-formula", DistanceFormula);
  report("gradient-check", GradientCheck);
  report("convergence", Convergence);
  report("opt-out", OptOut);
  report("unique-per-100", Unique);

  testing::TempDir scratch;
  EndToEnd run;
  run.workdir = scratch.File("first");
  std::string pipeline_error;
  try {
    const auto start = Clock::now();
    RunPipeline(CorpusPath(), PipelineConfig{}, run.workdir);
    run.seconds = Seconds(start);
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  auto needs_pipeline = [&](const std::function<Outcome()>& check) {
    return [&, check]() -> Outcome {
      if (!pipeline_error.empty()) return {false, "pipeline failed: " + pipeline_error};
      return check();
    };
  };
  report("end-to-end-synthetic", needs_pipeline([&] { return EndToEndRecovery(run); }));
  report("determinism", needs_pipeline([&] { return Determinism(run, scratch); }));
  report("exemplar-edit-invariance", needs_pipeline([&] { return ExemplarInvariance(run); }));

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

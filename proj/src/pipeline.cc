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
#include <functional>
#include <map>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "replybank/encode.h"
#include "replybank/metrics.h"
#include "replybank/responsebank.h"
#include "replybank/rng.h"
#include "replybank/simcluster.h"

namespace replybank {

using nlohmann::json;
namespace fs = std::filesystem;

std::string PipelineConfig::ToJson() const {
  const json doc = {
      {"encoders", encoders},
      {"k", k},
      {"threshold", threshold},
      {"scoresFile", scores_file},
      {"decisionLog", decision_log},
      {"maxTurns", context.max_turns},
      {"maxTokens", context.max_tokens},
      {"smoothing", train.smoothing},
      {"batchSize", train.batch_size},
      {"learningRate", train.learning_rate},
      {"epochs", train.epochs},
      {"momentum", train.momentum},
      {"seed", train.seed},
      {"validationFraction", validation_fraction},
      {"optOut", opt_out},
      {"uniqueSamples", unique_samples},
  };
  return doc.dump(2) + "\n";
}

PipelineConfig PipelineConfig::FromJson(std::string_view text) {
  PipelineConfig config;
  try {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw ValidationError("config must be a JSON object");
    static const std::set<std::string> kKnown = {
        "encoders", "k", "threshold", "scoresFile", "decisionLog", "maxTurns",
        "maxTokens", "smoothing", "batchSize", "learningRate", "epochs",
        "momentum", "seed", "validationFraction", "optOut", "uniqueSamples"};
    for (const auto& [key, value] : doc.items()) {
      if (!kKnown.contains(key)) {
        throw ValidationError("unknown config key '" + key + "'");
      }
    }
    config.encoders = doc.value("encoders", config.encoders);
    config.k = doc.value("k", config.k);
    config.threshold = doc.value("threshold", config.threshold);
    config.scores_file = doc.value("scoresFile", config.scores_file);
    config.decision_log = doc.value("decisionLog", config.decision_log);
    config.context.max_turns = doc.value("maxTurns", config.context.max_turns);
    config.context.max_tokens =
        doc.value("maxTokens", config.context.max_tokens);
    config.train.smoothing = doc.value("smoothing", config.train.smoothing);
    config.train.batch_size = doc.value("batchSize", config.train.batch_size);
    config.train.learning_rate =
        doc.value("learningRate", config.train.learning_rate);
    config.train.epochs = doc.value("epochs", config.train.epochs);
    config.train.momentum = doc.value("momentum", config.train.momentum);
    config.train.seed = doc.value("seed", config.train.seed);
    config.validation_fraction =
        doc.value("validationFraction", config.validation_fraction);
    config.opt_out = doc.value("optOut", config.opt_out);
    config.unique_samples = doc.value("uniqueSamples", config.unique_samples);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed pipeline config: ") + e.what());
  }
  if (config.k < 1) throw ValidationError("k must be at least 1");
  if (!(config.threshold > 0 && config.threshold < 1)) {
    throw ValidationError("threshold must lie in (0, 1)");
  }
  if (!(config.train.smoothing >= 0 && config.train.smoothing < 1)) {
    throw ValidationError("smoothing must lie in [0, 1)");
  }
  if (!(config.validation_fraction > 0 && config.validation_fraction < 1)) {
    throw ValidationError("validationFraction must lie in (0, 1)");
  }
  if (config.context.max_turns < 1 || config.context.max_tokens < 1) {
    throw ValidationError("maxTurns and maxTokens must be at least 1");
  }
  ParseOptOutRule(config.opt_out);
  return config;
}

std::string PipelineConfig::Hash() const { return Sha256Hex(ToJson()); }

OptOutRule ParseOptOutRule(const std::string& text) {
  if (text == "mean") return MeanConfidence{};
  constexpr std::string_view kPrefix = "coverage:";
  if (text.starts_with(kPrefix)) {
    std::size_t used = 0;
    double coverage = 0;
    const std::string number = text.substr(kPrefix.size());
    try {
      coverage = std::stod(number, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == number.size() && coverage > 0 && coverage <= 1) {
      return TargetCoverage{coverage};
    }
  }
  throw ValidationError("opt-out rule must be 'mean' or 'coverage:<(0,1]>', got '" +
                        text + "'");
}

namespace {

class Runner {
 public:
  Runner(std::string corpus_path, const PipelineConfig& config,
         std::string workdir)
      : corpus_path_(std::move(corpus_path)),
        config_(config),
        workdir_(std::move(workdir)) {
    fs::create_directories(workdir_);
    manifest_path_ = Path("manifest.json");
    if (fs::exists(manifest_path_)) {
      try {
        manifest_ = json::parse(ReadFile(manifest_path_));
      } catch (const json::exception&) {
        manifest_ = json::object();
      }
    }
    if (!manifest_.is_object() ||
        manifest_.value("configHash", std::string()) != config_.Hash()) {
      manifest_ = json::object();
    }
    manifest_["configHash"] = config_.Hash();
    manifest_["config"] = json::parse(config_.ToJson());
    if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
  }

  std::string Path(const std::string& name) const {
    return (fs::path(workdir_) / name).string();
  }

  // Runs `body` unless the recorded key and artifact checksums still match.
  void Stage(const std::string& name, const std::vector<std::string>& inputs,
             const std::vector<std::string>& outputs,
             const std::function<void()>& body) {
    std::string key_material = name + "\n" + config_.Hash() + "\n";
    try {
      for (const std::string& input : inputs) {
        key_material += fs::path(input).filename().string() + "=" +
                        Sha256File(input) + "\n";
      }
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    const std::string key = Sha256Hex(key_material);
    if (IsFresh(name, key, outputs)) {
      result_.stages.push_back({name, false});
      return;
    }
    try {
      body();
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    json artifacts = json::object();
    for (const std::string& output : outputs) {
      artifacts[fs::path(output).filename().string()] = Sha256File(output);
    }
    manifest_["stages"][name] = {{"key", key}, {"artifacts", artifacts}};
    WriteFileAtomic(manifest_path_, manifest_.dump(2) + "\n");
    result_.stages.push_back({name, true});
  }

  PipelineResult Finish() {
    WriteFileAtomic(manifest_path_, manifest_.dump(2) + "\n");
    result_.manifest_path = manifest_path_;
    return result_;
  }

  const std::string& corpus_path() const { return corpus_path_; }

 private:
  bool IsFresh(const std::string& name, const std::string& key,
               const std::vector<std::string>& outputs) const {
    const json& stages = manifest_.at("stages");
    if (!stages.contains(name)) return false;
    const json& entry = stages.at(name);
    if (entry.value("key", std::string()) != key) return false;
    for (const std::string& output : outputs) {
      const std::string file = fs::path(output).filename().string();
      if (!fs::exists(output) || !entry.at("artifacts").contains(file) ||
          entry.at("artifacts").at(file).get<std::string>() != Sha256File(output)) {
        return false;
      }
    }
    return true;
  }

  std::string corpus_path_;
  const PipelineConfig& config_;
  std::string workdir_;
  std::string manifest_path_;
  json manifest_ = json::object();
  PipelineResult result_;
};

// Deterministic conversation split; returns true for held-out conversations.
std::vector<bool> HoldOut(std::size_t conversations, double fraction,
                          std::uint64_t seed) {
  std::vector<std::size_t> order(conversations);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed ^ 0x5eedf00dULL);
  rng.Shuffle(std::span<std::size_t>(order));
  const auto held = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(conversations)));
  std::vector<bool> mask(conversations, false);
  for (std::size_t i = 0; i < held; ++i) mask[order[i]] = true;
  return mask;
}

std::string FormatDouble(double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  return out.str();
}

}  // namespace

PipelineResult RunPipeline(const std::string& corpus_path,
                           const PipelineConfig& config,
                           const std::string& workdir) {
  Runner runner(corpus_path, config, workdir);
  const std::string responses = runner.Path("responses.tsv");
  const std::string corpus_stats = runner.Path("corpus_stats.json");
  const std::string pairs = runner.Path("pairs.tsv");
  const std::string scores = runner.Path("scores.tsv");
  const std::string clusters = runner.Path("clusters.json");
  const std::string bank = runner.Path("bank.json");
  const std::string train_examples = runner.Path("examples.bin");
  const std::string val_examples = runner.Path("val.bin");
  const std::string extract_stats = runner.Path("extract.json");
  const std::string model = runner.Path("model.ckpt");
  const std::string train_log = runner.Path("train_log.json");
  const std::string eval = runner.Path("eval.json");
  const std::string curve = runner.Path("curve.csv");

  std::vector<std::string> bank_inputs = {clusters, responses};
  if (!config.decision_log.empty()) bank_inputs.push_back(config.decision_log);
  std::vector<std::string> score_inputs = {pairs, responses};
  if (!config.scores_file.empty()) score_inputs.push_back(config.scores_file);
  std::vector<std::string> candidate_inputs = {responses};
  for (const std::string& spec : config.encoders) {
    const std::size_t colon = spec.find(':');
    if (colon != std::string::npos) candidate_inputs.push_back(spec.substr(colon + 1));
  }

  runner.Stage("ingest", {corpus_path}, {responses, corpus_stats}, [&] {
    const auto conversations = ReadCorpusFile(corpus_path);
    const auto records = BuildFrequentSet(conversations);
    WriteResponsesTsv(records, responses);
    std::int64_t doctor_turns = 0;
    for (const Conversation& c : conversations) {
      for (const Turn& t : c.turns) doctor_turns += t.speaker == Speaker::kDoctor;
    }
    const CorpusStats stats = ComputeCorpusStats(conversations);
    const json doc = {{"conversations", conversations.size()},
                      {"doctorTurns", doctor_turns},
                      {"frequentResponses", records.size()},
                      {"meanUtterances", stats.mean_utterances},
                      {"sdUtterances", stats.sd_utterances},
                      {"meanWordsPerUtterance", stats.mean_words_per_utterance},
                      {"sdWords", stats.sd_words}};
    WriteFileAtomic(corpus_stats, doc.dump(2) + "\n");
  });

  runner.Stage("candidates", candidate_inputs, {pairs}, [&] {
    const auto records = ReadResponsesTsv(responses);
    if (records.size() < 2) {
      throw ValidationError("fewer than two frequent responses");
    }
    const auto encoders = MakeEncoders(config.encoders, records);
    std::vector<const Encoder*> views;
    for (const auto& encoder : encoders) views.push_back(encoder.get());
    WritePairsTsv(GenerateCandidatePairs(records, views, config.k), pairs);
  });

  runner.Stage("score", score_inputs, {scores}, [&] {
    const auto records = ReadResponsesTsv(responses);
    const auto candidates = ReadPairsTsv(pairs);
    const auto scored =
        config.scores_file.empty()
            ? JaccardScores(candidates, records)
            : LoadScores(candidates, records.size(), config.scores_file);
    WriteScoresTsv(scored, scores);
  });

  runner.Stage("cluster", {pairs, scores, responses}, {clusters}, [&] {
    const auto records = ReadResponsesTsv(responses);
    const auto candidates = ReadPairsTsv(pairs);
    const auto scored = LoadScores(candidates, records.size(), scores);
    const DistanceMatrix matrix = BuildDistanceMatrix(records.size(), scored);
    WriteClustersJson(Agglomerate(matrix, config.threshold, records), clusters);
  });

  runner.Stage("bank", bank_inputs, {bank}, [&] {
    const auto records = ReadResponsesTsv(responses);
    const auto cluster_list = ReadClustersJson(clusters);
    if (config.decision_log.empty()) {
      AutoBank(cluster_list, records).Save(bank);
    } else {
      MergeSession session = MergeSession::Start(cluster_list, records);
      const auto decisions = ReadDecisionLog(config.decision_log);
      session.Replay(decisions).bank().Save(bank);
    }
  });

  runner.Stage("extract", {corpus_path, bank, responses},
               {train_examples, val_examples, extract_stats}, [&] {
    const auto conversations = ReadCorpusFile(corpus_path);
    const auto records = ReadResponsesTsv(responses);
    const ResponseBank loaded = ResponseBank::Load(bank);
    const std::vector<bool> held_out = HoldOut(
        conversations.size(), config.validation_fraction, config.train.seed);
    std::vector<Conversation> train_part;
    std::vector<Conversation> val_part;
    for (std::size_t i = 0; i < conversations.size(); ++i) {
      (held_out[i] ? val_part : train_part).push_back(conversations[i]);
    }
    const auto train_set =
        ExtractLabeledExamples(train_part, loaded, records, config.context);
    const auto val_set =
        ExtractLabeledExamples(val_part, loaded, records, config.context);
    WriteExamples(train_set.examples, train_examples);
    WriteExamples(val_set.examples, val_examples);
    const std::int64_t doctor_turns = train_set.doctor_turns + val_set.doctor_turns;
    const std::int64_t labeled = train_set.labeled_turns + val_set.labeled_turns;
    const json doc = {
        {"doctorTurns", doctor_turns},
        {"labeledTurns", labeled},
        {"labeledFraction", doctor_turns == 0 ? 0.0
                                               : static_cast<double>(labeled) /
                                                     static_cast<double>(doctor_turns)},
        {"trainExamples", train_set.examples.size()},
        {"validationExamples", val_set.examples.size()}};
    WriteFileAtomic(extract_stats, doc.dump(2) + "\n");
  });

  runner.Stage("train", {train_examples, val_examples, bank}, {model, train_log},
               [&] {
    const ResponseBank loaded = ResponseBank::Load(bank);
    const auto examples = ReadExamples(train_examples);
    if (examples.empty()) throw ValidationError("no labeled training examples");
    std::vector<std::vector<std::string>> contexts;
    for (const LabeledExample& e : examples) contexts.push_back(e.context_tokens);
    SuggestionModel trained{FeatureExtractor::FitTfidf(contexts), {}};
    const auto features = Featurize(trained.extractor, examples);
    TrainResult result = Train(features, loaded.size(),
                               trained.extractor.dimension(), config.train,
                               loaded.version());
    trained.classifier = std::move(result.model);
    const auto validation =
        Featurize(trained.extractor, ReadExamples(val_examples));
    if (!validation.empty()) {
      std::vector<double> confidences;
      for (const ScoredPrediction& s :
           ScorePredictions(trained.classifier, validation)) {
        confidences.push_back(s.max_prob);
      }
      trained.classifier.opt_out_threshold =
          CalibrateOptOut(confidences, ParseOptOutRule(config.opt_out));
    }
    SaveCheckpoint(trained, model);
    const json log = {{"epochLosses", result.epoch_losses},
                      {"warnings", result.warnings},
                      {"optOutThreshold", trained.classifier.opt_out_threshold}};
    WriteFileAtomic(train_log, log.dump(2) + "\n");
  });

  runner.Stage("eval", {model, val_examples, bank}, {eval, curve}, [&] {
    const SuggestionModel loaded = LoadCheckpoint(model);
    const ResponseBank loaded_bank = ResponseBank::Load(bank);
    const auto validation = Featurize(loaded.extractor, ReadExamples(val_examples));
    if (validation.empty()) throw ValidationError("no held-out examples");
    ClassifierModel open = loaded.classifier;
    open.opt_out_threshold = 0.0;
    const auto scored = ScorePredictions(open, validation);
    std::vector<double> thresholds;
    for (int i = 0; i <= 20; ++i) thresholds.push_back(i / 20.0);
    const auto points = OptOutCurve(scored, thresholds);
    std::ostringstream csv;
    csv << "threshold,coverage,retained_accuracy\n";
    for (const OptOutPoint& p : points) {
      csv << FormatDouble(p.threshold) << ',' << FormatDouble(p.coverage) << ','
          << (p.retained_accuracy ? FormatDouble(*p.retained_accuracy) : "")
          << '\n';
    }
    WriteFileAtomic(curve, csv.str());

    const double threshold = loaded.classifier.opt_out_threshold;
    const auto at_threshold =
        OptOutCurve(scored, std::span<const double>(&threshold, 1)).front();
    std::vector<std::string> suggestions;
    for (const FeatureExample& example : validation) {
      suggestions.push_back(
          loaded_bank.at(Predict(open, example.features).top_class_id).exemplar_text);
    }
    json doc = {{"examples", validation.size()},
                {"accuracy", *Accuracy(open, validation)},
                {"optOutThreshold", threshold},
                {"coverageAtThreshold", at_threshold.coverage},
                {"retainedAccuracyAtThreshold",
                 at_threshold.retained_accuracy ? json(*at_threshold.retained_accuracy)
                                                : json(nullptr)}};
    if (suggestions.size() >= kBootstrapSize) {
      doc["uniquePer100"] =
          UniquePer100(suggestions, config.unique_samples, config.train.seed);
    }
    WriteFileAtomic(eval, doc.dump(2) + "\n");
  });

  return runner.Finish();
}

}  // namespace replybank

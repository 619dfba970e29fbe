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

// Command-line entry point for every pipeline stage, the full pipeline, the
// synthetic corpus generator, and the HTTP service.
//
// Exit codes: 0 success, 2 validation error, 3 stage failure.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"
#include "replybank/classifier.h"
#include "replybank/corpus.h"
#include "replybank/encode.h"
#include "replybank/metrics.h"
#include "replybank/pipeline.h"
#include "replybank/responsebank.h"
#include "replybank/service.h"
#include "replybank/simcluster.h"
#include "replybank/synth.h"

namespace {

using nlohmann::json;
using namespace replybank;

constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

std::vector<std::string> SplitComma(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

std::vector<std::string> ReadLines(const std::string& path) {
  std::istringstream in(ReadFile(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

httplib::Server* g_server = nullptr;

void StopServer(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Response-class mining, suggestion training and serving"};
  app.require_subcommand(1);

  // ingest
  std::string corpus_path, out_path;
  auto* ingest = app.add_subcommand("ingest", "Build the frequent-response set");
  ingest->add_option("--corpus", corpus_path, "Conversation JSONL")->required();
  ingest->add_option("--out", out_path, "responses.tsv")->required();

  // candidates
  std::string responses_path, encoders_spec = "tfidf";
  std::size_t k = 10;
  auto* candidates =
      app.add_subcommand("candidates", "KNN candidate pairs over encoders");
  candidates->add_option("--responses", responses_path)->required();
  candidates->add_option("--encoders", encoders_spec,
                         "Comma list: tfidf, wordvec:PATH, wordvec-tfidf:PATH");
  candidates->add_option("--k", k, "Neighbors per response")->check(CLI::PositiveNumber);
  candidates->add_option("--out", out_path, "pairs.tsv")->required();

  // score
  std::string pairs_path, scores_path;
  auto* score = app.add_subcommand("score", "Built-in token Jaccard scorer");
  score->add_option("--pairs", pairs_path)->required();
  score->add_option("--responses", responses_path)->required();
  score->add_option("--out", out_path, "scores.tsv")->required();

  // cluster
  double threshold = kDefaultMergeThreshold;
  auto* cluster = app.add_subcommand("cluster", "Complete-linkage clustering");
  cluster->add_option("--pairs", pairs_path)->required();
  cluster->add_option("--scores", scores_path,
                      "Score TSV; omitted means built-in Jaccard scores");
  cluster->add_option("--responses", responses_path)->required();
  cluster->add_option("--threshold", threshold);
  cluster->add_option("--out", out_path, "clusters.json")->required();

  // bank
  std::string clusters_path, bank_path, log_path;
  std::size_t turns = kDefaultMaxTurns, tokens = kDefaultMaxTokens;
  auto* bank = app.add_subcommand("bank", "Response bank operations");
  bank->require_subcommand(1);
  auto* bank_auto = bank->add_subcommand("auto", "One class per cluster");
  bank_auto->add_option("--clusters", clusters_path)->required();
  bank_auto->add_option("--responses", responses_path)->required();
  bank_auto->add_option("--out", out_path, "bank.json")->required();
  auto* bank_replay =
      bank->add_subcommand("replay", "Rebuild a bank from a decision log");
  bank_replay->add_option("--clusters", clusters_path)->required();
  bank_replay->add_option("--responses", responses_path)->required();
  bank_replay->add_option("--log", log_path)->required();
  bank_replay->add_option("--out", out_path, "bank.json")->required();
  auto* bank_extract =
      bank->add_subcommand("extract", "Labeled (context, class) examples");
  bank_extract->add_option("--corpus", corpus_path)->required();
  bank_extract->add_option("--bank", bank_path)->required();
  bank_extract->add_option("--responses", responses_path)->required();
  bank_extract->add_option("--turns", turns)->check(CLI::PositiveNumber);
  bank_extract->add_option("--tokens", tokens)->check(CLI::PositiveNumber);
  bank_extract->add_option("--out", out_path, "examples.bin")->required();
  std::string exemplar_text;
  ClassId class_id = 0;
  auto* bank_edit = bank->add_subcommand("edit", "Replace a class exemplar");
  bank_edit->add_option("--bank", bank_path)->required();
  bank_edit->add_option("--class", class_id)->required();
  bank_edit->add_option("--text", exemplar_text)->required();

  // train
  std::string examples_path, val_path, model_path, opt_out = "mean";
  TrainConfig train_config;
  auto* train = app.add_subcommand("train", "Train the response-class classifier");
  train->add_option("--examples", examples_path)->required();
  train->add_option("--bank", bank_path)->required();
  train->add_option("--epochs", train_config.epochs);
  train->add_option("--lr", train_config.learning_rate);
  train->add_option("--batch", train_config.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--seed", train_config.seed);
  train->add_option("--t", train_config.smoothing, "Label smoothing");
  train->add_option("--momentum", train_config.momentum);
  train->add_option("--val", val_path, "Held-out examples for opt-out calibration");
  train->add_option("--optout", opt_out, "mean or coverage:<fraction>");
  train->add_option("--out", model_path, "model.ckpt")->required();

  // eval
  std::string curve_path;
  auto* eval = app.add_subcommand("eval", "Accuracy and opt-out curve");
  eval->add_option("--model", model_path)->required();
  eval->add_option("--examples", examples_path)->required();
  eval->add_option("--optout-curve", curve_path, "CSV output");

  // metrics
  std::string suggestions_path;
  std::uint64_t seed = 0;
  std::size_t samples = 1000;
  auto* metrics = app.add_subcommand("metrics", "Suggestion metrics");
  metrics->require_subcommand(1);
  auto* unique = metrics->add_subcommand("unique-per-100",
                                         "Bootstrap distinct suggestions per 100");
  unique->add_option("--suggestions", suggestions_path, "One suggestion per line")
      ->required();
  unique->add_option("--seed", seed);
  unique->add_option("--samples", samples)->check(CLI::PositiveNumber);

  // pipeline
  std::string config_path, workdir;
  auto* pipeline = app.add_subcommand("pipeline", "End-to-end pipeline");
  pipeline->require_subcommand(1);
  auto* pipeline_run = pipeline->add_subcommand("run", "Run or resume every stage");
  pipeline_run->add_option("--corpus", corpus_path)->required();
  pipeline_run->add_option("--config", config_path, "Config JSON (defaults if omitted)");
  pipeline_run->add_option("--workdir", workdir)->required();
  auto* pipeline_config =
      pipeline->add_subcommand("config", "Write the default config");
  pipeline_config->add_option("--out", out_path)->required();

  // synth
  SynthConfig synth_config;
  auto* synth = app.add_subcommand("synth", "Synthetic corpus");
  synth->require_subcommand(1);
  auto* synth_gen = synth->add_subcommand("gen", "Generate conversations");
  synth_gen->add_option("--classes", synth_config.classes);
  synth_gen->add_option("--conversations", synth_config.conversations);
  synth_gen->add_option("--seed", synth_config.seed);
  synth_gen->add_option("--out", out_path)->required();

  // serve
  ServiceConfig service_config;
  std::string listen = "127.0.0.1:8080";
  double threshold_override = -1;
  auto* serve = app.add_subcommand("serve", "HTTP service");
  serve->add_option("--listen", listen, "host:port")
      ->envname("REPLYBANK_LISTEN");
  serve->add_option("--model", service_config.model_path)
      ->envname("REPLYBANK_MODEL");
  serve->add_option("--bank", service_config.bank_path)
      ->envname("REPLYBANK_BANK");
  serve->add_option("--responses", service_config.responses_path)
      ->envname("REPLYBANK_RESPONSES");
  serve->add_option("--clusters", service_config.clusters_path)
      ->envname("REPLYBANK_CLUSTERS");
  serve->add_option("--decision-log-dir", service_config.decision_log_dir)
      ->envname("REPLYBANK_DECISION_LOG_DIR");
  serve->add_option("--threshold", threshold_override,
                    "Opt-out threshold override in [0, 1]")
      ->envname("REPLYBANK_THRESHOLD");
  serve->add_option("--tokens", service_config.max_tokens);
  serve->add_option("--static-dir", service_config.static_dir, "UI assets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const auto conversations = ReadCorpusFile(corpus_path);
      const auto records = BuildFrequentSet(conversations);
      WriteResponsesTsv(records, out_path);
      std::cout << records.size() << " frequent responses\n";
    } else if (*candidates) {
      const auto records = ReadResponsesTsv(responses_path);
      if (records.size() < 2) throw ValidationError("need at least two responses");
      const auto encoders = MakeEncoders(SplitComma(encoders_spec), records);
      std::vector<const Encoder*> views;
      for (const auto& e : encoders) views.push_back(e.get());
      const auto pairs = GenerateCandidatePairs(records, views, k);
      WritePairsTsv(pairs, out_path);
      std::cout << pairs.size() << " candidate pairs\n";
    } else if (*score) {
      const auto records = ReadResponsesTsv(responses_path);
      WriteScoresTsv(JaccardScores(ReadPairsTsv(pairs_path), records), out_path);
    } else if (*cluster) {
      const auto records = ReadResponsesTsv(responses_path);
      const auto pairs = ReadPairsTsv(pairs_path);
      const auto scores = scores_path.empty()
                              ? JaccardScores(pairs, records)
                              : LoadScores(pairs, records.size(), scores_path);
      const auto clusters = Agglomerate(
          BuildDistanceMatrix(records.size(), scores), threshold, records);
      WriteClustersJson(clusters, out_path);
      std::cout << clusters.size() << " clusters\n";
    } else if (*bank_auto) {
      const auto records = ReadResponsesTsv(responses_path);
      AutoBank(ReadClustersJson(clusters_path), records).Save(out_path);
    } else if (*bank_replay) {
      const auto records = ReadResponsesTsv(responses_path);
      const MergeSession session =
          MergeSession::Start(ReadClustersJson(clusters_path), records);
      session.Replay(ReadDecisionLog(log_path)).bank().Save(out_path);
    } else if (*bank_extract) {
      const auto extraction = ExtractLabeledExamples(
          ReadCorpusFile(corpus_path), ResponseBank::Load(bank_path),
          ReadResponsesTsv(responses_path), {turns, tokens});
      WriteExamples(extraction.examples, out_path);
      std::cout << extraction.examples.size() << " labeled examples, labeled fraction "
                << extraction.labeled_fraction() << '\n';
    } else if (*bank_edit) {
      ResponseBank loaded = ResponseBank::Load(bank_path);
      loaded.EditExemplar(class_id, exemplar_text);
      loaded.Save(bank_path);
    } else if (*train) {
      const ResponseBank loaded = ResponseBank::Load(bank_path);
      const auto examples = ReadExamples(examples_path);
      std::vector<std::vector<std::string>> contexts;
      for (const auto& e : examples) contexts.push_back(e.context_tokens);
      SuggestionModel trained{FeatureExtractor::FitTfidf(contexts), {}};
      TrainResult result =
          Train(Featurize(trained.extractor, examples), loaded.size(),
                trained.extractor.dimension(), train_config, loaded.version());
      for (const std::string& warning : result.warnings) {
        std::cerr << "warning: " << warning << '\n';
      }
      trained.classifier = std::move(result.model);
      if (!val_path.empty()) {
        std::vector<double> confidences;
        for (const auto& s : ScorePredictions(
                 trained.classifier,
                 Featurize(trained.extractor, ReadExamples(val_path)))) {
          confidences.push_back(s.max_prob);
        }
        trained.classifier.opt_out_threshold =
            CalibrateOptOut(confidences, ParseOptOutRule(opt_out));
      }
      SaveCheckpoint(trained, model_path);
      for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
        std::cout << "epoch " << e + 1 << " loss " << result.epoch_losses[e] << '\n';
      }
    } else if (*eval) {
      const SuggestionModel loaded = LoadCheckpoint(model_path);
      const auto examples = Featurize(loaded.extractor, ReadExamples(examples_path));
      ClassifierModel open = loaded.classifier;
      open.opt_out_threshold = 0;
      const auto scored = ScorePredictions(open, examples);
      std::vector<double> thresholds;
      for (int i = 0; i <= 20; ++i) thresholds.push_back(i / 20.0);
      const auto curve = OptOutCurve(scored, thresholds);
      if (!curve_path.empty()) {
        std::ostringstream csv;
        csv.precision(17);
        csv << "threshold,coverage,retained_accuracy\n";
        for (const auto& p : curve) {
          csv << p.threshold << ',' << p.coverage << ',';
          if (p.retained_accuracy) csv << *p.retained_accuracy;
          csv << '\n';
        }
        WriteFileAtomic(curve_path, csv.str());
      }
      const auto accuracy = Accuracy(open, examples);
      std::cout << json{{"examples", examples.size()},
                        {"accuracy", accuracy ? json(*accuracy) : json(nullptr)},
                        {"optOutThreshold", loaded.classifier.opt_out_threshold}}
                       .dump(2)
                << '\n';
    } else if (*unique) {
      std::cout << UniquePer100(ReadLines(suggestions_path), samples, seed) << '\n';
    } else if (*pipeline_run) {
      const PipelineConfig config = config_path.empty()
                                        ? PipelineConfig{}
                                        : PipelineConfig::FromJson(ReadFile(config_path));
      const PipelineResult result = RunPipeline(corpus_path, config, workdir);
      for (const StageOutcome& stage : result.stages) {
        std::cout << stage.name << ": " << (stage.ran ? "ran" : "fresh") << '\n';
      }
    } else if (*pipeline_config) {
      WriteFileAtomic(out_path, PipelineConfig{}.ToJson());
    } else if (*synth_gen) {
      WriteSynthCorpus(synth_config, out_path);
    } else if (*serve) {
      const std::size_t colon = listen.rfind(':');
      if (colon == std::string::npos) throw ValidationError("--listen needs host:port");
      service_config.listen_host = listen.substr(0, colon);
      service_config.listen_port = std::stoi(listen.substr(colon + 1));
      if (threshold_override >= 0) {
        if (threshold_override > 1) throw ValidationError("threshold must be in [0, 1]");
        service_config.threshold_override = threshold_override;
      }
      auto service = SuggestionService::FromConfig(service_config);
      httplib::Server server;
      RegisterRoutes(server, *service);
      if (!service_config.static_dir.empty()) {
        server.set_mount_point("/", service_config.static_dir);
      }
      g_server = &server;
      std::signal(SIGINT, StopServer);
      std::signal(SIGTERM, StopServer);
      std::cerr << "listening on " << listen << '\n';
      if (!server.listen(service_config.listen_host, service_config.listen_port)) {
        std::cerr << "cannot listen on " << listen << '\n';
        return 1;
      }
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}

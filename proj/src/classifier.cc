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

#include "replybank/classifier.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"
#include "replybank/rng.h"

namespace replybank {

using nlohmann::json;

namespace {

constexpr std::string_view kLastPrefix = "last:";
constexpr std::string_view kCheckpointFormat = "replybank-ckpt-1";

bool IsSpeakerMarker(std::string_view token) {
  return token == kPatientStart || token == kDoctorStart;
}

void CheckFinite(const SparseVector& features) {
  for (double v : features.values) {
    if (!std::isfinite(v)) throw ValidationError("non-finite feature value");
  }
}

SparseVector FromCounts(const std::map<std::uint32_t, double>& values) {
  SparseVector out;
  out.indices.reserve(values.size());
  out.values.reserve(values.size());
  for (const auto& [index, value] : values) {
    if (value == 0.0) continue;
    out.indices.push_back(index);
    out.values.push_back(value);
  }
  return out;
}

double LogSumExp(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (double z : logits) sum += std::exp(z - peak);
  return peak + std::log(sum);
}

void CheckBatch(const ClassifierModel& model,
                std::span<const FeatureExample> batch) {
  for (const FeatureExample& example : batch) {
    if (example.label < 0 ||
        static_cast<std::size_t>(example.label) >= model.num_classes) {
      throw ValidationError("label " + std::to_string(example.label) +
                            " outside " + std::to_string(model.num_classes) +
                            " classes");
    }
    CheckFinite(example.features);
  }
}

}  // namespace

SparseVector SparseVector::FromDense(std::span<const double> dense) {
  SparseVector out;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] == 0.0) continue;
    out.indices.push_back(static_cast<std::uint32_t>(i));
    out.values.push_back(dense[i]);
  }
  return out;
}

std::vector<double> SparseVector::ToDense(std::size_t dimension) const {
  std::vector<double> dense(dimension, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    dense.at(indices[i]) = values[i];
  }
  return dense;
}

std::vector<std::string> ExpandFeatureTokens(
    std::span<const std::string> context_tokens) {
  std::vector<std::string> expanded(context_tokens.begin(),
                                    context_tokens.end());
  std::size_t last_start = 0;
  for (std::size_t i = context_tokens.size(); i > 0; --i) {
    if (IsSpeakerMarker(context_tokens[i - 1])) {
      last_start = i - 1;
      break;
    }
  }
  for (std::size_t i = last_start; i < context_tokens.size(); ++i) {
    expanded.push_back(std::string(kLastPrefix) + context_tokens[i]);
  }
  return expanded;
}

FeatureExtractor FeatureExtractor::FitTfidf(
    std::span<const std::vector<std::string>> contexts) {
  std::map<std::string, std::size_t> document_frequency;
  for (std::string_view special :
       {kPatientStart, kDoctorStart, kPatientName, kDoctorName}) {
    document_frequency.emplace(special, 0);
  }
  for (const auto& context : contexts) {
    const auto expanded = ExpandFeatureTokens(context);
    const std::set<std::string> seen(expanded.begin(), expanded.end());
    for (const std::string& token : seen) ++document_frequency[token];
  }
  const double n = static_cast<double>(contexts.size());
  std::vector<std::string> vocabulary;
  std::vector<double> idf;
  for (const auto& [token, df] : document_frequency) {
    vocabulary.push_back(token);
    idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(df))) + 1.0);
  }
  FeatureExtractor extractor;
  extractor.mode_ = FeatureMode::kTfidf;
  extractor.vocabulary_ = vocabulary;
  extractor.idf_ =
      IdfTable::FromParts(std::move(vocabulary), std::move(idf), contexts.size());
  return extractor;
}

FeatureExtractor FeatureExtractor::WordVecMean(
    std::shared_ptr<const WordVectorTable> table, std::string source_path) {
  FeatureExtractor extractor;
  extractor.mode_ = FeatureMode::kWordVecMean;
  extractor.vectors_ = std::move(table);
  extractor.vectors_path_ = std::move(source_path);
  return extractor;
}

std::size_t FeatureExtractor::dimension() const {
  return mode_ == FeatureMode::kTfidf ? vocabulary_.size()
                                      : 2 * vectors_->dimension;
}

SparseVector FeatureExtractor::Featurize(
    std::span<const std::string> context_tokens) const {
  if (mode_ == FeatureMode::kTfidf) {
    std::map<std::uint32_t, double> counts;
    for (const std::string& token : ExpandFeatureTokens(context_tokens)) {
      const std::ptrdiff_t index = idf_.IndexOf(token);
      if (index >= 0) counts[static_cast<std::uint32_t>(index)] += 1.0;
    }
    double norm = 0;
    for (auto& [index, value] : counts) {
      value *= idf_.idf()[index];
      norm += value * value;
    }
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (auto& [index, value] : counts) value /= norm;
    }
    return FromCounts(counts);
  }

  const std::size_t d = vectors_->dimension;
  std::vector<double> dense(2 * d, 0.0);
  const auto accumulate = [&](std::span<const std::string> tokens,
                              std::size_t offset) {
    double used = 0;
    for (const std::string& token : tokens) {
      auto it = vectors_->vectors.find(token);
      if (it == vectors_->vectors.end()) continue;
      for (std::size_t i = 0; i < d; ++i) dense[offset + i] += it->second[i];
      used += 1;
    }
    if (used > 0) {
      for (std::size_t i = 0; i < d; ++i) dense[offset + i] /= used;
    }
  };
  accumulate(context_tokens, 0);
  std::size_t last_start = 0;
  for (std::size_t i = context_tokens.size(); i > 0; --i) {
    if (IsSpeakerMarker(context_tokens[i - 1])) {
      last_start = i - 1;
      break;
    }
  }
  accumulate(context_tokens.subspan(last_start), d);
  return SparseVector::FromDense(dense);
}

std::string FeatureExtractor::VocabHash() const {
  std::string material = mode_ == FeatureMode::kTfidf ? "tfidf\n" : "wordvec\n";
  if (mode_ == FeatureMode::kTfidf) {
    for (const std::string& token : vocabulary_) {
      material += token;
      material.push_back('\n');
    }
  } else {
    material += vectors_path_;
  }
  return Sha256Hex(material);
}

std::string FeatureExtractor::ToJson() const {
  json doc;
  if (mode_ == FeatureMode::kTfidf) {
    doc = {{"mode", "tfidf"},
           {"documents", idf_.document_count()},
           {"vocabulary", vocabulary_},
           {"idf", idf_.idf()}};
  } else {
    doc = {{"mode", "wordvecMean"}, {"vectors", vectors_path_}};
  }
  return doc.dump();
}

FeatureExtractor FeatureExtractor::FromJson(std::string_view text) {
  try {
    const json doc = json::parse(text);
    const std::string mode = doc.at("mode").get<std::string>();
    if (mode == "tfidf") {
      FeatureExtractor extractor;
      extractor.mode_ = FeatureMode::kTfidf;
      extractor.vocabulary_ =
          doc.at("vocabulary").get<std::vector<std::string>>();
      extractor.idf_ = IdfTable::FromParts(
          extractor.vocabulary_, doc.at("idf").get<std::vector<double>>(),
          doc.at("documents").get<std::size_t>());
      return extractor;
    }
    if (mode == "wordvecMean") {
      const std::string path = doc.at("vectors").get<std::string>();
      return WordVecMean(
          std::make_shared<const WordVectorTable>(LoadWordVectors(path)), path);
    }
    throw ValidationError("unknown feature mode '" + mode + "'");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed feature extractor: ") +
                          e.what());
  }
}

ClassifierModel ClassifierModel::Zeros(std::size_t num_classes,
                                       std::size_t feature_dim) {
  ClassifierModel model;
  model.num_classes = num_classes;
  model.feature_dim = feature_dim;
  model.weights.assign(num_classes * feature_dim, 0.0);
  model.bias.assign(num_classes, 0.0);
  return model;
}

std::vector<double> ClassifierModel::Logits(const SparseVector& features) const {
  std::vector<double> logits = bias;
  for (std::size_t n = 0; n < features.indices.size(); ++n) {
    const std::uint32_t index = features.indices[n];
    if (index >= feature_dim) {
      throw ValidationError("feature index " + std::to_string(index) +
                            " exceeds dimension " +
                            std::to_string(feature_dim));
    }
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double* row = weights.data() + k * feature_dim;
    double z = logits[k];
    for (std::size_t n = 0; n < features.indices.size(); ++n) {
      z += row[features.indices[n]] * features.values[n];
    }
    logits[k] = z;
  }
  return logits;
}

std::vector<double> SmoothedTargets(ClassId class_id, std::size_t num_classes,
                                    double t) {
  if (!(t >= 0.0 && t < 1.0)) {
    throw ValidationError("smoothing must lie in [0, 1)");
  }
  if (num_classes < 2) throw ValidationError("need at least two classes");
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= num_classes) {
    throw ValidationError("class " + std::to_string(class_id) +
                          " outside " + std::to_string(num_classes) +
                          " classes");
  }
  std::vector<double> targets(num_classes,
                              t / static_cast<double>(num_classes));
  targets[static_cast<std::size_t>(class_id)] += 1.0 - t;
  return targets;
}

std::vector<double> Softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - peak);
    sum += out[k];
  }
  for (double& p : out) p /= sum;
  return out;
}

double ComputeLoss(const ClassifierModel& model,
                   std::span<const FeatureExample> batch) {
  if (batch.empty()) throw ValidationError("empty batch");
  CheckBatch(model, batch);
  double total = 0;
  for (const FeatureExample& example : batch) {
    const std::vector<double> logits = model.Logits(example.features);
    const std::vector<double> targets =
        SmoothedTargets(example.label, model.num_classes, model.smoothing);
    const double log_normalizer = LogSumExp(logits);
    for (std::size_t k = 0; k < logits.size(); ++k) {
      total -= targets[k] * (logits[k] - log_normalizer);
    }
  }
  return total / static_cast<double>(batch.size());
}

LossAndGradient ComputeLossAndGrad(const ClassifierModel& model,
                                   std::span<const FeatureExample> batch) {
  if (batch.empty()) throw ValidationError("empty batch");
  CheckBatch(model, batch);
  LossAndGradient result;
  result.gradients.weights.assign(model.weights.size(), 0.0);
  result.gradients.bias.assign(model.num_classes, 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const FeatureExample& example : batch) {
    const std::vector<double> logits = model.Logits(example.features);
    const std::vector<double> targets =
        SmoothedTargets(example.label, model.num_classes, model.smoothing);
    const double log_normalizer = LogSumExp(logits);
    for (std::size_t k = 0; k < model.num_classes; ++k) {
      const double log_p = logits[k] - log_normalizer;
      result.loss -= targets[k] * log_p;
      const double delta = (std::exp(log_p) - targets[k]) * scale;
      result.gradients.bias[k] += delta;
      double* row = result.gradients.weights.data() + k * model.feature_dim;
      for (std::size_t n = 0; n < example.features.indices.size(); ++n) {
        row[example.features.indices[n]] += delta * example.features.values[n];
      }
    }
  }
  result.loss *= scale;
  return result;
}

TrainResult Train(std::span<const FeatureExample> examples,
                  std::size_t num_classes, std::size_t feature_dim,
                  const TrainConfig& config, std::int64_t bank_version) {
  if (examples.empty()) throw ValidationError("no training examples");
  if (config.batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(config.learning_rate > 0)) {
    throw ValidationError("learning rate must be positive");
  }
  TrainResult result;
  result.model = ClassifierModel::Zeros(num_classes, feature_dim);
  result.model.smoothing = config.smoothing;
  result.model.bank_version = bank_version;
  CheckBatch(result.model, examples);

  std::vector<std::size_t> per_class(num_classes, 0);
  for (const FeatureExample& example : examples) {
    ++per_class[static_cast<std::size_t>(example.label)];
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (per_class[k] == 0) {
      result.warnings.push_back("class " + std::to_string(k) +
                                " has no training examples");
    }
  }

  Rng rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Gradients velocity{std::vector<double>(result.model.weights.size(), 0.0),
                     std::vector<double>(num_classes, 0.0)};
  std::vector<FeatureExample> batch;
  batch.reserve(config.batch_size);
  ClassifierModel& model = result.model;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.Shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
      const Gradients gradients = ComputeLossAndGrad(model, batch).gradients;
      for (std::size_t i = 0; i < model.weights.size(); ++i) {
        velocity.weights[i] =
            config.momentum * velocity.weights[i] + gradients.weights[i];
        model.weights[i] -= config.learning_rate * velocity.weights[i];
      }
      for (std::size_t k = 0; k < num_classes; ++k) {
        velocity.bias[k] = config.momentum * velocity.bias[k] + gradients.bias[k];
        model.bias[k] -= config.learning_rate * velocity.bias[k];
      }
    }
    result.epoch_losses.push_back(ComputeLoss(model, examples));
  }
  return result;
}

Prediction Predict(const ClassifierModel& model, const SparseVector& features) {
  CheckFinite(features);
  Prediction prediction;
  prediction.probabilities = Softmax(model.Logits(features));
  // max_element returns the first maximum, i.e. the smallest class id.
  const auto top = std::max_element(prediction.probabilities.begin(),
                                    prediction.probabilities.end());
  prediction.top_class_id =
      static_cast<ClassId>(top - prediction.probabilities.begin());
  prediction.max_prob = *top;
  prediction.abstained = prediction.max_prob < model.opt_out_threshold;
  return prediction;
}

double CalibrateOptOut(std::span<const double> max_probs,
                       const OptOutRule& rule) {
  if (max_probs.empty()) throw ValidationError("empty validation set");
  if (std::holds_alternative<MeanConfidence>(rule)) {
    double sum = 0;
    for (double p : max_probs) sum += p;
    return sum / static_cast<double>(max_probs.size());
  }
  const double coverage = std::get<TargetCoverage>(rule).coverage;
  if (!(coverage > 0.0 && coverage <= 1.0)) {
    throw ValidationError("coverage must lie in (0, 1]");
  }
  std::vector<double> sorted(max_probs.begin(), max_probs.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto keep = static_cast<std::size_t>(
      std::ceil(coverage * static_cast<double>(sorted.size())));
  return sorted[std::max<std::size_t>(keep, 1) - 1];
}

std::vector<OptOutPoint> OptOutCurve(std::span<const ScoredPrediction> scored,
                                     std::span<const double> thresholds) {
  if (scored.empty()) throw ValidationError("empty evaluation set");
  std::vector<OptOutPoint> curve;
  curve.reserve(thresholds.size());
  for (double threshold : thresholds) {
    std::size_t kept = 0;
    std::size_t correct = 0;
    for (const ScoredPrediction& s : scored) {
      if (s.max_prob < threshold) continue;
      ++kept;
      if (s.correct) ++correct;
    }
    OptOutPoint point;
    point.threshold = threshold;
    point.coverage =
        static_cast<double>(kept) / static_cast<double>(scored.size());
    if (kept > 0) {
      point.retained_accuracy =
          static_cast<double>(correct) / static_cast<double>(kept);
    }
    curve.push_back(point);
  }
  return curve;
}

std::vector<ScoredPrediction> ScorePredictions(
    const ClassifierModel& model, std::span<const FeatureExample> examples) {
  std::vector<ScoredPrediction> scored;
  scored.reserve(examples.size());
  for (const FeatureExample& example : examples) {
    const Prediction prediction = Predict(model, example.features);
    scored.push_back(
        {prediction.max_prob, prediction.top_class_id == example.label});
  }
  return scored;
}

std::optional<double> Accuracy(const ClassifierModel& model,
                               std::span<const FeatureExample> examples,
                               AbstentionPolicy policy) {
  if (examples.empty()) throw ValidationError("empty evaluation set");
  std::size_t scored = 0;
  std::size_t correct = 0;
  for (const FeatureExample& example : examples) {
    const Prediction prediction = Predict(model, example.features);
    if (prediction.abstained) {
      if (policy == AbstentionPolicy::kCountWrong) ++scored;
      continue;
    }
    ++scored;
    if (prediction.top_class_id == example.label) ++correct;
  }
  if (scored == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(scored);
}

std::vector<FeatureExample> Featurize(const FeatureExtractor& extractor,
                                      std::span<const LabeledExample> examples) {
  std::vector<FeatureExample> out;
  out.reserve(examples.size());
  for (const LabeledExample& example : examples) {
    out.push_back({extractor.Featurize(example.context_tokens), example.class_id});
  }
  return out;
}

std::string SerializeCheckpoint(const SuggestionModel& model) {
  const ClassifierModel& c = model.classifier;
  if (c.weights.size() != c.num_classes * c.feature_dim ||
      c.bias.size() != c.num_classes) {
    throw ValidationError("classifier parameter shapes are inconsistent");
  }
  if (c.feature_dim != model.extractor.dimension()) {
    throw ValidationError("classifier and extractor dimensions differ");
  }
  const json header = {{"format", kCheckpointFormat},
                       {"numClasses", c.num_classes},
                       {"featureDim", c.feature_dim},
                       {"t", c.smoothing},
                       {"threshold", c.opt_out_threshold},
                       {"bankVersion", c.bank_version},
                       {"vocabHash", model.extractor.VocabHash()},
                       {"features", json::parse(model.extractor.ToJson())}};
  std::string out = header.dump();
  out.push_back('\n');
  const auto put = [&out](double value) {
    const auto bits = std::bit_cast<std::uint64_t>(value);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(bits >> (8 * i)));
  };
  for (double w : c.weights) put(w);
  for (double b : c.bias) put(b);
  return out;
}

SuggestionModel ParseCheckpoint(std::string_view data) {
  const std::size_t newline = data.find('\n');
  if (newline == std::string_view::npos) {
    throw ValidationError("checkpoint has no header line");
  }
  SuggestionModel model;
  ClassifierModel& c = model.classifier;
  try {
    const json header = json::parse(data.substr(0, newline));
    if (header.at("format").get<std::string>() != kCheckpointFormat) {
      throw ValidationError("unsupported checkpoint format");
    }
    c.num_classes = header.at("numClasses").get<std::size_t>();
    c.feature_dim = header.at("featureDim").get<std::size_t>();
    c.smoothing = header.at("t").get<double>();
    c.opt_out_threshold = header.at("threshold").get<double>();
    c.bank_version = header.at("bankVersion").get<std::int64_t>();
    model.extractor = FeatureExtractor::FromJson(header.at("features").dump());
    if (model.extractor.VocabHash() != header.at("vocabHash").get<std::string>()) {
      throw ValidationError("checkpoint vocabulary hash mismatch");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint header: ") +
                          e.what());
  }
  if (model.extractor.dimension() != c.feature_dim) {
    throw ValidationError("checkpoint feature dimension mismatch");
  }
  const std::size_t count = c.num_classes * c.feature_dim + c.num_classes;
  const std::string_view body = data.substr(newline + 1);
  if (body.size() != count * 8) {
    throw ValidationError("checkpoint parameter block has " +
                          std::to_string(body.size()) + " bytes, expected " +
                          std::to_string(count * 8));
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(body[i * 8 + b]))
              << (8 * b);
    }
    values[i] = std::bit_cast<double>(bits);
    if (!std::isfinite(values[i])) {
      throw ValidationError("checkpoint contains a non-finite parameter");
    }
  }
  const auto split = values.begin() +
                     static_cast<std::ptrdiff_t>(c.num_classes * c.feature_dim);
  c.weights.assign(values.begin(), split);
  c.bias.assign(split, values.end());
  return model;
}

void SaveCheckpoint(const SuggestionModel& model, const std::string& path) {
  WriteFileAtomic(path, SerializeCheckpoint(model));
}

SuggestionModel LoadCheckpoint(const std::string& path) {
  return ParseCheckpoint(ReadFile(path));
}

}  // namespace replybank

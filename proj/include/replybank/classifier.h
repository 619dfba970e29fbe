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

#ifndef REPLYBANK_CLASSIFIER_H_
#define REPLYBANK_CLASSIFIER_H_

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "replybank/common.h"
#include "replybank/encode.h"
#include "replybank/responsebank.h"

namespace replybank {

inline constexpr double kDefaultSmoothing = 0.1;

// Sorted, duplicate-free indices with matching values.
struct SparseVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  static SparseVector FromDense(std::span<const double> dense);
  std::vector<double> ToDense(std::size_t dimension) const;
};

enum class FeatureMode { kTfidf, kWordVecMean };

// Bag-of-features view of an assembled context. Every context token is a
// feature; tokens of the final turn (after the last speaker marker) are
// repeated under a "last:" prefix so the most recent message carries its own
// weights.
//
// kTfidf: raw count times smoothed idf ln((1+N)/(1+df)) + 1, L2-normalized.
// The vocabulary always contains the speaker markers and identity
// placeholders. kWordVecMean: mean word vector of the whole context
// concatenated with the mean of the final turn (2 x D features).
class FeatureExtractor {
 public:
  static FeatureExtractor FitTfidf(
      std::span<const std::vector<std::string>> contexts);
  static FeatureExtractor WordVecMean(
      std::shared_ptr<const WordVectorTable> table, std::string source_path);

  FeatureMode mode() const { return mode_; }
  std::size_t dimension() const;
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  SparseVector Featurize(std::span<const std::string> context_tokens) const;
  // SHA-256 over mode and vocabulary (or vector source path).
  std::string VocabHash() const;

  std::string ToJson() const;
  static FeatureExtractor FromJson(std::string_view text);

 private:
  FeatureMode mode_ = FeatureMode::kTfidf;
  IdfTable idf_;
  std::vector<std::string> vocabulary_;
  std::shared_ptr<const WordVectorTable> vectors_;
  std::string vectors_path_;
};

// Feature tokens for one context: the tokens themselves plus the "last:"
// copies of the final turn.
std::vector<std::string> ExpandFeatureTokens(
    std::span<const std::string> context_tokens);

struct ClassifierModel {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<double> weights;  // row-major num_classes x feature_dim
  std::vector<double> bias;
  double smoothing = kDefaultSmoothing;
  double opt_out_threshold = 0.0;
  std::int64_t bank_version = 0;

  static ClassifierModel Zeros(std::size_t num_classes, std::size_t feature_dim);
  std::vector<double> Logits(const SparseVector& features) const;
};

struct FeatureExample {
  SparseVector features;
  ClassId label = 0;
};

// (1 - t) * onehot(class_id) + t / K.
std::vector<double> SmoothedTargets(ClassId class_id, std::size_t num_classes,
                                    double t);

// Max-subtracted softmax.
std::vector<double> Softmax(std::span<const double> logits);

struct Gradients {
  std::vector<double> weights;
  std::vector<double> bias;
};

struct LossAndGradient {
  double loss = 0;
  Gradients gradients;
};

// Mean label-smoothed cross-entropy over the batch and its exact gradient.
LossAndGradient ComputeLossAndGrad(const ClassifierModel& model,
                                   std::span<const FeatureExample> batch);
double ComputeLoss(const ClassifierModel& model,
                   std::span<const FeatureExample> batch);

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.5;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double smoothing = kDefaultSmoothing;
  double momentum = 0.0;
};

struct TrainResult {
  ClassifierModel model;
  std::vector<double> epoch_losses;  // full-data loss after each epoch
  std::vector<std::string> warnings;
};

// Mini-batch gradient descent. Batches come from a seeded Fisher-Yates
// shuffle each epoch and gradients are reduced in example order, so the
// result is bit-identical for a given seed.
TrainResult Train(std::span<const FeatureExample> examples,
                  std::size_t num_classes, std::size_t feature_dim,
                  const TrainConfig& config, std::int64_t bank_version = 0);

struct Prediction {
  std::vector<double> probabilities;
  ClassId top_class_id = 0;
  double max_prob = 0;
  bool abstained = false;
};

Prediction Predict(const ClassifierModel& model, const SparseVector& features);

// Confidence of a prediction and whether its top class was right.
struct ScoredPrediction {
  double max_prob = 0;
  bool correct = false;
};

struct MeanConfidence {};
struct TargetCoverage {
  double coverage = 1.0;
};
using OptOutRule = std::variant<MeanConfidence, TargetCoverage>;

// MeanConfidence: mean max_prob. TargetCoverage(c): the largest threshold
// keeping at least a fraction c, i.e. the ceil(c*N)-th largest max_prob.
double CalibrateOptOut(std::span<const double> max_probs, const OptOutRule& rule);

struct OptOutPoint {
  double threshold = 0;
  double coverage = 0;
  std::optional<double> retained_accuracy;  // absent when nothing is kept
};

// Coverage is the share with max_prob >= threshold.
std::vector<OptOutPoint> OptOutCurve(std::span<const ScoredPrediction> scored,
                                     std::span<const double> thresholds);

enum class AbstentionPolicy { kExclude, kCountWrong };

// Share of non-abstaining predictions that are correct (kExclude), or share
// of all examples predicted correctly without abstaining (kCountWrong).
// Absent when kExclude leaves nothing to score.
std::optional<double> Accuracy(const ClassifierModel& model,
                               std::span<const FeatureExample> examples,
                               AbstentionPolicy policy = AbstentionPolicy::kExclude);

std::vector<ScoredPrediction> ScorePredictions(
    const ClassifierModel& model, std::span<const FeatureExample> examples);

std::vector<FeatureExample> Featurize(const FeatureExtractor& extractor,
                                      std::span<const LabeledExample> examples);

// Extractor plus classifier, as stored in a checkpoint.
struct SuggestionModel {
  FeatureExtractor extractor;
  ClassifierModel classifier;
};

// Checkpoint: one JSON header line {numClasses, featureDim, t, threshold,
// bankVersion, vocabHash, features}, then little-endian float64 weights
// (row-major) and bias.
void SaveCheckpoint(const SuggestionModel& model, const std::string& path);
SuggestionModel LoadCheckpoint(const std::string& path);
std::string SerializeCheckpoint(const SuggestionModel& model);
SuggestionModel ParseCheckpoint(std::string_view data);

}  // namespace replybank

#endif  // REPLYBANK_CLASSIFIER_H_

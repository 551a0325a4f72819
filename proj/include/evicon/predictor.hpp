#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "evicon/embedding.hpp"
#include "evicon/learncore.hpp"
#include "evicon/ratings.hpp"
#include "json.hpp"

namespace evicon::predict {

inline constexpr std::size_t kDemographicsDim = 6;

/// One-hot age (teenager, adult, elder) followed by one-hot occupation
/// (technology, business, other).
Eigen::VectorXd encode_demographics(const ratings::Demographics& d);

struct PredictorConfig {
  std::size_t hidden = 256;
  std::size_t hidden_layers = 4;
  std::size_t epochs = 20;
  std::size_t batch = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// Shared ReLU trunk over [image emb, text emb, demographics] feeding two
/// independent 5-way heads.
struct PredictorModel {
  learn::DenseNet trunk;
  learn::DenseNet sd_head;
  learn::DenseNet fam_head;
  std::size_t embedding_dim = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;

  std::size_t input_dim() const { return 2 * embedding_dim + kDemographicsDim; }
  static PredictorModel initialize(std::size_t embedding_dim, const PredictorConfig& config);
};

using Distribution = std::array<double, ratings::kLevels>;

struct UsabilityPrediction {
  Distribution semantic_distance{};
  Distribution familiarity{};
};

Eigen::VectorXd predictor_input(const PredictorModel& model, const embed::Embedding& image,
                                const embed::Embedding& text, const ratings::Demographics& d);

UsabilityPrediction predict(const PredictorModel& model, const embed::Embedding& image,
                            const embed::Embedding& text, const ratings::Demographics& d);

/// Mean of `predict` over the nine demographic cells, renormalized.
UsabilityPrediction predict_general(const PredictorModel& model, const embed::Embedding& image,
                                    const embed::Embedding& text);

/// Probability of the top level on the respective head.
double phi_sd(const UsabilityPrediction& p);
double phi_fam(const UsabilityPrediction& p);

struct LabeledExample {
  embed::Embedding image;
  embed::Embedding text;
  ratings::Demographics demographics;
  int semantic_distance = 3;  // 1..5
  int familiarity = 3;        // 1..5
};

/// Joins rating records with their icons and precomputes (frozen) embeddings.
/// Records whose icon is unknown throw evicon::Error("unknown_icon").
std::vector<LabeledExample> make_examples(const embed::EmbeddingModel& embedding,
                                          const std::vector<ratings::RatingRecord>& records,
                                          const std::map<std::string, icon::VectorIcon>& icons);

struct PredictorGradient {
  double loss = 0.0;
  learn::NetGradient trunk;
  learn::NetGradient sd_head;
  learn::NetGradient fam_head;

  std::vector<std::span<const double>> views() const;
};

/// Mean over the batch of CE(sd head) + CE(fam head).
PredictorGradient batch_gradient(const PredictorModel& model, const std::vector<LabeledExample>& batch);
std::vector<std::span<double>> trainable_parameters(PredictorModel& model);

struct TrainedPredictor {
  PredictorModel model;
  std::vector<std::string> warnings;
};

TrainedPredictor train_predictor(const std::vector<LabeledExample>& examples, std::size_t embedding_dim,
                                 const PredictorConfig& config);

struct HeadReport {
  std::string head;  // "sd" | "fam"
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double accuracy = 0.0;
  std::array<std::array<std::size_t, ratings::kLevels>, ratings::kLevels> confusion{};  // [truth][predicted]

  nlohmann::json to_json() const;
};

/// Macro precision/recall from a confusion matrix. Classes absent from the
/// truth are excluded from both means; a present class that is never
/// predicted has precision 0.
HeadReport head_report(std::string head, const std::vector<int>& truth, const std::vector<int>& predicted);

struct EvalReport {
  HeadReport sd;
  HeadReport fam;
};

EvalReport eval_precision_recall(const PredictorModel& model, const std::vector<LabeledExample>& test);

/// 1-based argmax level, ties to the lower level.
int argmax_level(const Distribution& d);

struct LevelLabel {
  int level = 3;
  std::string_view label;
  std::string_view color;  // "red" | "black" | "green"
};

LevelLabel level_label(const Distribution& d);

nlohmann::json to_json(const UsabilityPrediction& p);

nlohmann::json to_json(const PredictorModel& model);
PredictorModel predictor_from_json(const nlohmann::json& j);

}  // namespace evicon::predict

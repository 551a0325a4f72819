#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "evicon/icon_model.hpp"
#include "evicon/learncore.hpp"
#include "evicon/rng.hpp"
#include "json.hpp"

namespace evicon::embed {

inline constexpr std::string_view kPromptTemplate = "A icon looks like a ";

struct Prompt {
  std::string text;
  std::vector<std::string> tokens;
};

/// "A icon looks like a " + tags joined by ", "; tokens are the lower-cased
/// tags split on whitespace.
Prompt build_prompt(const std::vector<std::string>& tags);

/// Unit-norm vector in the joint space.
using Embedding = Eigen::VectorXd;

inline constexpr std::size_t kVocabBuckets = std::size_t{1} << 14;
inline constexpr double kMinTemperature = 0.01;
inline constexpr double kMaxTemperature = 100.0;

struct EmbeddingConfig {
  std::size_t dim = 64;
  std::size_t image_hidden = 256;
  std::size_t token_dim = 32;
  std::size_t text_hidden = 128;
  std::size_t batch = 32;
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  double initial_temperature = 0.07;
  std::size_t resolution = icon::kCanonicalResolution;
  std::uint64_t seed = 0;
};

/// Image encoder: flattened raster -> DenseNet -> D. Text encoder: hashed
/// token table (fixed, generated from `vocab_seed`) mean-pooled -> DenseNet -> D.
struct EmbeddingModel {
  learn::DenseNet image_encoder;
  learn::DenseNet text_encoder;
  double log_temperature = 0.0;
  std::size_t dim = 0;
  std::size_t token_dim = 0;
  std::size_t resolution = icon::kCanonicalResolution;
  std::size_t vocab_buckets = kVocabBuckets;
  std::uint64_t vocab_seed = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;  // epoch-average training loss

  double temperature() const;

  static EmbeddingModel initialize(const EmbeddingConfig& config);
};

std::size_t token_bucket(std::string_view token, std::size_t buckets = kVocabBuckets);
Eigen::VectorXd token_vector(const EmbeddingModel& model, std::string_view token);
Eigen::VectorXd pooled_tokens(const EmbeddingModel& model, const Prompt& prompt);

Eigen::VectorXd image_input(const EmbeddingModel& model, const icon::GrayscaleImage& image);

Embedding encode_image(const EmbeddingModel& model, const icon::GrayscaleImage& image);
Embedding encode_text(const EmbeddingModel& model, const Prompt& prompt);
/// Canonical 28x28 raster of the icon, then encode_image.
Embedding encode_icon(const EmbeddingModel& model, const icon::VectorIcon& icon);

struct InfoNceResult {
  double loss = 0.0;
  Eigen::MatrixXd image_grad;  // N x D
  Eigen::MatrixXd text_grad;   // N x D
  double temperature_grad = 0.0;
  double log_temperature_grad = 0.0;
};

/// Symmetric InfoNCE over matched rows: logits = image * text^T / temperature,
/// loss = (row-wise CE + column-wise CE) / 2 with the diagonal as targets.
InfoNceResult infonce_loss(const Eigen::MatrixXd& image_embs, const Eigen::MatrixXd& text_embs, double temperature);

struct TrainingPair {
  icon::GrayscaleImage image;
  std::vector<std::string> tags;
};

/// Minibatches in which no two items share a prompt (duplicates would be
/// in-batch false negatives). Items are dealt round-robin across prompts;
/// batches smaller than 2 are dropped.
std::vector<std::vector<std::size_t>> distinct_prompt_batches(const std::vector<std::string>& keys, std::size_t batch,
                                                             Rng& rng);

/// Mini-batch InfoNCE descent on both encoders and the temperature.
EmbeddingModel train_embedding(const std::vector<TrainingPair>& dataset, const EmbeddingConfig& config);

/// Loss and analytic gradients of one batch with respect to every trainable
/// parameter (image params, text params, log temperature), in the order of
/// `trainable_parameters`. Exposed for gradient checking.
struct BatchGradient {
  double loss = 0.0;
  learn::NetGradient image;
  learn::NetGradient text;
  double log_temperature = 0.0;

  std::vector<std::span<const double>> views() const;
};

BatchGradient batch_gradient(const EmbeddingModel& model, const Eigen::MatrixXd& images,
                             const Eigen::MatrixXd& tokens);
std::vector<std::span<double>> trainable_parameters(EmbeddingModel& model);

struct Neighbor {
  std::size_t index = 0;
  double similarity = 0.0;
};

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Top-k by descending cosine similarity, ties by ascending index.
std::vector<Neighbor> nearest_neighbors(const Embedding& query, const std::vector<Embedding>& corpus, std::size_t k);

struct MapReport {
  double map_at_k = 0.0;
  std::size_t k = 0;
  std::size_t queries = 0;
  std::vector<std::size_t> skipped;  // items without any relevant partner

  nlohmann::json to_json() const;
};

/// Average precision at k of one ranked relevance list, normalized by
/// min(k, total_relevant).
double average_precision_at_k(const std::vector<bool>& ranked_relevance, std::size_t total_relevant, std::size_t k);

/// Each item queries all other items; relevance is sharing at least one tag.
MapReport map_at_k(const std::vector<Embedding>& embeddings, const std::vector<std::vector<std::string>>& tags,
                   std::size_t k);

MapReport eval_map_at_k(const EmbeddingModel& model, const std::vector<icon::VectorIcon>& test_set, std::size_t k);

struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of 0..n-1; the first round(n * test_fraction) go to test.
/// Both halves are returned sorted.
HoldoutSplit holdout_split(std::size_t n, double test_fraction, std::uint64_t seed);

nlohmann::json to_json(const EmbeddingModel& model);
EmbeddingModel embedding_from_json(const nlohmann::json& j);

}  // namespace evicon::embed

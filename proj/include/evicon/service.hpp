#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "evicon/distinguishability.hpp"
#include "evicon/embedding.hpp"
#include "evicon/icon_model.hpp"
#include "evicon/predictor.hpp"
#include "evicon/ratings.hpp"
#include "json.hpp"

namespace evicon::service {

using nlohmann::json;

struct EngineConfig {
  std::filesystem::path embedding_model;
  std::filesystem::path predictor_model;
  std::filesystem::path dataset;  // icon JSON-lines file used for suggestions and references
  distinct::ScoreWeights weights;
  double warning_threshold = distinct::kDefaultWarningThreshold;
  distinct::ProjectionMethod projection = distinct::ProjectionMethod::pca2d;
  std::uint64_t projection_seed = 0;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "evicon-data";

  /// Relative paths resolve against `base_dir`.
  static EngineConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
  static EngineConfig load(const std::filesystem::path& path);
  /// EVICON_PORT and EVICON_DATA_DIR override the file values.
  void apply_environment();
  void validate() const;
};

/// Models and reference dataset, read-only after construction.
class Engine {
 public:
  Engine(embed::EmbeddingModel embedding, predict::PredictorModel predictor, std::vector<icon::VectorIcon> dataset,
         EngineConfig config);

  /// Loads checkpoints and the dataset named by the config. Any failure is
  /// reported as evicon::Error("startup_failure") with the cause.
  static Engine load(const EngineConfig& config);

  const EngineConfig& config() const noexcept { return config_; }
  const embed::EmbeddingModel& embedding() const noexcept { return embedding_; }
  const predict::PredictorModel& predictor() const noexcept { return predictor_; }
  const std::vector<icon::VectorIcon>& dataset() const noexcept { return dataset_; }
  const std::vector<embed::Embedding>& dataset_embeddings() const noexcept { return dataset_embeddings_; }
  const std::vector<predict::UsabilityPrediction>& dataset_predictions() const noexcept { return dataset_predictions_; }
  json model_versions() const;

  embed::Embedding image_embedding(const icon::VectorIcon& icon) const;
  embed::Embedding text_embedding(const std::vector<std::string>& tags) const;

  /// Demographics omitted -> general-user prediction.
  predict::UsabilityPrediction predict(const icon::VectorIcon& icon,
                                       const std::optional<ratings::Demographics>& demographics = std::nullopt) const;

  /// sd/fam part of the usability objective for a dataset icon.
  double reference_score(std::size_t dataset_index) const;

  /// Highest reference_score dataset icon carrying `tag`, if any.
  std::optional<std::size_t> best_reference(const std::string& tag) const;

 private:
  embed::EmbeddingModel embedding_;
  predict::PredictorModel predictor_;
  std::vector<icon::VectorIcon> dataset_;
  EngineConfig config_;
  std::vector<embed::Embedding> dataset_embeddings_;
  std::vector<predict::UsabilityPrediction> dataset_predictions_;
  std::string embedding_version_;
  std::string predictor_version_;
};

struct IconSetRecord {
  std::string set_id;
  std::vector<icon::VectorIcon> icons;
  std::map<std::string, predict::UsabilityPrediction> prediction_cache;  // general predictions
  std::uint64_t revision = 0;

  /// Persisted form: {"set_id","revision","icons"} (the cache is not persisted).
  json to_json() const;
  static IconSetRecord from_json(const json& j);
  const icon::VectorIcon* find(const std::string& icon_id) const;
};

/// File-backed icon-set store. Mutations of one set are serialized by a
/// per-set lock; different sets proceed independently.
class IconSetStore {
 public:
  /// Empty `data_dir` keeps everything in memory.
  explicit IconSetStore(std::filesystem::path data_dir = {});

  std::string create(std::vector<icon::VectorIcon> icons);
  std::optional<IconSetRecord> snapshot(const std::string& set_id) const;
  std::vector<std::string> ids() const;

  /// Runs `fn` on the set under its lock, then persists unless `save` is
  /// false. Returns false if the set does not exist.
  template <typename Fn>
  bool mutate(const std::string& set_id, Fn&& fn, bool save = true) {
    auto entry = find_entry(set_id);
    if (!entry) return false;
    std::lock_guard lock(entry->mutex);
    fn(entry->record);
    if (save) persist(entry->record);
    return true;
  }

 private:
  struct Entry {
    std::mutex mutex;
    IconSetRecord record;
  };

  std::shared_ptr<Entry> find_entry(const std::string& set_id) const;
  void persist(const IconSetRecord& record) const;

  std::filesystem::path data_dir_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sets_;
  std::uint64_t counter_ = 0;
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  json body;

  friend bool operator==(const ApiResponse&, const ApiResponse&) = default;
};

/// HTTP semantics without the transport: every endpoint is a thin adapter
/// over library calls.
class Api {
 public:
  Api(const Engine& engine, IconSetStore& store) : engine_(engine), store_(store) {}

  ApiResponse handle(const ApiRequest& request);

  // Response bodies, reusable by tests and the CLI.
  json feedback(const IconSetRecord& set, const std::string& icon_id) const;
  json graph(const IconSetRecord& set, double threshold) const;
  json suggestions(const icon::VectorIcon& icon, std::size_t k) const;
  json prediction_response(const icon::VectorIcon& icon,
                           const std::optional<ratings::Demographics>& demographics) const;

 private:
  ApiResponse create_set(const ApiRequest& request);
  ApiResponse get_set(const std::string& set_id);
  ApiResponse update_icon(const std::string& set_id, const std::string& icon_id, const ApiRequest& request);
  ApiResponse predict(const ApiRequest& request);
  ApiResponse get_graph(const std::string& set_id, const ApiRequest& request);
  ApiResponse get_suggestions(const std::string& icon_id, const ApiRequest& request);

  const Engine& engine_;
  IconSetStore& store_;
};

ApiResponse error_response(int status, const std::string& code, const std::string& message);

/// Scores every icon of a set: per-icon terms and the usability objective.
struct SetScore {
  std::string icon_id;
  distinct::ScoreTerms terms;
  double score = 0.0;
};

std::vector<SetScore> score_set(const Engine& engine, const std::vector<icon::VectorIcon>& icons,
                                const distinct::ScoreWeights& weights);

/// httplib adapter around an Api. Every route forwards to Api::handle.
class HttpServer {
 public:
  explicit HttpServer(Api& api);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks serving `api` on host:port until the process is stopped.
void serve(Api& api, const std::string& host, int port);

}  // namespace evicon::service

#include "evicon/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "evicon/error.hpp"
#include "evicon/rng.hpp"

namespace evicon::embed {

Prompt build_prompt(const std::vector<std::string>& tags) {
  if (tags.empty()) throw Error("invalid_argument", "build_prompt: at least one tag is required");
  Prompt p;
  p.text = std::string(kPromptTemplate);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (i > 0) p.text += ", ";
    p.text += tags[i];
    const std::string lowered = icon::normalize_tag(tags[i]);
    std::size_t pos = 0;
    while (pos < lowered.size()) {
      const std::size_t start = lowered.find_first_not_of(" \t\r\n", pos);
      if (start == std::string::npos) break;
      const std::size_t end = std::min(lowered.find_first_of(" \t\r\n", start), lowered.size());
      p.tokens.push_back(lowered.substr(start, end - start));
      pos = end;
    }
  }
  if (p.tokens.empty()) throw Error("invalid_argument", "build_prompt: tags contain no tokens");
  return p;
}

double EmbeddingModel::temperature() const {
  return std::clamp(std::exp(log_temperature), kMinTemperature, kMaxTemperature);
}

EmbeddingModel EmbeddingModel::initialize(const EmbeddingConfig& config) {
  if (config.dim == 0 || config.token_dim == 0) throw Error("invalid_argument", "embedding dimensions must be > 0");
  if (!(config.initial_temperature >= kMinTemperature && config.initial_temperature <= kMaxTemperature)) {
    throw Error("invalid_argument", "initial temperature outside [0.01, 100]");
  }
  using learn::Activation;
  EmbeddingModel m;
  m.dim = config.dim;
  m.token_dim = config.token_dim;
  m.resolution = config.resolution;
  m.seed = config.seed;
  m.vocab_seed = derive_seed(config.seed, 2);
  m.image_encoder = learn::DenseNet::xavier({config.resolution * config.resolution, config.image_hidden, config.dim},
                                            {Activation::relu, Activation::identity}, derive_seed(config.seed, 0));
  m.text_encoder = learn::DenseNet::xavier({config.token_dim, config.text_hidden, config.dim},
                                           {Activation::relu, Activation::identity}, derive_seed(config.seed, 1));
  m.log_temperature = std::log(config.initial_temperature);
  return m;
}

std::size_t token_bucket(std::string_view token, std::size_t buckets) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h % buckets);
}

Eigen::VectorXd token_vector(const EmbeddingModel& model, std::string_view token) {
  Rng rng(derive_seed(model.vocab_seed, token_bucket(token, model.vocab_buckets)));
  Eigen::VectorXd v(static_cast<Eigen::Index>(model.token_dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  return v;
}

Eigen::VectorXd pooled_tokens(const EmbeddingModel& model, const Prompt& prompt) {
  if (prompt.tokens.empty()) throw Error("invalid_argument", "prompt has no tokens");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.token_dim));
  for (const auto& t : prompt.tokens) sum += token_vector(model, t);
  return sum / static_cast<double>(prompt.tokens.size());
}

Eigen::VectorXd image_input(const EmbeddingModel& model, const icon::GrayscaleImage& image) {
  if (image.width() != model.resolution || image.height() != model.resolution) {
    throw Error("dimension_mismatch", "image is " + std::to_string(image.width()) + "x" +
                                          std::to_string(image.height()) + ", model expects " +
                                          std::to_string(model.resolution) + "x" + std::to_string(model.resolution));
  }
  return Eigen::Map<const Eigen::VectorXd>(image.pixels().data(), static_cast<Eigen::Index>(image.size()));
}

namespace {

Eigen::VectorXd normalized(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
    out(0) = 1.0;
    return out;
  }
  return v / n;
}

// Column-wise normalization and its backward pass.
Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& raw, Eigen::VectorXd& norms) {
  norms = raw.colwise().norm().transpose().cwiseMax(1e-12);
  Eigen::MatrixXd out = raw;
  for (Eigen::Index c = 0; c < raw.cols(); ++c) out.col(c) /= norms(c);
  return out;
}

Eigen::MatrixXd normalize_columns_backward(const Eigen::MatrixXd& unit, const Eigen::VectorXd& norms,
                                           const Eigen::MatrixXd& grad_unit) {
  Eigen::MatrixXd out(unit.rows(), unit.cols());
  for (Eigen::Index c = 0; c < unit.cols(); ++c) {
    const double proj = unit.col(c).dot(grad_unit.col(c));
    out.col(c) = (grad_unit.col(c) - unit.col(c) * proj) / norms(c);
  }
  return out;
}

}  // namespace

Embedding encode_image(const EmbeddingModel& model, const icon::GrayscaleImage& image) {
  return normalized(learn::forward(model.image_encoder, image_input(model, image)));
}

Embedding encode_text(const EmbeddingModel& model, const Prompt& prompt) {
  return normalized(learn::forward(model.text_encoder, pooled_tokens(model, prompt)));
}

Embedding encode_icon(const EmbeddingModel& model, const icon::VectorIcon& icon) {
  return encode_image(model, icon::canonical_raster(icon, model.resolution));
}

InfoNceResult infonce_loss(const Eigen::MatrixXd& image_embs, const Eigen::MatrixXd& text_embs, double temperature) {
  if (image_embs.rows() < 1 || image_embs.rows() != text_embs.rows() || image_embs.cols() != text_embs.cols()) {
    throw Error("dimension_mismatch", "infonce_loss: embedding matrices must both be N x D with N >= 1");
  }
  if (!image_embs.allFinite() || !text_embs.allFinite() || !std::isfinite(temperature) || !(temperature > 0.0)) {
    throw Error("non_finite", "infonce_loss: non-finite input");
  }
  const Eigen::Index n = image_embs.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::MatrixXd logits = image_embs * text_embs.transpose() / temperature;

  InfoNceResult out;
  Eigen::MatrixXd grad_logits = Eigen::MatrixXd::Zero(n, n);
  double row_loss = 0.0;
  double col_loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = learn::softmax_cross_entropy(logits.row(i).transpose(), static_cast<std::size_t>(i));
    row_loss += r.loss;
    grad_logits.row(i) += 0.5 * inv_n * r.grad.transpose();
    const auto c = learn::softmax_cross_entropy(logits.col(i), static_cast<std::size_t>(i));
    col_loss += c.loss;
    grad_logits.col(i) += 0.5 * inv_n * c.grad;
  }
  out.loss = 0.5 * (row_loss + col_loss) * inv_n;
  out.image_grad = grad_logits * text_embs / temperature;
  out.text_grad = grad_logits.transpose() * image_embs / temperature;
  // d logits / d temperature = -logits / temperature
  out.log_temperature_grad = -(grad_logits.cwiseProduct(logits)).sum();
  out.temperature_grad = out.log_temperature_grad / temperature;
  return out;
}

std::vector<std::span<const double>> BatchGradient::views() const {
  auto out = image.views();
  const auto t = text.views();
  out.insert(out.end(), t.begin(), t.end());
  out.emplace_back(&log_temperature, 1);
  return out;
}

std::vector<std::span<double>> trainable_parameters(EmbeddingModel& model) {
  auto out = model.image_encoder.parameters();
  const auto t = model.text_encoder.parameters();
  out.insert(out.end(), t.begin(), t.end());
  out.emplace_back(&model.log_temperature, 1);
  return out;
}

BatchGradient batch_gradient(const EmbeddingModel& model, const Eigen::MatrixXd& images,
                             const Eigen::MatrixXd& tokens) {
  learn::ForwardCache image_cache;
  learn::ForwardCache text_cache;
  const Eigen::MatrixXd image_raw = learn::forward_batch(model.image_encoder, images, &image_cache);
  const Eigen::MatrixXd text_raw = learn::forward_batch(model.text_encoder, tokens, &text_cache);
  Eigen::VectorXd image_norms;
  Eigen::VectorXd text_norms;
  const Eigen::MatrixXd image_unit = normalize_columns(image_raw, image_norms);
  const Eigen::MatrixXd text_unit = normalize_columns(text_raw, text_norms);

  const double temperature = std::exp(model.log_temperature);
  const InfoNceResult nce = infonce_loss(image_unit.transpose(), text_unit.transpose(), temperature);

  BatchGradient g;
  g.loss = nce.loss;
  g.image = learn::backward_batch(model.image_encoder, image_cache,
                                  normalize_columns_backward(image_unit, image_norms, nce.image_grad.transpose()));
  g.text = learn::backward_batch(model.text_encoder, text_cache,
                                 normalize_columns_backward(text_unit, text_norms, nce.text_grad.transpose()));
  g.log_temperature = nce.log_temperature_grad;
  return g;
}

std::vector<std::vector<std::size_t>> distinct_prompt_batches(const std::vector<std::string>& keys, std::size_t batch,
                                                             Rng& rng) {
  if (batch < 2) throw Error("invalid_argument", "distinct_prompt_batches: batch must be >= 2");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < keys.size(); ++i) groups[keys[i]].push_back(i);
  std::vector<std::vector<std::size_t>> buckets;
  std::size_t rounds = 0;
  for (auto& [key, members] : groups) {
    rng.shuffle(members);
    rounds = std::max(rounds, members.size());
    buckets.push_back(std::move(members));
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t r = 0; r < rounds; ++r) {
    std::vector<std::size_t> round;
    for (const auto& bucket : buckets) {
      if (r < bucket.size()) round.push_back(bucket[r]);
    }
    rng.shuffle(round);
    for (std::size_t start = 0; start < round.size(); start += batch) {
      const std::size_t end = std::min(round.size(), start + batch);
      if (end - start < 2) continue;
      out.emplace_back(round.begin() + static_cast<std::ptrdiff_t>(start), round.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  rng.shuffle(out);
  return out;
}

EmbeddingModel train_embedding(const std::vector<TrainingPair>& dataset, const EmbeddingConfig& config) {
  if (dataset.size() < 2) throw Error("degenerate_dataset", "train_embedding: need at least 2 training pairs");
  if (config.batch < 2) throw Error("invalid_argument", "train_embedding: batch must be >= 2");
  EmbeddingModel model = EmbeddingModel::initialize(config);

  const auto n = dataset.size();
  const auto pixels = static_cast<Eigen::Index>(config.resolution * config.resolution);
  Eigen::MatrixXd all_images(pixels, static_cast<Eigen::Index>(n));
  Eigen::MatrixXd all_tokens(static_cast<Eigen::Index>(config.token_dim), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    all_images.col(static_cast<Eigen::Index>(i)) = image_input(model, dataset[i].image);
    all_tokens.col(static_cast<Eigen::Index>(i)) = pooled_tokens(model, build_prompt(dataset[i].tags));
  }

  learn::OptimizerState optimizer(learn::AdamConfig{config.learning_rate});
  Rng rng(derive_seed(config.seed, 3));
  std::vector<std::string> keys;
  keys.reserve(n);
  for (const auto& pair : dataset) keys.push_back(build_prompt(pair.tags).text);
  const double log_min = std::log(kMinTemperature);
  const double log_max = std::log(kMaxTemperature);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (const auto& members : distinct_prompt_batches(keys, config.batch, rng)) {
      const auto b = static_cast<Eigen::Index>(members.size());
      Eigen::MatrixXd images(pixels, b);
      Eigen::MatrixXd tokens(all_tokens.rows(), b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const auto src = static_cast<Eigen::Index>(members[static_cast<std::size_t>(j)]);
        images.col(j) = all_images.col(src);
        tokens.col(j) = all_tokens.col(src);
      }
      const BatchGradient g = batch_gradient(model, images, tokens);
      learn::optimizer_step(optimizer, trainable_parameters(model), g.views());
      model.log_temperature = std::clamp(model.log_temperature, log_min, log_max);
      loss_sum += g.loss;
      ++batches;
    }
    model.loss_history.push_back(batches ? loss_sum / static_cast<double>(batches) : 0.0);
  }
  return model;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw Error("dimension_mismatch", "cosine_similarity: size mismatch");
  const double denom = a.norm() * b.norm();
  if (!(denom > 0.0)) return 0.0;
  return std::clamp(a.dot(b) / denom, -1.0, 1.0);
}

std::vector<Neighbor> nearest_neighbors(const Embedding& query, const std::vector<Embedding>& corpus, std::size_t k) {
  if (corpus.empty()) throw Error("invalid_argument", "nearest_neighbors: empty corpus");
  if (k > corpus.size()) throw Error("invalid_argument", "nearest_neighbors: k exceeds corpus size");
  std::vector<Neighbor> all;
  all.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) all.push_back({i, cosine_similarity(query, corpus[i])});
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.similarity > b.similarity || (a.similarity == b.similarity && a.index < b.index);
                    });
  all.resize(k);
  return all;
}

nlohmann::json MapReport::to_json() const {
  return {{"map_at_k", map_at_k}, {"k", k}, {"queries", queries}, {"skipped", skipped}};
}

double average_precision_at_k(const std::vector<bool>& ranked_relevance, std::size_t total_relevant, std::size_t k) {
  const std::size_t denom = std::min(k, total_relevant);
  if (denom == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranked_relevance.size()); ++i) {
    if (!ranked_relevance[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(denom);
}

namespace {

bool shares_tag(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return std::any_of(a.begin(), a.end(), [&](const std::string& t) { return std::find(b.begin(), b.end(), t) != b.end(); });
}

}  // namespace

MapReport map_at_k(const std::vector<Embedding>& embeddings, const std::vector<std::vector<std::string>>& tags,
                   std::size_t k) {
  if (embeddings.size() != tags.size()) throw Error("invalid_argument", "map_at_k: embeddings/tags size mismatch");
  if (embeddings.size() < 2) throw Error("invalid_argument", "map_at_k: need at least 2 items");
  if (k == 0) throw Error("invalid_argument", "map_at_k: k must be >= 1");
  MapReport report;
  report.k = k;
  double total = 0.0;
  for (std::size_t q = 0; q < embeddings.size(); ++q) {
    std::vector<Embedding> others;
    std::vector<std::size_t> ids;
    std::size_t relevant = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      if (i == q) continue;
      others.push_back(embeddings[i]);
      ids.push_back(i);
      if (shares_tag(tags[q], tags[i])) ++relevant;
    }
    if (relevant == 0) {
      report.skipped.push_back(q);
      continue;
    }
    const auto ranked = nearest_neighbors(embeddings[q], others, std::min(k, others.size()));
    std::vector<bool> rel;
    for (const auto& nb : ranked) rel.push_back(shares_tag(tags[q], tags[ids[nb.index]]));
    total += average_precision_at_k(rel, relevant, k);
    ++report.queries;
  }
  report.map_at_k = report.queries ? total / static_cast<double>(report.queries) : 0.0;
  return report;
}

MapReport eval_map_at_k(const EmbeddingModel& model, const std::vector<icon::VectorIcon>& test_set, std::size_t k) {
  std::vector<Embedding> embs;
  std::vector<std::vector<std::string>> tags;
  for (const auto& ic : test_set) {
    embs.push_back(encode_icon(model, ic));
    tags.push_back(ic.tags);
  }
  return map_at_k(embs, tags, k);
}

HoldoutSplit holdout_split(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw Error("invalid_argument", "test_fraction outside [0,1]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const auto test_n = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  HoldoutSplit split;
  split.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(test_n));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(test_n), order.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

nlohmann::json to_json(const EmbeddingModel& model) {
  return {{"version", learn::kCheckpointVersion},
          {"kind", "embedding"},
          {"seed", model.seed},
          {"D", model.dim},
          {"log_temperature", model.log_temperature},
          {"vocab_buckets", model.vocab_buckets},
          {"vocab_seed", model.vocab_seed},
          {"token_dim", model.token_dim},
          {"resolution", model.resolution},
          {"loss_history", model.loss_history},
          {"image_encoder", learn::net_to_json(model.image_encoder)},
          {"text_encoder", learn::net_to_json(model.text_encoder)}};
}

EmbeddingModel embedding_from_json(const nlohmann::json& j) {
  try {
    if (j.value("kind", "") != "embedding") throw Error("invalid_checkpoint", "not an embedding checkpoint");
    if (j.at("version").get<int>() != learn::kCheckpointVersion) {
      throw Error("invalid_checkpoint", "unsupported checkpoint version");
    }
    EmbeddingModel m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.dim = j.at("D").get<std::size_t>();
    m.log_temperature = j.at("log_temperature").get<double>();
    m.vocab_buckets = j.at("vocab_buckets").get<std::size_t>();
    m.vocab_seed = j.at("vocab_seed").get<std::uint64_t>();
    m.token_dim = j.at("token_dim").get<std::size_t>();
    m.resolution = j.at("resolution").get<std::size_t>();
    m.loss_history = j.at("loss_history").get<std::vector<double>>();
    m.image_encoder = learn::net_from_json(j.at("image_encoder"));
    m.text_encoder = learn::net_from_json(j.at("text_encoder"));
    if (m.vocab_buckets == 0 || m.image_encoder.output_dim() != m.dim || m.text_encoder.output_dim() != m.dim ||
        m.image_encoder.input_dim() != m.resolution * m.resolution || m.text_encoder.input_dim() != m.token_dim) {
      throw Error("invalid_checkpoint", "encoder shapes do not match the declared dimensions");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid_checkpoint", e.what());
  }
}

}  // namespace evicon::embed

#include "evicon/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "evicon/error.hpp"
#include "evicon/rng.hpp"

namespace evicon::predict {

Eigen::VectorXd encode_demographics(const ratings::Demographics& d) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kDemographicsDim);
  v(static_cast<Eigen::Index>(d.age_level)) = 1.0;
  v(3 + static_cast<Eigen::Index>(d.occupation)) = 1.0;
  return v;
}

PredictorModel PredictorModel::initialize(std::size_t embedding_dim, const PredictorConfig& config) {
  if (embedding_dim == 0 || config.hidden == 0 || config.hidden_layers == 0) {
    throw Error("invalid_argument", "predictor dimensions must be > 0");
  }
  using learn::Activation;
  PredictorModel m;
  m.embedding_dim = embedding_dim;
  m.seed = config.seed;
  std::vector<std::size_t> dims{2 * embedding_dim + kDemographicsDim};
  std::vector<Activation> acts;
  for (std::size_t i = 0; i < config.hidden_layers; ++i) {
    dims.push_back(config.hidden);
    acts.push_back(Activation::relu);
  }
  m.trunk = learn::DenseNet::xavier(dims, acts, derive_seed(config.seed, 10));
  m.sd_head = learn::DenseNet::xavier({config.hidden, ratings::kLevels}, {Activation::identity}, derive_seed(config.seed, 11));
  m.fam_head = learn::DenseNet::xavier({config.hidden, ratings::kLevels}, {Activation::identity}, derive_seed(config.seed, 12));
  return m;
}

Eigen::VectorXd predictor_input(const PredictorModel& model, const embed::Embedding& image,
                                const embed::Embedding& text, const ratings::Demographics& d) {
  const auto dim = static_cast<Eigen::Index>(model.embedding_dim);
  if (image.size() != dim || text.size() != dim) {
    throw Error("dimension_mismatch", "predictor expects embeddings of size " + std::to_string(dim));
  }
  Eigen::VectorXd x(static_cast<Eigen::Index>(model.input_dim()));
  x << image, text, encode_demographics(d);
  return x;
}

namespace {

Distribution to_distribution(const Eigen::VectorXd& v) {
  Distribution d{};
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = v(static_cast<Eigen::Index>(i));
  return d;
}

}  // namespace

UsabilityPrediction predict(const PredictorModel& model, const embed::Embedding& image, const embed::Embedding& text,
                            const ratings::Demographics& d) {
  const Eigen::VectorXd hidden = learn::forward(model.trunk, predictor_input(model, image, text, d));
  return {to_distribution(learn::softmax(learn::forward(model.sd_head, hidden))),
          to_distribution(learn::softmax(learn::forward(model.fam_head, hidden)))};
}

UsabilityPrediction predict_general(const PredictorModel& model, const embed::Embedding& image,
                                    const embed::Embedding& text) {
  UsabilityPrediction sum{};
  for (const auto& cell : ratings::all_demographics()) {
    const auto p = predict(model, image, text, cell);
    for (std::size_t i = 0; i < ratings::kLevels; ++i) {
      sum.semantic_distance[i] += p.semantic_distance[i];
      sum.familiarity[i] += p.familiarity[i];
    }
  }
  for (auto* dist : {&sum.semantic_distance, &sum.familiarity}) {
    const double total = std::accumulate(dist->begin(), dist->end(), 0.0);
    for (double& x : *dist) x /= total;
  }
  return sum;
}

double phi_sd(const UsabilityPrediction& p) { return p.semantic_distance.back(); }
double phi_fam(const UsabilityPrediction& p) { return p.familiarity.back(); }

std::vector<LabeledExample> make_examples(const embed::EmbeddingModel& embedding,
                                          const std::vector<ratings::RatingRecord>& records,
                                          const std::map<std::string, icon::VectorIcon>& icons) {
  std::map<std::string, embed::Embedding> image_cache;
  std::map<std::vector<std::string>, embed::Embedding> text_cache;
  std::vector<LabeledExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    ratings::validate(r);
    const auto it = icons.find(r.icon_id);
    if (it == icons.end()) throw Error("unknown_icon", "rating refers to unknown icon '" + r.icon_id + "'");
    auto img = image_cache.find(r.icon_id);
    if (img == image_cache.end()) img = image_cache.emplace(r.icon_id, embed::encode_icon(embedding, it->second)).first;
    auto txt = text_cache.find(it->second.tags);
    if (txt == text_cache.end()) {
      txt = text_cache.emplace(it->second.tags, embed::encode_text(embedding, embed::build_prompt(it->second.tags))).first;
    }
    out.push_back({img->second, txt->second, r.demographics, r.semantic_distance, r.familiarity});
  }
  return out;
}

std::vector<std::span<const double>> PredictorGradient::views() const {
  auto out = trunk.views();
  for (const auto* g : {&sd_head, &fam_head}) {
    const auto v = g->views();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::vector<std::span<double>> trainable_parameters(PredictorModel& model) {
  auto out = model.trunk.parameters();
  for (auto* net : {&model.sd_head, &model.fam_head}) {
    const auto v = net->parameters();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

PredictorGradient batch_gradient(const PredictorModel& model, const std::vector<LabeledExample>& batch) {
  if (batch.empty()) throw Error("invalid_argument", "batch_gradient: empty batch");
  const auto b = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(model.input_dim()), b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto& e = batch[static_cast<std::size_t>(j)];
    x.col(j) = predictor_input(model, e.image, e.text, e.demographics);
  }
  learn::ForwardCache trunk_cache, sd_cache, fam_cache;
  const Eigen::MatrixXd hidden = learn::forward_batch(model.trunk, x, &trunk_cache);
  const Eigen::MatrixXd sd_logits = learn::forward_batch(model.sd_head, hidden, &sd_cache);
  const Eigen::MatrixXd fam_logits = learn::forward_batch(model.fam_head, hidden, &fam_cache);

  const double inv_b = 1.0 / static_cast<double>(b);
  Eigen::MatrixXd sd_up(sd_logits.rows(), b);
  Eigen::MatrixXd fam_up(fam_logits.rows(), b);
  PredictorGradient g;
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto& e = batch[static_cast<std::size_t>(j)];
    const auto sd = learn::softmax_cross_entropy(sd_logits.col(j), static_cast<std::size_t>(e.semantic_distance - 1));
    const auto fam = learn::softmax_cross_entropy(fam_logits.col(j), static_cast<std::size_t>(e.familiarity - 1));
    g.loss += (sd.loss + fam.loss) * inv_b;
    sd_up.col(j) = sd.grad * inv_b;
    fam_up.col(j) = fam.grad * inv_b;
  }
  Eigen::MatrixXd hidden_grad_sd, hidden_grad_fam;
  g.sd_head = learn::backward_batch(model.sd_head, sd_cache, sd_up, &hidden_grad_sd);
  g.fam_head = learn::backward_batch(model.fam_head, fam_cache, fam_up, &hidden_grad_fam);
  g.trunk = learn::backward_batch(model.trunk, trunk_cache, hidden_grad_sd + hidden_grad_fam);
  return g;
}

TrainedPredictor train_predictor(const std::vector<LabeledExample>& examples, std::size_t embedding_dim,
                                 const PredictorConfig& config) {
  if (examples.size() < 10) throw Error("degenerate_dataset", "train_predictor: need at least 10 labeled records");
  if (config.batch == 0) throw Error("invalid_argument", "train_predictor: batch must be >= 1");
  TrainedPredictor out{PredictorModel::initialize(embedding_dim, config), {}};

  std::set<int> sd_classes, fam_classes;
  for (const auto& e : examples) {
    if (e.semantic_distance < ratings::kMinLevel || e.semantic_distance > ratings::kMaxLevel ||
        e.familiarity < ratings::kMinLevel || e.familiarity > ratings::kMaxLevel) {
      throw Error("invalid_record", "train_predictor: label outside 1..5");
    }
    sd_classes.insert(e.semantic_distance);
    fam_classes.insert(e.familiarity);
  }
  if (sd_classes.size() == 1 && fam_classes.size() == 1) {
    out.warnings.push_back("degenerate label set: both heads see a single class");
  }

  learn::OptimizerState optimizer(learn::AdamConfig{config.learning_rate});
  Rng rng(derive_seed(config.seed, 13));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LabeledExample> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch); ++i) batch.push_back(examples[order[i]]);
      const PredictorGradient g = batch_gradient(out.model, batch);
      learn::optimizer_step(optimizer, trainable_parameters(out.model), g.views());
      loss_sum += g.loss;
      ++batches;
    }
    out.model.loss_history.push_back(loss_sum / static_cast<double>(batches));
  }
  return out;
}

nlohmann::json HeadReport::to_json() const {
  nlohmann::json matrix = nlohmann::json::array();
  for (const auto& row : confusion) matrix.push_back(row);
  return {{"head", head},
          {"macro_precision", macro_precision},
          {"macro_recall", macro_recall},
          {"accuracy", accuracy},
          {"confusion", std::move(matrix)}};
}

HeadReport head_report(std::string head, const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.empty()) throw Error("invalid_argument", "eval_precision_recall: empty test set");
  if (truth.size() != predicted.size()) throw Error("invalid_argument", "truth/prediction size mismatch");
  HeadReport r;
  r.head = std::move(head);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predicted[i];
    if (t < 1 || t > 5 || p < 1 || p > 5) throw Error("invalid_argument", "levels must be 1..5");
    ++r.confusion[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(p - 1)];
    if (t == p) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  double precision_sum = 0.0, recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < ratings::kLevels; ++c) {
    std::size_t true_count = 0, predicted_count = 0;
    for (std::size_t o = 0; o < ratings::kLevels; ++o) {
      true_count += r.confusion[c][o];
      predicted_count += r.confusion[o][c];
    }
    if (true_count == 0) continue;
    ++present;
    const double tp = static_cast<double>(r.confusion[c][c]);
    recall_sum += tp / static_cast<double>(true_count);
    precision_sum += predicted_count ? tp / static_cast<double>(predicted_count) : 0.0;
  }
  r.macro_precision = precision_sum / static_cast<double>(present);
  r.macro_recall = recall_sum / static_cast<double>(present);
  return r;
}

int argmax_level(const Distribution& d) {
  return static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin()) + 1;
}

EvalReport eval_precision_recall(const PredictorModel& model, const std::vector<LabeledExample>& test) {
  if (test.empty()) throw Error("invalid_argument", "eval_precision_recall: empty test set");
  std::vector<int> sd_truth, sd_pred, fam_truth, fam_pred;
  for (const auto& e : test) {
    const auto p = predict(model, e.image, e.text, e.demographics);
    sd_truth.push_back(e.semantic_distance);
    fam_truth.push_back(e.familiarity);
    sd_pred.push_back(argmax_level(p.semantic_distance));
    fam_pred.push_back(argmax_level(p.familiarity));
  }
  return {head_report("sd", sd_truth, sd_pred), head_report("fam", fam_truth, fam_pred)};
}

LevelLabel level_label(const Distribution& d) {
  const int level = argmax_level(d);
  const std::string_view color = level <= 2 ? "red" : level == 3 ? "black" : "green";
  return {level, ratings::RatingLevel{level}.label(), color};
}

nlohmann::json to_json(const UsabilityPrediction& p) {
  auto labelled = [](const Distribution& d) {
    const auto l = level_label(d);
    return nlohmann::json{{"distribution", d}, {"level", l.level}, {"label", l.label}, {"color", l.color}};
  };
  return {{"semantic_distance", labelled(p.semantic_distance)},
          {"familiarity", labelled(p.familiarity)},
          {"phi_sd", phi_sd(p)},
          {"phi_fam", phi_fam(p)}};
}

nlohmann::json to_json(const PredictorModel& model) {
  return {{"version", learn::kCheckpointVersion},
          {"kind", "predictor"},
          {"seed", model.seed},
          {"D", model.embedding_dim},
          {"loss_history", model.loss_history},
          {"trunk", learn::net_to_json(model.trunk)},
          {"heads", {{"sd", learn::net_to_json(model.sd_head)}, {"fam", learn::net_to_json(model.fam_head)}}}};
}

PredictorModel predictor_from_json(const nlohmann::json& j) {
  try {
    if (j.value("kind", "") != "predictor") throw Error("invalid_checkpoint", "not a predictor checkpoint");
    if (j.at("version").get<int>() != learn::kCheckpointVersion) {
      throw Error("invalid_checkpoint", "unsupported checkpoint version");
    }
    PredictorModel m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.embedding_dim = j.at("D").get<std::size_t>();
    m.loss_history = j.at("loss_history").get<std::vector<double>>();
    m.trunk = learn::net_from_json(j.at("trunk"));
    m.sd_head = learn::net_from_json(j.at("heads").at("sd"));
    m.fam_head = learn::net_from_json(j.at("heads").at("fam"));
    if (m.trunk.input_dim() != m.input_dim() || m.sd_head.input_dim() != m.trunk.output_dim() ||
        m.fam_head.input_dim() != m.trunk.output_dim() || m.sd_head.output_dim() != ratings::kLevels ||
        m.fam_head.output_dim() != ratings::kLevels) {
      throw Error("invalid_checkpoint", "predictor shapes are inconsistent");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid_checkpoint", e.what());
  }
}

}  // namespace evicon::predict

#include "evicon/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "evicon/error.hpp"
#include "evicon/icon_io.hpp"
#include "httplib.h"

namespace evicon::service {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex(std::uint64_t v, int digits) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf + 16 - digits);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("invalid_json", what + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

json level_json(const predict::Distribution& d) {
  const auto l = predict::level_label(d);
  return {{"level", l.level}, {"label", std::string(l.label)}, {"color", std::string(l.color)}};
}

}  // namespace

EngineConfig EngineConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error("invalid_config", "config must be a JSON object");
  EngineConfig c;
  try {
    c.embedding_model = resolve(base_dir, j.value("embedding_model", std::string{}));
    c.predictor_model = resolve(base_dir, j.value("predictor_model", std::string{}));
    c.dataset = resolve(base_dir, j.value("dataset", std::string{}));
    if (j.contains("weights")) {
      const auto& w = j["weights"];
      if (w.is_array()) {
        if (w.size() != 3) throw Error("invalid_weights", "weights need three values");
        c.weights = {w[0].get<double>(), w[1].get<double>(), w[2].get<double>()};
      } else {
        c.weights = {w.at("w_sd").get<double>(), w.at("w_fam").get<double>(), w.at("w_vd").get<double>()};
      }
    }
    c.warning_threshold = j.value("warning_threshold", c.warning_threshold);
    if (j.contains("projection")) c.projection = distinct::parse_projection_method(j["projection"].get<std::string>());
    c.projection_seed = j.value("projection_seed", c.projection_seed);
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    if (j.contains("data_dir")) c.data_dir = resolve(base_dir, j["data_dir"].get<std::string>());
  } catch (const json::exception& e) {
    throw Error("invalid_config", e.what());
  }
  c.validate();
  return c;
}

EngineConfig EngineConfig::load(const std::filesystem::path& path) {
  return from_json(parse_json(read_file(path), path.string()), path.parent_path());
}

void EngineConfig::apply_environment() {
  if (const char* p = std::getenv("EVICON_PORT")) {
    char* end = nullptr;
    const long v = std::strtol(p, &end, 10);
    if (end == p || *end != '\0') throw Error("invalid_config", std::string("EVICON_PORT is not a number: ") + p);
    port = static_cast<int>(v);
  }
  if (const char* d = std::getenv("EVICON_DATA_DIR")) data_dir = d;
  validate();
}

void EngineConfig::validate() const {
  weights.validate();
  if (!(warning_threshold >= 0.0 && warning_threshold <= 2.0)) {
    throw Error("invalid_config", "warning_threshold must lie in [0, 2]");
  }
  if (port < 0 || port > 65535) throw Error("invalid_config", "port out of range");
}

Engine::Engine(embed::EmbeddingModel embedding, predict::PredictorModel predictor, std::vector<icon::VectorIcon> dataset,
               EngineConfig config)
    : embedding_(std::move(embedding)),
      predictor_(std::move(predictor)),
      dataset_(std::move(dataset)),
      config_(std::move(config)) {
  config_.validate();
  if (predictor_.embedding_dim != embedding_.dim) {
    throw Error("dimension_mismatch", "predictor expects embedding dim " + std::to_string(predictor_.embedding_dim) +
                                          ", embedding model has " + std::to_string(embedding_.dim));
  }
  dataset_embeddings_.reserve(dataset_.size());
  dataset_predictions_.reserve(dataset_.size());
  for (const auto& icon : dataset_) {
    dataset_embeddings_.push_back(image_embedding(icon));
    dataset_predictions_.push_back(predict::predict_general(predictor_, dataset_embeddings_.back(), text_embedding(icon.tags)));
  }
  embedding_version_ = "v" + std::to_string(learn::kCheckpointVersion) + "-" + hex(fnv1a(embed::to_json(embedding_).dump()), 12);
  predictor_version_ = "v" + std::to_string(learn::kCheckpointVersion) + "-" + hex(fnv1a(predict::to_json(predictor_).dump()), 12);
}

Engine Engine::load(const EngineConfig& config) {
  try {
    auto embedding = embed::embedding_from_json(parse_json(read_file(config.embedding_model), "embedding checkpoint"));
    auto predictor = predict::predictor_from_json(parse_json(read_file(config.predictor_model), "predictor checkpoint"));
    std::vector<icon::VectorIcon> dataset;
    if (!config.dataset.empty()) dataset = icon::read_icons(config.dataset);
    return Engine(std::move(embedding), std::move(predictor), std::move(dataset), config);
  } catch (const Error& e) {
    throw Error("startup_failure", e.code() + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error("startup_failure", e.what());
  }
}

json Engine::model_versions() const {
  return {{"embedding", embedding_version_}, {"predictor", predictor_version_}};
}

embed::Embedding Engine::image_embedding(const icon::VectorIcon& icon) const {
  return embed::encode_icon(embedding_, icon);
}

embed::Embedding Engine::text_embedding(const std::vector<std::string>& tags) const {
  return embed::encode_text(embedding_, embed::build_prompt(tags));
}

predict::UsabilityPrediction Engine::predict(const icon::VectorIcon& icon,
                                             const std::optional<ratings::Demographics>& demographics) const {
  const auto image = image_embedding(icon);
  const auto text = text_embedding(icon.tags);
  return demographics ? predict::predict(predictor_, image, text, *demographics)
                      : predict::predict_general(predictor_, image, text);
}

double Engine::reference_score(std::size_t i) const {
  const auto& p = dataset_predictions_.at(i);
  return config_.weights.w_sd * predict::phi_sd(p) + config_.weights.w_fam * predict::phi_fam(p);
}

std::optional<std::size_t> Engine::best_reference(const std::string& tag) const {
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    const auto& tags = dataset_[i].tags;
    if (std::find(tags.begin(), tags.end(), tag) == tags.end()) continue;
    const double s = reference_score(i);
    if (!best || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

json IconSetRecord::to_json() const {
  json icons_json = json::array();
  for (const auto& icon : icons) icons_json.push_back(icon::icon_to_json(icon));
  return {{"set_id", set_id}, {"revision", revision}, {"icons", std::move(icons_json)}};
}

IconSetRecord IconSetRecord::from_json(const json& j) {
  IconSetRecord r;
  try {
    r.set_id = j.at("set_id").get<std::string>();
    r.revision = j.at("revision").get<std::uint64_t>();
    for (const auto& i : j.at("icons")) r.icons.push_back(icon::icon_from_json(i));
  } catch (const json::exception& e) {
    throw Error("invalid_json", std::string("icon set: ") + e.what());
  }
  return r;
}

const icon::VectorIcon* IconSetRecord::find(const std::string& icon_id) const {
  for (const auto& icon : icons) {
    if (icon.id == icon_id) return &icon;
  }
  return nullptr;
}

IconSetStore::IconSetStore(std::filesystem::path data_dir) : data_dir_(std::move(data_dir)) {
  if (data_dir_.empty()) return;
  const auto dir = data_dir_ / "sets";
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("io_error", "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto entry = std::make_shared<Entry>();
    entry->record = IconSetRecord::from_json(parse_json(read_file(f), f.string()));
    sets_[entry->record.set_id] = std::move(entry);
  }
  counter_ = sets_.size();
}

std::string IconSetStore::create(std::vector<icon::VectorIcon> icons) {
  auto entry = std::make_shared<Entry>();
  entry->record.icons = std::move(icons);
  const std::string digest = hex(fnv1a(entry->record.to_json().at("icons").dump()), 12);
  {
    std::unique_lock lock(map_mutex_);
    std::string id;
    do {
      id = digest + "-" + std::to_string(++counter_);
    } while (sets_.count(id));
    entry->record.set_id = id;
    sets_[id] = entry;
  }
  std::lock_guard lock(entry->mutex);
  persist(entry->record);
  return entry->record.set_id;
}

std::optional<IconSetRecord> IconSetStore::snapshot(const std::string& set_id) const {
  auto entry = find_entry(set_id);
  if (!entry) return std::nullopt;
  std::lock_guard lock(entry->mutex);
  return entry->record;
}

std::vector<std::string> IconSetStore::ids() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, e] : sets_) out.push_back(id);
  return out;
}

std::shared_ptr<IconSetStore::Entry> IconSetStore::find_entry(const std::string& set_id) const {
  std::shared_lock lock(map_mutex_);
  auto it = sets_.find(set_id);
  return it == sets_.end() ? nullptr : it->second;
}

void IconSetStore::persist(const IconSetRecord& record) const {
  if (data_dir_.empty()) return;
  const auto path = data_dir_ / "sets" / (record.set_id + ".json");
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io_error", "cannot write " + tmp);
    out << record.to_json().dump(2) << '\n';
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("io_error", "cannot write " + path.string() + ": " + ec.message());
}

std::vector<SetScore> score_set(const Engine& engine, const std::vector<icon::VectorIcon>& icons,
                                const distinct::ScoreWeights& weights) {
  weights.validate();
  std::vector<embed::Embedding> embs;
  for (const auto& icon : icons) embs.push_back(engine.image_embedding(icon));
  std::vector<SetScore> out;
  for (std::size_t i = 0; i < icons.size(); ++i) {
    const auto p = predict::predict_general(engine.predictor(), embs[i], engine.text_embedding(icons[i].tags));
    SetScore s;
    s.icon_id = icons[i].id;
    s.terms.phi_sd = predict::phi_sd(p);
    s.terms.phi_fam = predict::phi_fam(p);
    s.terms.phi_vd = icons.size() < 2 ? 0.0 : distinct::normalize_phi_vd(distinct::phi_vd_in_set(embs, i), icons.size());
    s.score = distinct::usability_score(weights, s.terms.phi_sd, s.terms.phi_fam, s.terms.phi_vd);
    out.push_back(s);
  }
  return out;
}

ApiResponse error_response(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", code}, {"message", message}}};
}

json Api::prediction_response(const icon::VectorIcon& icon,
                              const std::optional<ratings::Demographics>& demographics) const {
  return {{"demographics", demographics ? ratings::to_string(*demographics) : std::string("general")},
          {"prediction", predict::to_json(engine_.predict(icon, demographics))}};
}

json Api::feedback(const IconSetRecord& set, const std::string& icon_id) const {
  std::size_t index = set.icons.size();
  for (std::size_t i = 0; i < set.icons.size(); ++i) {
    if (set.icons[i].id == icon_id) index = i;
  }
  if (index == set.icons.size()) throw Error("icon_not_found", "no icon '" + icon_id + "' in set " + set.set_id);
  const auto& current = set.icons[index];

  json per_cell = json::object();
  for (const auto& d : ratings::all_demographics()) {
    per_cell[ratings::to_string(d)] = predict::to_json(engine_.predict(current, d));
  }

  json warning = {{"reference", nullptr}, {"add", json::array()}, {"remove", json::array()}};
  if (!current.tags.empty()) {
    if (const auto ref = engine_.best_reference(current.tags.front())) {
      const auto& reference = engine_.dataset()[*ref];
      warning = icon::suggestion_to_json(icon::diff_strokes(current, reference));
      warning["reference"] = reference.id;
    }
  }

  const auto scores = score_set(engine_, set.icons, engine_.config().weights);
  const auto& s = scores[index];
  return {{"set_id", set.set_id},
          {"revision", set.revision},
          {"icon_id", icon_id},
          {"prediction", predict::to_json(engine_.predict(current))},
          {"demographics", std::move(per_cell)},
          {"warning", std::move(warning)},
          {"terms", {{"phi_sd", s.terms.phi_sd}, {"phi_fam", s.terms.phi_fam}, {"phi_vd", s.terms.phi_vd}}},
          {"score", s.score}};
}

json Api::graph(const IconSetRecord& set, double threshold) const {
  std::vector<std::string> ids;
  std::vector<embed::Embedding> embs;
  for (const auto& icon : set.icons) {
    ids.push_back(icon.id);
    embs.push_back(engine_.image_embedding(icon));
  }
  if (ids.size() < 2) {
    distinct::DistinguishabilityGraph g;
    for (const auto& id : ids) g.nodes.push_back({id, 0.0, 0.0});
    return g.to_json();
  }
  const auto projection = distinct::project_2d(embs, engine_.config().projection, engine_.config().projection_seed);
  return distinct::build_graph(ids, embs, projection, threshold).to_json();
}

json Api::suggestions(const icon::VectorIcon& icon, std::size_t k) const {
  json list = json::array();
  const auto& corpus = engine_.dataset_embeddings();
  if (!corpus.empty()) {
    for (const auto& n : embed::nearest_neighbors(engine_.image_embedding(icon), corpus, std::min(k, corpus.size()))) {
      const auto& p = engine_.dataset_predictions()[n.index];
      list.push_back({{"id", engine_.dataset()[n.index].id},
                      {"tags", engine_.dataset()[n.index].tags},
                      {"similarity", n.similarity},
                      {"semantic_distance", level_json(p.semantic_distance)},
                      {"familiarity", level_json(p.familiarity)}});
    }
  }
  return {{"icon_id", icon.id}, {"k", k}, {"suggestions", std::move(list)}};
}

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double parse_double(const std::string& s, const std::string& name) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || !std::isfinite(v)) {
    throw Error("invalid_parameter", name + " must be a finite number");
  }
  return v;
}

std::size_t parse_count(const std::string& s, const std::string& name) {
  if (s.empty() || s.size() > 9 || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw Error("invalid_parameter", name + " must be a positive integer");
  }
  const auto v = std::stoul(s);
  if (v == 0) throw Error("invalid_parameter", name + " must be a positive integer");
  return v;
}

int status_for(const std::string& code) {
  if (code == "set_not_found" || code == "icon_not_found") return 404;
  return 400;
}

}  // namespace

ApiResponse Api::handle(const ApiRequest& request) {
  const auto seg = split_path(request.path);
  const auto& m = request.method;
  try {
    if (seg.size() < 2 || seg[0] != "api") return error_response(404, "not_found", "unknown path " + request.path);
    bool known = false;
    if (seg.size() == 2 && seg[1] == "health") {
      known = true;
      if (m == "GET") return {200, {{"status", "ok"}, {"model_versions", engine_.model_versions()}}};
    } else if (seg.size() == 2 && seg[1] == "predict") {
      known = true;
      if (m == "POST") return predict(request);
    } else if (seg[1] == "icon-sets") {
      if (seg.size() == 2) {
        known = true;
        if (m == "POST") return create_set(request);
      } else if (seg.size() == 3) {
        known = true;
        if (m == "GET") return get_set(seg[2]);
      } else if (seg.size() == 4 && seg[3] == "graph") {
        known = true;
        if (m == "GET") return get_graph(seg[2], request);
      } else if (seg.size() == 5 && seg[3] == "icons") {
        known = true;
        if (m == "PUT") return update_icon(seg[2], seg[4], request);
      }
    } else if (seg[1] == "icons" && seg.size() == 4 && seg[3] == "suggestions") {
      known = true;
      if (m == "GET") return get_suggestions(seg[2], request);
    }
    if (known) return error_response(405, "method_not_allowed", m + " not allowed on " + request.path);
    return error_response(404, "not_found", "unknown path " + request.path);
  } catch (const Error& e) {
    return error_response(status_for(e.code()), e.code(), e.what());
  } catch (const json::exception& e) {
    return error_response(400, "invalid_json", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal_error", e.what());
  }
}

ApiResponse Api::create_set(const ApiRequest& request) {
  const json body = parse_json(request.body, "request body");
  if (!body.is_object() || !body.contains("icons") || !body["icons"].is_array()) {
    throw Error("invalid_json", "body needs an 'icons' array");
  }
  std::vector<icon::VectorIcon> icons;
  for (const auto& j : body["icons"]) {
    auto icon = icon::icon_from_json(j);
    if (icon.id.empty()) throw Error("invalid_icon", "every icon in a set needs an id");
    for (const auto& other : icons) {
      if (other.id == icon.id) throw Error("invalid_icon", "duplicate icon id '" + icon.id + "'");
    }
    icons.push_back(std::move(icon));
  }
  const auto id = store_.create(std::move(icons));
  return {201, {{"set_id", id}, {"revision", 0}}};
}

ApiResponse Api::get_set(const std::string& set_id) {
  json body;
  const bool found = store_.mutate(
      set_id,
      [&](IconSetRecord& set) {
        json predictions = json::object();
        for (const auto& icon : set.icons) {
          auto it = set.prediction_cache.find(icon.id);
          if (it == set.prediction_cache.end()) it = set.prediction_cache.emplace(icon.id, engine_.predict(icon)).first;
          predictions[icon.id] = predict::to_json(it->second);
        }
        body = set.to_json();
        body["predictions"] = std::move(predictions);
      },
      false);
  if (!found) return error_response(404, "set_not_found", "no icon set '" + set_id + "'");
  return {200, std::move(body)};
}

ApiResponse Api::update_icon(const std::string& set_id, const std::string& icon_id, const ApiRequest& request) {
  json body = parse_json(request.body, "request body");
  if (!body.is_object()) throw Error("invalid_icon", "icon must be a JSON object");
  if (body.contains("id") && body["id"] != icon_id) throw Error("invalid_icon", "icon id does not match the path");
  body["id"] = icon_id;
  json response;
  const bool found = store_.mutate(set_id, [&](IconSetRecord& set) {
    json incoming = body;
    const auto* existing = set.find(icon_id);
    if (!incoming.contains("tags")) {
      incoming["tags"] = existing ? existing->tags : std::vector<std::string>{};
    }
    auto icon = icon::icon_from_json(incoming);
    auto it = std::find_if(set.icons.begin(), set.icons.end(), [&](const auto& i) { return i.id == icon_id; });
    if (it == set.icons.end()) {
      set.icons.push_back(std::move(icon));
    } else {
      *it = std::move(icon);
    }
    ++set.revision;
    set.prediction_cache.erase(icon_id);
    response = feedback(set, icon_id);
    set.prediction_cache[icon_id] = engine_.predict(*set.find(icon_id));
  });
  if (!found) return error_response(404, "set_not_found", "no icon set '" + set_id + "'");
  return {200, std::move(response)};
}

ApiResponse Api::predict(const ApiRequest& request) {
  const json body = parse_json(request.body, "request body");
  if (!body.is_object() || !body.contains("icon")) throw Error("invalid_json", "body needs an 'icon'");
  json icon_json = body["icon"];
  if (icon_json.is_object() && !icon_json.contains("id")) icon_json["id"] = "query";
  const auto icon = icon::icon_from_json(icon_json);
  std::optional<ratings::Demographics> demographics;
  if (body.contains("demographics") && !body["demographics"].is_null()) {
    demographics = ratings::demographics_from_json(body["demographics"]);
  }
  return {200, prediction_response(icon, demographics)};
}

ApiResponse Api::get_graph(const std::string& set_id, const ApiRequest& request) {
  double threshold = engine_.config().warning_threshold;
  if (auto it = request.query.find("threshold"); it != request.query.end()) {
    threshold = parse_double(it->second, "threshold");
    if (threshold < 0.0 || threshold > 2.0) throw Error("invalid_parameter", "threshold must lie in [0, 2]");
  }
  const auto set = store_.snapshot(set_id);
  if (!set) return error_response(404, "set_not_found", "no icon set '" + set_id + "'");
  return {200, graph(*set, threshold)};
}

ApiResponse Api::get_suggestions(const std::string& icon_id, const ApiRequest& request) {
  std::size_t k = 5;
  if (auto it = request.query.find("k"); it != request.query.end()) k = parse_count(it->second, "k");
  std::optional<icon::VectorIcon> found;
  for (const auto& id : store_.ids()) {
    const auto set = store_.snapshot(id);
    if (!set) continue;
    if (const auto* icon = set->find(icon_id)) {
      found = *icon;
      break;
    }
  }
  if (!found) {
    for (const auto& icon : engine_.dataset()) {
      if (icon.id == icon_id) {
        found = icon;
        break;
      }
    }
  }
  if (!found) return error_response(404, "icon_not_found", "no icon '" + icon_id + "'");
  return {200, suggestions(*found, k)};
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(Api& api) : impl_(std::make_unique<Impl>()) {
  auto adapter = [&api](const httplib::Request& req, httplib::Response& res) {
    ApiRequest request{req.method, req.path, {}, req.body};
    for (const auto& [key, value] : req.params) request.query.emplace(key, value);
    const ApiResponse response = api.handle(request);
    res.status = response.status;
    res.set_content(response.body.dump(), "application/json");
  };
  impl_->server.Get(".*", adapter);
  impl_->server.Post(".*", adapter);
  impl_->server.Put(".*", adapter);
  impl_->server.Delete(".*", adapter);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("startup_failure", "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void serve(Api& api, const std::string& host, int port) {
  HttpServer server(api);
  server.bind(host, port);
  server.listen();
}

}  // namespace evicon::service

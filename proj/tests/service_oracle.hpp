#pragma once

// Expected endpoint bodies assembled from direct library calls, bypassing
// Engine helpers and Api.

#include "evicon/icon_io.hpp"
#include "evicon/service.hpp"

namespace expect {

using nlohmann::json;
using namespace evicon;

inline embed::Embedding image(const service::Engine& e, const icon::VectorIcon& i) {
  return embed::encode_icon(e.embedding(), i);
}

inline embed::Embedding text(const service::Engine& e, const icon::VectorIcon& i) {
  return embed::encode_text(e.embedding(), embed::build_prompt(i.tags));
}

inline predict::UsabilityPrediction general(const service::Engine& e, const icon::VectorIcon& i) {
  return predict::predict_general(e.predictor(), image(e, i), text(e, i));
}

inline json prediction(const service::Engine& e, const icon::VectorIcon& i,
                       const std::optional<ratings::Demographics>& d) {
  const auto p = d ? predict::predict(e.predictor(), image(e, i), text(e, i), *d) : general(e, i);
  return {{"demographics", d ? ratings::to_string(*d) : std::string("general")}, {"prediction", predict::to_json(p)}};
}

inline json set_body(const service::Engine& e, const std::string& id, std::uint64_t revision,
                     const std::vector<icon::VectorIcon>& icons) {
  json arr = json::array(), preds = json::object();
  for (const auto& i : icons) {
    arr.push_back(icon::icon_to_json(i));
    preds[i.id] = predict::to_json(general(e, i));
  }
  return {{"set_id", id}, {"revision", revision}, {"icons", arr}, {"predictions", preds}};
}

inline json feedback(const service::Engine& e, const std::string& set_id, std::uint64_t revision,
                     const std::vector<icon::VectorIcon>& icons, const std::string& icon_id) {
  const auto& w = e.config().weights;
  std::size_t idx = 0;
  while (icons[idx].id != icon_id) ++idx;
  const auto& cur = icons[idx];
  json cells = json::object();
  for (const auto& d : ratings::all_demographics()) {
    cells[ratings::to_string(d)] = predict::to_json(predict::predict(e.predictor(), image(e, cur), text(e, cur), d));
  }
  json warning = {{"reference", nullptr}, {"add", json::array()}, {"remove", json::array()}};
  int best = -1;
  double best_score = -1;
  for (std::size_t i = 0; i < e.dataset().size(); ++i) {
    const auto& tags = e.dataset()[i].tags;
    if (std::find(tags.begin(), tags.end(), cur.tags.front()) == tags.end()) continue;
    const auto p = general(e, e.dataset()[i]);
    const double s = w.w_sd * predict::phi_sd(p) + w.w_fam * predict::phi_fam(p);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  if (best >= 0) {
    const auto& ref = e.dataset()[static_cast<std::size_t>(best)];
    warning = icon::suggestion_to_json(icon::diff_strokes(cur, ref));
    warning["reference"] = ref.id;
  }
  std::vector<embed::Embedding> embs;
  for (const auto& i : icons) embs.push_back(image(e, i));
  const auto g = general(e, cur);
  const double vd = icons.size() < 2 ? 0.0 : distinct::normalize_phi_vd(distinct::phi_vd_in_set(embs, idx), icons.size());
  return {{"set_id", set_id},
          {"revision", revision},
          {"icon_id", icon_id},
          {"prediction", predict::to_json(g)},
          {"demographics", cells},
          {"warning", warning},
          {"terms", {{"phi_sd", predict::phi_sd(g)}, {"phi_fam", predict::phi_fam(g)}, {"phi_vd", vd}}},
          {"score", distinct::usability_score(w, predict::phi_sd(g), predict::phi_fam(g), vd)}};
}

inline json graph(const service::Engine& e, const std::vector<icon::VectorIcon>& icons, double threshold) {
  std::vector<std::string> ids;
  std::vector<embed::Embedding> embs;
  for (const auto& i : icons) {
    ids.push_back(i.id);
    embs.push_back(image(e, i));
  }
  if (icons.size() < 2) {
    distinct::DistinguishabilityGraph g;
    for (const auto& id : ids) g.nodes.push_back({id, 0.0, 0.0});
    return g.to_json();
  }
  return distinct::build_graph(ids, embs, distinct::project_2d(embs, e.config().projection, e.config().projection_seed),
                               threshold)
      .to_json();
}

inline json suggestions(const service::Engine& e, const icon::VectorIcon& q, std::size_t k) {
  std::vector<embed::Embedding> corpus;
  for (const auto& i : e.dataset()) corpus.push_back(image(e, i));
  json list = json::array();
  for (const auto& n : embed::nearest_neighbors(image(e, q), corpus, std::min(k, corpus.size()))) {
    const auto& d = e.dataset()[n.index];
    const auto p = general(e, d);
    auto lvl = [](const predict::Distribution& dist) {
      const auto l = predict::level_label(dist);
      return json{{"level", l.level}, {"label", std::string(l.label)}, {"color", std::string(l.color)}};
    };
    list.push_back({{"id", d.id}, {"tags", d.tags}, {"similarity", n.similarity},
                    {"semantic_distance", lvl(p.semantic_distance)}, {"familiarity", lvl(p.familiarity)}});
  }
  return {{"icon_id", q.id}, {"k", k}, {"suggestions", list}};
}

}  // namespace expect

// evicon command-line front end.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "evicon/curation.hpp"
#include "evicon/distinguishability.hpp"
#include "evicon/embedding.hpp"
#include "evicon/error.hpp"
#include "evicon/icon_io.hpp"
#include "evicon/predictor.hpp"
#include "evicon/ratings.hpp"
#include "evicon/service.hpp"
#include "evicon/syngen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evicon;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("invalid_json", path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void emit(bool as_json, const json& report, const std::string& text) {
  if (as_json) {
    std::cout << report.dump(2) << '\n';
  } else {
    std::cout << text;
  }
}

std::map<std::string, icon::VectorIcon> by_id(const std::vector<icon::VectorIcon>& icons) {
  std::map<std::string, icon::VectorIcon> out;
  for (const auto& i : icons) out[i.id] = i;
  return out;
}

distinct::ScoreWeights parse_weights(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      v.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw Error("invalid_weights", "weights must be numbers: " + s);
    }
  }
  if (v.size() != 3) throw Error("invalid_weights", "expected three comma-separated weights");
  distinct::ScoreWeights w{v[0], v[1], v[2]};
  w.validate();
  return w;
}

std::set<std::string> holdout_ids(const json& checkpoint) {
  std::set<std::string> ids;
  if (checkpoint.contains("holdout")) {
    for (const auto& id : checkpoint["holdout"].at("test_ids")) ids.insert(id.get<std::string>());
  }
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evicon: icon usability tooling"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "machine-readable output");

  // syngen
  auto* syn = app.add_subcommand("syngen", "generate a synthetic icon and rating corpus");
  fs::path syn_out = "data";
  std::size_t syn_tags = 10, syn_per_tag = 60, syn_workers = 100;
  double syn_spam = 0.1;
  std::uint64_t syn_seed = 7;
  syn->add_option("--out", syn_out, "output directory");
  syn->add_option("--tags", syn_tags, "number of tags");
  syn->add_option("--per-tag", syn_per_tag, "icons per tag");
  syn->add_option("--workers", syn_workers, "simulated crowd workers");
  syn->add_option("--spam", syn_spam, "fraction of spam workers");
  syn->add_option("--seed", syn_seed, "seed");

  // curate
  auto* cur = app.add_subcommand("curate", "select representative icons per tag");
  fs::path cur_icons, cur_out = "manifest.json";
  curation::CurationConfig cur_cfg;
  bool cur_global = false;
  cur->add_option("--icons", cur_icons, "icons JSON-lines")->required();
  cur->add_option("--out", cur_out, "manifest path");
  cur->add_option("--variance", cur_cfg.variance_target, "PCA variance target");
  cur->add_option("--k", cur_cfg.k, "clusters (0 = elbow)");
  cur->add_option("--per-cluster", cur_cfg.per_cluster, "samples per cluster");
  cur->add_option("--seed", cur_cfg.seed, "seed");
  cur->add_flag("--global", cur_global, "curate all icons together instead of per tag");

  // train-embedding
  auto* te = app.add_subcommand("train-embedding", "train the contrastive image/text embedding");
  fs::path te_icons, te_out = "embedding.json";
  embed::EmbeddingConfig te_cfg;
  te_cfg.seed = 7;
  double te_holdout = 0.1;
  te->add_option("--icons", te_icons, "icons JSON-lines")->required();
  te->add_option("--out", te_out, "checkpoint path");
  te->add_option("--dim", te_cfg.dim, "embedding dimension");
  te->add_option("--epochs", te_cfg.epochs, "epochs");
  te->add_option("--batch", te_cfg.batch, "batch size");
  te->add_option("--lr", te_cfg.learning_rate, "learning rate");
  te->add_option("--holdout", te_holdout, "test fraction kept out of training");
  te->add_option("--seed", te_cfg.seed, "seed");

  // train-predictor
  auto* tp = app.add_subcommand("train-predictor", "train the usability predictor");
  fs::path tp_embedding, tp_icons, tp_ratings, tp_out = "predictor.json";
  predict::PredictorConfig tp_cfg;
  tp_cfg.seed = 7;
  std::size_t tp_unseen = 0;
  tp->add_option("--embedding", tp_embedding, "embedding checkpoint")->required();
  tp->add_option("--icons", tp_icons, "icons JSON-lines")->required();
  tp->add_option("--ratings", tp_ratings, "validated ratings CSV")->required();
  tp->add_option("--out", tp_out, "checkpoint path");
  tp->add_option("--epochs", tp_cfg.epochs, "epochs");
  tp->add_option("--batch", tp_cfg.batch, "batch size");
  tp->add_option("--lr", tp_cfg.learning_rate, "learning rate");
  tp->add_option("--unseen", tp_unseen, "tags held out for out-of-domain evaluation");
  tp->add_option("--seed", tp_cfg.seed, "seed");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate trained models");
  ev->require_subcommand(1);
  auto* evr = ev->add_subcommand("retrieval", "MAP@k on the held-out icons");
  fs::path evr_embedding, evr_icons;
  std::size_t evr_k = 5;
  evr->add_option("--embedding", evr_embedding, "embedding checkpoint")->required();
  evr->add_option("--icons", evr_icons, "icons JSON-lines")->required();
  evr->add_option("--k", evr_k, "cutoff");
  auto* evp = ev->add_subcommand("predictor", "precision/recall of both heads");
  fs::path evp_embedding, evp_predictor, evp_icons, evp_ratings;
  std::string evp_split = "all";
  evp->add_option("--embedding", evp_embedding, "embedding checkpoint")->required();
  evp->add_option("--predictor", evp_predictor, "predictor checkpoint")->required();
  evp->add_option("--icons", evp_icons, "icons JSON-lines")->required();
  evp->add_option("--ratings", evp_ratings, "ratings CSV")->required();
  evp->add_option("--split", evp_split, "seen | unseen | all")->check(CLI::IsMember({"seen", "unseen", "all"}));

  // score
  auto* sc = app.add_subcommand("score", "score a candidate icon set");
  fs::path sc_embedding, sc_predictor, sc_set;
  std::string sc_weights;
  sc->add_option("--embedding", sc_embedding, "embedding checkpoint")->required();
  sc->add_option("--predictor", sc_predictor, "predictor checkpoint")->required();
  sc->add_option("--set", sc_set, "icon set JSON-lines")->required();
  sc->add_option("--weights", sc_weights, "w_sd,w_fam,w_vd");

  // serve
  auto* sv = app.add_subcommand("serve", "run the HTTP service");
  fs::path sv_config;
  int sv_port = -1;
  std::string sv_data_dir;
  sv->add_option("--config", sv_config, "engine config JSON")->required();
  sv->add_option("--port", sv_port, "port (overrides config and EVICON_PORT)");
  sv->add_option("--data-dir", sv_data_dir, "icon-set store directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*syn) {
      const auto protos = syngen::make_prototypes(syn_tags);
      const auto icons = syngen::generate_icons(protos, {syn_per_tag, 1.0, syn_seed});
      const auto oracle = syngen::RatingOracle::for_prototypes(protos, syn_seed);
      const auto rs = syngen::generate_ratings(icons, oracle, {syn_workers, 5, 4, syn_spam, syn_seed});
      fs::create_directories(syn_out);
      std::vector<icon::VectorIcon> plain;
      for (const auto& s : icons) plain.push_back(s.icon);
      icon::write_icons(syn_out / "icons.jsonl", plain);
      std::ofstream subs(syn_out / "submissions.jsonl");
      std::vector<ratings::RatingRecord> accepted;
      std::size_t rejected = 0;
      for (const auto& s : rs.submissions) {
        subs << ratings::to_json(s).dump() << '\n';
        auto result = ratings::validate_worker(s);
        if (auto* recs = std::get_if<std::vector<ratings::RatingRecord>>(&result)) {
          accepted.insert(accepted.end(), recs->begin(), recs->end());
        } else {
          ++rejected;
        }
      }
      ratings::write_csv(syn_out / "ratings.csv", accepted);
      json report = {{"icons", plain.size()},
                     {"tags", protos.size()},
                     {"submissions", rs.submissions.size()},
                     {"rejected", rejected},
                     {"ratings", accepted.size()},
                     {"out", syn_out.string()}};
      std::ostringstream text;
      text << "wrote " << plain.size() << " icons, " << rs.submissions.size() << " submissions (" << rejected
           << " rejected), " << accepted.size() << " ratings to " << syn_out.string() << '\n';
      emit(as_json, report, text.str());
    } else if (*cur) {
      cur_cfg.per_tag = !cur_global;
      const auto manifest = curation::curate(icon::read_icons(cur_icons), cur_cfg);
      const json j = manifest.to_json();
      write_json(cur_out, j);
      std::ostringstream text;
      for (const auto& g : j["pca"]["groups"]) {
        text << (g["tag"].get<std::string>().empty() ? "(all)" : g["tag"].get<std::string>()) << ": "
             << g["input"] << " icons, " << g["dims"] << " dims, k=" << g["k"] << ", selected "
             << g["selected"].size() << '\n';
      }
      text << "manifest: " << cur_out.string() << '\n';
      emit(as_json, j, text.str());
    } else if (*te) {
      const auto icons = icon::read_icons(te_icons);
      const auto split = embed::holdout_split(icons.size(), te_holdout, te_cfg.seed);
      std::vector<embed::TrainingPair> train;
      for (auto i : split.train) train.push_back({icon::canonical_raster(icons[i], te_cfg.resolution), icons[i].tags});
      const auto model = embed::train_embedding(train, te_cfg);
      json ckpt = embed::to_json(model);
      json test_ids = json::array();
      for (auto i : split.test) test_ids.push_back(icons[i].id);
      ckpt["holdout"] = {{"fraction", te_holdout}, {"seed", te_cfg.seed}, {"test_ids", std::move(test_ids)}};
      write_json(te_out, ckpt);
      json report = {{"checkpoint", te_out.string()},
                     {"train", split.train.size()},
                     {"test", split.test.size()},
                     {"loss_history", model.loss_history},
                     {"temperature", model.temperature()}};
      std::ostringstream text;
      text << "trained on " << split.train.size() << " icons; final loss " << model.loss_history.back()
           << "; checkpoint " << te_out.string() << '\n';
      emit(as_json, report, text.str());
    } else if (*tp) {
      const auto embedding = embed::embedding_from_json(read_json(tp_embedding));
      const auto icons = icon::read_icons(tp_icons);
      const auto records = ratings::read_csv(tp_ratings);
      std::set<std::string> tag_set;
      for (const auto& r : records) tag_set.insert(r.tag);
      const auto split = ratings::split_tags({tag_set.begin(), tag_set.end()}, tp_unseen, tp_cfg.seed);
      const std::set<std::string> unseen(split.unseen.begin(), split.unseen.end());
      std::vector<ratings::RatingRecord> seen_records;
      for (const auto& r : records) {
        if (!unseen.count(r.tag)) seen_records.push_back(r);
      }
      const auto examples = predict::make_examples(embedding, seen_records, by_id(icons));
      const auto trained = predict::train_predictor(examples, embedding.dim, tp_cfg);
      for (const auto& w : trained.warnings) std::cerr << "warning: " << w << '\n';
      json ckpt = predict::to_json(trained.model);
      ckpt["unseen_tags"] = split.unseen;
      write_json(tp_out, ckpt);
      json report = {{"checkpoint", tp_out.string()},
                     {"records", seen_records.size()},
                     {"unseen_tags", split.unseen},
                     {"loss_history", trained.model.loss_history},
                     {"warnings", trained.warnings}};
      std::ostringstream text;
      text << "trained on " << seen_records.size() << " ratings; final loss " << trained.model.loss_history.back()
           << "; checkpoint " << tp_out.string() << '\n';
      emit(as_json, report, text.str());
    } else if (*evr) {
      const json ckpt = read_json(evr_embedding);
      const auto model = embed::embedding_from_json(ckpt);
      const auto ids = holdout_ids(ckpt);
      std::vector<icon::VectorIcon> test;
      for (const auto& i : icon::read_icons(evr_icons)) {
        if (ids.empty() || ids.count(i.id)) test.push_back(i);
      }
      const auto report = embed::eval_map_at_k(model, test, evr_k);
      std::ostringstream text;
      text << "MAP@" << evr_k << " = " << report.map_at_k << " over " << report.queries << " queries\n";
      emit(as_json, report.to_json(), text.str());
    } else if (*evp) {
      const auto embedding = embed::embedding_from_json(read_json(evp_embedding));
      const json pj = read_json(evp_predictor);
      const auto predictor = predict::predictor_from_json(pj);
      std::set<std::string> unseen;
      if (pj.contains("unseen_tags")) {
        for (const auto& t : pj["unseen_tags"]) unseen.insert(t.get<std::string>());
      }
      std::vector<ratings::RatingRecord> chosen;
      for (const auto& r : ratings::read_csv(evp_ratings)) {
        const bool is_unseen = unseen.count(r.tag) > 0;
        if (evp_split == "all" || (evp_split == "unseen") == is_unseen) chosen.push_back(r);
      }
      if (chosen.empty()) throw Error("invalid_argument", "no ratings in split '" + evp_split + "'");
      const auto examples = predict::make_examples(embedding, chosen, by_id(icon::read_icons(evp_icons)));
      const auto report = predict::eval_precision_recall(predictor, examples);
      json j = {{"split", evp_split},
                {"records", chosen.size()},
                {"semantic_distance", report.sd.to_json()},
                {"familiarity", report.fam.to_json()}};
      std::ostringstream text;
      text << evp_split << " (" << chosen.size() << " ratings)\n";
      for (const auto* h : {&report.sd, &report.fam}) {
        text << "  " << h->head << ": precision " << h->macro_precision << ", recall " << h->macro_recall
             << ", accuracy " << h->accuracy << '\n';
      }
      emit(as_json, j, text.str());
    } else if (*sc) {
      const auto embedding = embed::embedding_from_json(read_json(sc_embedding));
      const auto predictor = predict::predictor_from_json(read_json(sc_predictor));
      service::EngineConfig cfg;
      if (!sc_weights.empty()) cfg.weights = parse_weights(sc_weights);
      const auto icons = icon::read_icons(sc_set);
      if (icons.empty()) throw Error("invalid_argument", "empty icon set");
      const service::Engine engine(embedding, predictor, {}, cfg);
      const auto scores = service::score_set(engine, icons, cfg.weights);
      std::vector<distinct::ScoreTerms> terms;
      for (const auto& s : scores) terms.push_back(s.terms);
      const auto best = distinct::best_candidate(cfg.weights, terms);
      json rows = json::array();
      std::ostringstream text;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& s = scores[i];
        rows.push_back({{"icon_id", s.icon_id},
                        {"phi_sd", s.terms.phi_sd},
                        {"phi_fam", s.terms.phi_fam},
                        {"phi_vd", s.terms.phi_vd},
                        {"score", s.score},
                        {"best", i == best}});
        text << (i == best ? "* " : "  ") << s.icon_id << "  score " << s.score << "  (sd " << s.terms.phi_sd
             << ", fam " << s.terms.phi_fam << ", vd " << s.terms.phi_vd << ")\n";
      }
      json report = {{"weights", {cfg.weights.w_sd, cfg.weights.w_fam, cfg.weights.w_vd}},
                     {"icons", std::move(rows)},
                     {"best", scores[best].icon_id}};
      emit(as_json, report, text.str());
    } else if (*sv) {
      auto cfg = service::EngineConfig::load(sv_config);
      cfg.apply_environment();
      if (sv_port >= 0) cfg.port = sv_port;
      if (!sv_data_dir.empty()) cfg.data_dir = sv_data_dir;
      cfg.validate();
      const auto engine = service::Engine::load(cfg);
      service::IconSetStore store(cfg.data_dir);
      service::Api api(engine, store);
      std::cerr << "listening on " << cfg.host << ':' << cfg.port << '\n';
      service::serve(api, cfg.host, cfg.port);
    }
  } catch (const Error& e) {
    if (as_json) {
      std::cout << json{{"error", e.code()}, {"message", e.what()}}.dump() << '\n';
    } else {
      std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
    }
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "evicon/curation.hpp"
#include "evicon/error.hpp"
#include "evicon/image_metrics.hpp"
#include "evicon/rng.hpp"
#include "evicon/syngen.hpp"
#include "oracles.hpp"
#include "service_oracle.hpp"
#include "toy_engine.hpp"

using namespace evicon;
using nlohmann::json;

#ifndef EVICON_FIXTURE_DIR
#define EVICON_FIXTURE_DIR "tests/fixtures"
#endif

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<icon::VectorIcon> plain(const std::vector<syngen::SyntheticIcon>& s) {
  std::vector<icon::VectorIcon> out;
  for (const auto& x : s) out.push_back(x.icon);
  return out;
}

embed::EmbeddingModel train_on(const std::vector<icon::VectorIcon>& icons, std::uint64_t seed) {
  std::vector<embed::TrainingPair> data;
  for (const auto& i : icons) data.push_back({icon::canonical_raster(i), i.tags});
  embed::EmbeddingConfig cfg;
  cfg.seed = seed;
  return embed::train_embedding(data, cfg);
}

// 1
Outcome gradient_integrity() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;

  embed::EmbeddingConfig ec;
  ec.dim = 8;
  ec.image_hidden = 16;
  ec.token_dim = 8;
  ec.text_hidden = 16;
  ec.resolution = 10;
  ec.seed = 1;
  auto emb = embed::EmbeddingModel::initialize(ec);
  std::size_t emb_params = 1;
  for (const auto& s : embed::trainable_parameters(emb)) emb_params += s.size();
  Rng rng(1);
  Eigen::MatrixXd images(100, 6), tokens(8, 6);
  for (Eigen::Index i = 0; i < images.size(); ++i) images.data()[i] = rng.uniform();
  for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = rng.normal();
  const auto eg = embed::batch_gradient(emb, images, tokens);
  const auto er = learn::gradient_check(embed::trainable_parameters(emb), eg.views(),
                                        [&] { return embed::batch_gradient(emb, images, tokens).loss; }, 1e-4);
  o.require(er.passed && er.max_relative_error < 1e-4, "InfoNCE check");
  o.require(emb_params <= 10000, "InfoNCE net size");
  worst = std::max(worst, er.max_relative_error);

  predict::PredictorConfig pc;
  pc.hidden = 24;
  pc.hidden_layers = 3;
  pc.seed = 2;
  auto pm = predict::PredictorModel::initialize(8, pc);
  std::size_t pred_params = 0;
  for (const auto& s : predict::trainable_parameters(pm)) pred_params += s.size();
  std::vector<predict::LabeledExample> batch;
  auto unit = [&] {
    Eigen::VectorXd v(8);
    for (int i = 0; i < 8; ++i) v(i) = rng.normal();
    return Eigen::VectorXd(v.normalized());
  };
  for (int i = 0; i < 6; ++i) {
    batch.push_back({unit(), unit(), ratings::all_demographics()[rng.index(9)], 1 + static_cast<int>(rng.index(5)),
                     1 + static_cast<int>(rng.index(5))});
  }
  // Each head on its own, then the joint objective.
  for (const char* head : {"sd", "fam", "joint"}) {
    auto mask = [&](predict::PredictorModel& m, std::vector<predict::LabeledExample> b) {
      for (auto& e : b) {
        if (std::string(head) == "sd") e.familiarity = 1;
        if (std::string(head) == "fam") e.semantic_distance = 1;
      }
      return predict::batch_gradient(m, b);
    };
    const auto g = mask(pm, batch);
    const auto r = learn::gradient_check(predict::trainable_parameters(pm), g.views(),
                                         [&] { return mask(pm, batch).loss; }, 1e-4);
    o.require(r.passed && r.max_relative_error < 1e-4, std::string("predictor check (") + head + ")");
    worst = std::max(worst, r.max_relative_error);
  }
  o.require(pred_params <= 10000, "predictor net size");
  const double secs = seconds_since(t0);
  o.require(secs < 30.0, "runtime < 30 s");
  o.note("max rel err " + fmt(worst) + ", nets " + std::to_string(emb_params) + "/" + std::to_string(pred_params) +
         " params, " + fmt(secs, 3) + " s");
  return o;
}

// 2
Outcome pca_kmeans_oracles() {
  Outcome o;
  Rng rng(2);
  double worst = 0;
  for (int inst = 0; inst < 6; ++inst) {
    const int n = inst % 2 ? 20 : 80;
    const int p = inst < 2 ? 64 : 8 + 9 * inst;
    Eigen::MatrixXd x(n, p);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform() * (1 + (i % p) % 5);
    const auto pca = curation::fit_pca(x, 0.9);
    const auto ref = oracle::jacobi(oracle::covariance(x));
    for (std::size_t c = 0; c < pca.dims(); ++c) {
      worst = std::max(worst, std::abs(pca.explained_variance(static_cast<Eigen::Index>(c)) - ref.values[c]));
      Eigen::VectorXd v = ref.vectors.col(static_cast<Eigen::Index>(c));
      Eigen::Index idx = 0;
      v.cwiseAbs().maxCoeff(&idx);
      if (v(idx) < 0) v = -v;
      worst = std::max(worst, (pca.components.row(static_cast<Eigen::Index>(c)).transpose() - v).cwiseAbs().maxCoeff());
    }
  }
  o.require(worst < 1e-6, "PCA vs Jacobi");

  Eigen::MatrixXd four(4, 1);
  four << 0.0, 0.1, 10.0, 10.1;
  const double best = oracle::best_partition_wcss({{0.0}, {0.1}, {10.0}, {10.1}}, 2);
  const auto km = curation::kmeans(four, 2, 7);
  o.require(std::abs(km.wcss - best) < 1e-12 && km.assignment[0] == km.assignment[1] &&
                km.assignment[2] == km.assignment[3] && km.assignment[0] != km.assignment[2],
            "1-D fixture partition");

  std::size_t violations = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 20 + static_cast<int>(rng.index(60));
    Eigen::MatrixXd x(n, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const auto c = curation::kmeans(x, 2 + rng.index(6), static_cast<std::uint64_t>(inst));
    for (std::size_t i = 1; i < c.wcss_history.size(); ++i) violations += c.wcss_history[i] > c.wcss_history[i - 1];
  }
  o.require(violations == 0, "wcss monotone");
  o.note("PCA max dev " + fmt(worst) + ", 1-D wcss " + fmt(km.wcss) + " (oracle " + fmt(best) + "), " +
         std::to_string(violations) + " wcss increases over 100 runs");
  return o;
}

// 3
Outcome curation_shape() {
  Outcome o;
  const curation::CurationConfig defaults;
  o.require(defaults.variance_target == 0.9 && defaults.k == 10 && defaults.per_cluster == 20, "defaults 0.9/10/20");
  const auto protos = syngen::make_prototypes(3);
  std::vector<icon::VectorIcon> icons;
  const std::size_t sizes[3] = {35, 150, 420};
  for (std::size_t t = 0; t < 3; ++t) {
    const auto g = syngen::generate_icons({protos[t], protos[(t + 1) % 3]}, {sizes[t], 1.0, 40 + t});
    for (std::size_t i = 0; i < sizes[t]; ++i) icons.push_back(g[i].icon);
  }
  // Ten glyph families under one tag: ten well-filled clusters.
  for (const auto& s : syngen::generate_icons(syngen::make_prototypes(10), {60, 1.0, 44})) {
    auto i = s.icon;
    i.id = "mixed-" + i.id;
    i.tags = {"mixed"};
    icons.push_back(i);
  }
  curation::CurationConfig cfg;
  cfg.seed = 3;
  const auto m = curation::curate(icons, cfg);
  std::string counts;
  std::size_t full_groups = 0;
  for (const auto& g : m.groups) {
    o.require(g.selected.size() <= 200, "≤ 200 for " + g.tag);
    const bool full = g.k == 10 && std::all_of(g.cluster_sizes.begin(), g.cluster_sizes.end(), [](auto s) { return s >= 20; });
    if (full) {
      ++full_groups;
      o.require(g.selected.size() == 200, "exactly 200 for " + g.tag);
    }
    counts += g.tag + ":" + std::to_string(g.unique_count) + "->" + std::to_string(g.selected.size()) + (full ? "(full) " : " ");
  }
  o.require(full_groups > 0, "a group with all clusters >= 20 was exercised");
  o.note(counts);
  return o;
}

// 4
Outcome embedding_quality() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto protos = syngen::make_prototypes(10);
  const auto icons = plain(syngen::generate_icons(protos, {60, 1.0, 7}));
  const auto split = embed::holdout_split(icons.size(), 0.1, 7);
  std::vector<icon::VectorIcon> train, test;
  for (auto i : split.train) train.push_back(icons[i]);
  for (auto i : split.test) test.push_back(icons[i]);
  const auto model = train_on(train, 7);
  const auto report = embed::eval_map_at_k(model, test, 5);
  const double secs = seconds_since(t0);
  bool strict = true;
  for (std::size_t e = 2; e < model.loss_history.size(); ++e) strict = strict && model.loss_history[e] < model.loss_history[e - 1];
  o.require(report.map_at_k >= 0.8, "MAP@5 >= 0.8");
  o.require(secs < 300, "wall-clock < 5 min");
  o.require(strict, "loss strictly decreasing after epoch 2");
  o.note("MAP@5 " + fmt(report.map_at_k) + " on " + std::to_string(report.queries) + " held-out icons, " + fmt(secs, 3) +
         " s, loss " + fmt(model.loss_history.front()) + " -> " + fmt(model.loss_history.back()));
  return o;
}

// 5
Outcome predictor_behavior() {
  Outcome o;
  const std::uint64_t seed = 7;
  const auto protos = syngen::make_prototypes(40);
  const auto syn = syngen::generate_icons(protos, {20, 1.0, seed});
  const auto icons = plain(syn);
  const auto oracle_model = syngen::RatingOracle::for_prototypes(protos, seed);
  const auto rs = syngen::generate_ratings(syn, oracle_model, {200, 5, 4, 0.1, seed});
  std::vector<ratings::RatingRecord> records;
  for (const auto& s : rs.submissions) {
    auto v = ratings::validate_worker(s);
    if (auto* r = std::get_if<std::vector<ratings::RatingRecord>>(&v)) records.insert(records.end(), r->begin(), r->end());
  }
  const auto embedding = train_on(icons, seed);

  std::vector<std::string> tags;
  for (const auto& p : protos) tags.push_back(p.tag);
  const auto tag_split = ratings::split_tags(tags, 6, seed);
  const std::set<std::string> unseen(tag_split.unseen.begin(), tag_split.unseen.end());
  const auto icon_split = embed::holdout_split(icons.size(), 0.1, seed);
  std::set<std::string> held_icons;
  for (auto i : icon_split.test) held_icons.insert(icons[i].id);

  std::vector<ratings::RatingRecord> train, held, ood;
  for (const auto& r : records) {
    if (unseen.count(r.tag)) ood.push_back(r);
    else if (held_icons.count(r.icon_id)) held.push_back(r);
    else train.push_back(r);
  }
  std::map<std::string, icon::VectorIcon> by_id;
  for (const auto& i : icons) by_id[i.id] = i;
  predict::PredictorConfig pc;
  pc.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  const auto trained = predict::train_predictor(predict::make_examples(embedding, train, by_id), embedding.dim, pc);
  const double secs = seconds_since(t0);
  const auto tr = predict::eval_precision_recall(trained.model, predict::make_examples(embedding, train, by_id));
  const auto ho = predict::eval_precision_recall(trained.model, predict::make_examples(embedding, held, by_id));
  const auto od = predict::eval_precision_recall(trained.model, predict::make_examples(embedding, ood, by_id));

  auto majority = [](const std::vector<ratings::RatingRecord>& rs, bool sd) {
    std::array<double, 5> c{};
    for (const auto& r : rs) c[static_cast<std::size_t>((sd ? r.semantic_distance : r.familiarity) - 1)] += 1;
    return *std::max_element(c.begin(), c.end()) / static_cast<double>(rs.size());
  };
  const double maj_sd = majority(held, true), maj_fam = majority(held, false);
  o.require(tr.sd.accuracy >= 0.9 && tr.fam.accuracy >= 0.9, "training accuracy >= 90%");
  o.require(ho.sd.accuracy >= maj_sd + 0.15 && ho.fam.accuracy >= maj_fam + 0.15, "held-out >= majority + 15 pts");
  o.require(od.sd.accuracy > 0.2 && od.fam.accuracy > 0.2, "out-of-domain > 20%");
  o.note("train " + fmt(tr.sd.accuracy, 3) + "/" + fmt(tr.fam.accuracy, 3) + ", held-out " + fmt(ho.sd.accuracy, 3) + "/" +
         fmt(ho.fam.accuracy, 3) + " vs majority " + fmt(maj_sd, 3) + "/" + fmt(maj_fam, 3) + ", unseen tags " +
         fmt(od.sd.accuracy, 3) + "/" + fmt(od.fam.accuracy, 3) + " (sd/fam), " + std::to_string(train.size()) +
         " training ratings, " + fmt(secs, 3) + " s");
  return o;
}

// 6
Outcome rating_qa() {
  Outcome o;
  const auto protos = syngen::make_prototypes(10);
  const auto syn = syngen::generate_icons(protos, {60, 1.0, 7});
  const auto rs = syngen::generate_ratings(syn, syngen::RatingOracle::for_prototypes(protos, 7), {100, 5, 4, 0.1, 7});
  const std::set<std::string> spam(rs.spam_workers.begin(), rs.spam_workers.end());
  std::size_t caught = 0, false_rejections = 0;
  for (const auto& s : rs.submissions) {
    const bool rejected = std::holds_alternative<ratings::Rejection>(ratings::validate_worker(s));
    if (spam.count(s.worker_id)) caught += rejected;
    else false_rejections += rejected;
  }
  const double recall = static_cast<double>(caught) / static_cast<double>(spam.size());
  o.require(recall >= 0.95, "spam recall >= 95%");
  o.require(false_rejections == 0, "no false rejections");
  Rng rng(6);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<int> v(1 + rng.index(30));
    for (auto& x : v) x = 1 + static_cast<int>(rng.index(5));
    mismatches += ratings::aggregate_mode(v).value != oracle::mode(v);
  }
  o.require(mismatches == 0, "aggregate_mode vs counting oracle");
  o.note(std::to_string(caught) + "/" + std::to_string(spam.size()) + " planted spam rejected, " +
         std::to_string(false_rejections) + " clean rejected, " + std::to_string(mismatches) + "/1000 mode mismatches");
  return o;
}

// 7
Outcome objective_correctness() {
  Outcome o;
  Rng rng(7);
  std::size_t argmax_mismatch = 0;
  for (int t = 0; t < 1000; ++t) {
    const distinct::ScoreWeights w{rng.uniform(), rng.uniform(), rng.uniform() + 1e-3};
    std::vector<distinct::ScoreTerms> c(1 + rng.index(12));
    for (auto& x : c) x = {rng.uniform(), rng.uniform(), rng.uniform()};
    if (t % 5 == 0 && c.size() > 1) c[1] = c[0];
    std::size_t best = 0;
    double best_v = -1;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double v = w.w_sd * c[i].phi_sd + w.w_fam * c[i].phi_fam + w.w_vd * c[i].phi_vd;
      if (v > best_v) {
        best_v = v;
        best = i;
      }
    }
    argmax_mismatch += distinct::best_candidate(w, c) != best;
  }
  auto unit = [&](int d) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = rng.normal();
    return Eigen::VectorXd(v.normalized());
  };
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<Eigen::VectorXd> set;
    for (std::size_t i = 0; i < 2 + rng.index(10); ++i) set.push_back(unit(8));
    const std::vector<Eigen::VectorXd> others(set.begin() + 1, set.end());
    worst = std::max(worst, std::abs(distinct::phi_vd_in_set(set, 0) - oracle::phi_vd(others, set[0])));
  }
  std::size_t out_of_range = 0;
  for (int t = 0; t < 10000; ++t) {
    std::vector<Eigen::VectorXd> set;
    const std::size_t n = 2 + rng.index(8);
    for (std::size_t i = 0; i < n; ++i) set.push_back(unit(6));
    if (t % 100 == 0) set[1] = -set[0];
    const double v = distinct::normalize_phi_vd(distinct::phi_vd_in_set(set, rng.index(n)), n);
    out_of_range += !(v >= 0.0 && v <= 1.0);
  }
  o.require(argmax_mismatch == 0, "argmax vs enumeration");
  o.require(worst < 1e-9, "phi_vd vs direct sum");
  o.require(out_of_range == 0, "normalized phi_vd in [0,1]");
  o.note(std::to_string(argmax_mismatch) + "/1000 argmax mismatches, phi_vd max dev " + fmt(worst) + ", " +
         std::to_string(out_of_range) + "/10000 out of range");
  return o;
}

// 8
Outcome retrieval_math() {
  Outcome o;
  const double ap = embed::average_precision_at_k({true, false, true, false, false}, 2, 5);
  o.require(std::abs(ap - 0.8333333333333334) < 1e-9, "AP hand example");
  Rng rng(8);
  double worst_p = 0, worst_s = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t w = t % 3 == 0 ? 28 : 4 + rng.index(30), h = t % 3 == 0 ? 28 : 4 + rng.index(30);
    std::vector<double> a(w * h), b(w * h);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = rng.uniform();
      b[i] = std::clamp(a[i] + 0.3 * rng.normal(), 0.0, 1.0);
    }
    const icon::GrayscaleImage ia(w, h, a), ib(w, h, b);
    worst_p = std::max(worst_p, std::abs(embed::psnr(ia, ib) - oracle::psnr(ia, ib)));
    worst_s = std::max(worst_s, std::abs(embed::ssim(ia, ib) - oracle::ssim(ia, ib)));
  }
  o.require(worst_p < 1e-6 && worst_s < 1e-6, "PSNR/SSIM vs direct formulas");
  o.note("AP " + fmt(ap, 10) + ", PSNR max dev " + fmt(worst_p) + ", SSIM max dev " + fmt(worst_s));
  return o;
}

// 9
struct Replay {
  std::vector<service::ApiResponse> responses;
  std::size_t mismatches = 0;
  std::vector<std::string> failures;
  std::map<std::string, std::string> files;
};

std::string substitute(std::string s, const std::vector<std::string>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string key = "{set" + std::to_string(i) + "}";
    for (auto p = s.find(key); p != std::string::npos; p = s.find(key)) s.replace(p, key.size(), ids[i]);
  }
  return s;
}

json expected_error(const std::function<void()>& library_call, int& status) {
  try {
    library_call();
  } catch (const Error& e) {
    status = (e.code() == "set_not_found" || e.code() == "icon_not_found") ? 404 : 400;
    return e.code();
  }
  status = 200;
  return nullptr;
}

Replay replay(const service::Engine& engine, const std::vector<json>& fixtures, const std::filesystem::path& dir) {
  Replay out;
  service::IconSetStore store(dir);
  service::Api api(engine, store);
  std::vector<std::string> ids;
  std::map<std::string, std::pair<std::uint64_t, std::vector<icon::VectorIcon>>> shadow;

  for (std::size_t n = 0; n < fixtures.size(); ++n) {
    const auto& f = fixtures[n];
    service::ApiRequest req{f["method"], substitute(f["path"], ids), {}, f.contains("body") ? f["body"].dump() : ""};
    if (f.contains("query"))
      for (const auto& [k, v] : f["query"].items()) req.query[k] = v.get<std::string>();
    const auto resp = api.handle(req);
    out.responses.push_back(resp);

    int status = 200;
    json expected;
    bool compare_error = false;
    std::vector<std::string> seg;
    {
      std::stringstream ss(req.path);
      std::string part;
      while (std::getline(ss, part, '/'))
        if (!part.empty()) seg.push_back(part);
    }
    const json body = f.contains("body") ? f["body"] : json();
    auto find_set = [&](const std::string& id) {
      if (!shadow.count(id)) throw Error("set_not_found", id);
      return &shadow[id];
    };

    if (seg[1] == "health") {
      expected = {{"status", "ok"}, {"model_versions", engine.model_versions()}};
    } else if (seg[1] == "predict") {
      json err = expected_error([&] {
        json ij = body["icon"];
        if (!ij.contains("id")) ij["id"] = "query";
        icon::icon_from_json(ij);
        if (body.contains("demographics")) ratings::demographics_from_json(body["demographics"]);
      }, status);
      if (status != 200) {
        expected = err;
        compare_error = true;
      } else {
        json ij = body["icon"];
        if (!ij.contains("id")) ij["id"] = "query";
        std::optional<ratings::Demographics> d;
        if (body.contains("demographics")) d = ratings::demographics_from_json(body["demographics"]);
        expected = expect::prediction(engine, icon::icon_from_json(ij), d);
      }
    } else if (seg[1] == "icon-sets" && seg.size() == 2) {
      std::vector<icon::VectorIcon> icons;
      json err = expected_error([&] {
        for (const auto& i : body["icons"]) icons.push_back(icon::icon_from_json(i));
      }, status);
      if (status != 200) {
        expected = err;
        compare_error = true;
      } else {
        status = 201;
        const std::string id = resp.body.value("set_id", "");
        ids.push_back(id);
        shadow[id] = {0, icons};
        expected = {{"set_id", id}, {"revision", 0}};
        const auto snap = store.snapshot(id);
        if (!snap || snap->icons != icons) out.failures.push_back("#" + std::to_string(n) + " stored icons differ");
      }
    } else if (seg[1] == "icon-sets" && seg.size() == 3) {
      json err = expected_error([&] { find_set(seg[2]); }, status);
      if (status != 200) {
        expected = err;
        compare_error = true;
      } else {
        expected = expect::set_body(engine, seg[2], shadow[seg[2]].first, shadow[seg[2]].second);
      }
    } else if (seg[1] == "icon-sets" && seg.size() == 4) {
      json err = expected_error([&] {
        if (req.query.count("threshold")) {
          std::size_t used = 0;
          try {
            std::stod(req.query["threshold"], &used);
          } catch (...) {
          }
          if (used != req.query["threshold"].size()) throw Error("invalid_parameter", "threshold");
        }
        find_set(seg[2]);
      }, status);
      if (status != 200) {
        expected = err;
        compare_error = true;
      } else {
        const double th = req.query.count("threshold") ? std::stod(req.query["threshold"]) : 0.3;
        expected = expect::graph(engine, shadow[seg[2]].second, th);
      }
    } else if (seg[1] == "icon-sets" && seg.size() == 5) {
      icon::VectorIcon updated;
      json err = expected_error([&] {
        auto* set = find_set(seg[2]);
        if (body.contains("id") && body["id"] != seg[4]) throw Error("invalid_icon", "id mismatch");
        json ij = body;
        ij["id"] = seg[4];
        if (!ij.contains("tags")) {
          for (const auto& i : set->second)
            if (i.id == seg[4]) ij["tags"] = i.tags;
        }
        updated = icon::icon_from_json(ij);
      }, status);
      if (status != 200) {
        expected = err;
        compare_error = true;
      } else {
        auto& [rev, icons] = shadow[seg[2]];
        auto it = std::find_if(icons.begin(), icons.end(), [&](const auto& i) { return i.id == seg[4]; });
        if (it == icons.end()) icons.push_back(updated);
        else *it = updated;
        ++rev;
        expected = expect::feedback(engine, seg[2], rev, icons, seg[4]);
      }
    } else if (seg[1] == "icons") {
      std::optional<icon::VectorIcon> q;
      std::size_t k = 5;
      json err = expected_error([&] {
        if (req.query.count("k")) {
          k = std::stoul(req.query["k"]);
          if (k == 0) throw Error("invalid_parameter", "k");
        }
        for (const auto& [id, s] : shadow) {
          for (const auto& i : s.second)
            if (!q && i.id == seg[2]) q = i;
        }
        for (const auto& i : engine.dataset())
          if (!q && i.id == seg[2]) q = i;
        if (!q) throw Error("icon_not_found", seg[2]);
      }, status);
      if (status != 200) {
        expected = err;
        compare_error = true;
      } else {
        expected = expect::suggestions(engine, *q, k);
      }
    }

    const bool same = resp.status == status && (compare_error ? resp.body.value("error", "") == expected : resp.body == expected);
    if (!same) {
      ++out.mismatches;
      out.failures.push_back("#" + std::to_string(n) + " " + req.method + " " + req.path + " -> " +
                             std::to_string(resp.status) + " (expected " + std::to_string(status) + ")");
    }
  }
  for (const auto& e : std::filesystem::directory_iterator(dir / "sets")) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out.files[e.path().filename().string()] = ss.str();
  }
  return out;
}

Outcome service_equivalence() {
  Outcome o;
  std::vector<json> fixtures;
  std::ifstream in(std::string(EVICON_FIXTURE_DIR) + "/service_requests.jsonl");
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) fixtures.push_back(json::parse(line));
  o.require(fixtures.size() == 50, "50 fixtures loaded (got " + std::to_string(fixtures.size()) + ")");
  const auto engine = toy::engine();
  const auto base = std::filesystem::temp_directory_path() / ("evicon-acceptance-" + std::to_string(::getpid()));
  std::filesystem::remove_all(base);
  const auto a = replay(engine, fixtures, base / "a");
  const auto b = replay(engine, fixtures, base / "b");
  std::filesystem::remove_all(base);
  o.require(a.mismatches == 0 && a.failures.empty(), "endpoint vs library");
  for (std::size_t i = 0; i < std::min<std::size_t>(3, a.failures.size()); ++i) o.note(a.failures[i]);
  o.require(a.responses == b.responses && a.files == b.files, "deterministic replay");
  o.note(std::to_string(fixtures.size() - a.mismatches) + "/" + std::to_string(fixtures.size()) +
         " responses equal library output, replay " + (a.responses == b.responses && a.files == b.files ? "identical" : "differs") +
         " (" + std::to_string(a.files.size()) + " stored sets)");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"PCA/k-means oracles", pca_kmeans_oracles},
      {"curation parameters", curation_shape},
      {"end-to-end embedding quality", embedding_quality},
      {"predictor behavior", predictor_behavior},
      {"rating QA", rating_qa},
      {"usability objective", objective_correctness},
      {"retrieval and image metrics", retrieval_math},
      {"service equivalence", service_equivalence},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}

#include "doctest.h"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "evicon/error.hpp"
#include "evicon/icon_io.hpp"
#include "service_oracle.hpp"
#include "toy_engine.hpp"

#include "httplib.h"

using namespace evicon;
using namespace evicon::service;
using nlohmann::json;

namespace {

icon::VectorIcon make(const std::string& id, const std::string& tag, double y) {
  return icon::make_icon(id, {tag}, {{{{0.1, y}, {0.9, y}}, 0.05}, {{{0.5, 0.1}, {0.5, 0.9}}, 0.05}});
}

json set_request(const std::vector<icon::VectorIcon>& icons) {
  json arr = json::array();
  for (const auto& i : icons) arr.push_back(icon::icon_to_json(i));
  return {{"icons", arr}};
}

ApiResponse call(Api& api, const std::string& method, const std::string& path, const json& body = nullptr,
                 std::map<std::string, std::string> query = {}) {
  return api.handle({method, path, std::move(query), body.is_null() ? "" : body.dump()});
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("evicon-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("health and unknown routes") {
  const auto engine = toy::engine();
  IconSetStore store;
  Api api(engine, store);
  const auto r = call(api, "GET", "/api/health");
  CHECK(r.status == 200);
  CHECK(r.body["status"] == "ok");
  CHECK(r.body["model_versions"] == engine.model_versions());
  CHECK(call(api, "GET", "/api/nothing").status == 404);
  CHECK(call(api, "DELETE", "/api/health").status == 405);
}

TEST_CASE("icon set lifecycle matches library calls") {
  const auto engine = toy::engine();
  IconSetStore store;
  Api api(engine, store);
  std::vector<icon::VectorIcon> icons{make("a", engine.dataset()[0].tags[0], 0.3), make("b", "unknown", 0.6)};
  const auto created = call(api, "POST", "/api/icon-sets", set_request(icons));
  REQUIRE(created.status == 201);
  const std::string id = created.body["set_id"];

  const auto got = call(api, "GET", "/api/icon-sets/" + id);
  CHECK(got.status == 200);
  CHECK(got.body == expect::set_body(engine, id, 0, icons));

  const auto g0 = call(api, "GET", "/api/icon-sets/" + id + "/graph");
  CHECK(g0.body == expect::graph(engine, icons, 0.3));

  icons[0] = make("a", engine.dataset()[0].tags[0], 0.7);
  auto body = icon::icon_to_json(icons[0]);
  body.erase("id");
  const auto put = call(api, "PUT", "/api/icon-sets/" + id + "/icons/a", body);
  REQUIRE(put.status == 200);
  CHECK(put.body == expect::feedback(engine, id, 1, icons, "a"));
  CHECK(put.body["warning"]["reference"].is_string());

  const auto put_unknown_tag = call(api, "PUT", "/api/icon-sets/" + id + "/icons/b", icon::icon_to_json(icons[1]));
  CHECK(put_unknown_tag.body["warning"]["reference"].is_null());

  const auto g1 = call(api, "GET", "/api/icon-sets/" + id + "/graph", nullptr, {{"threshold", "0.5"}});
  CHECK(g1.body == expect::graph(engine, icons, 0.5));
  CHECK(g1.body != g0.body);

  const auto sugg = call(api, "GET", "/api/icons/a/suggestions", nullptr, {{"k", "3"}});
  CHECK(sugg.body == expect::suggestions(engine, icons[0], 3));
  CHECK(sugg.body["suggestions"].size() == 3);
  const auto ds = call(api, "GET", "/api/icons/" + engine.dataset()[2].id + "/suggestions");
  CHECK(ds.body["suggestions"][0]["id"] == engine.dataset()[2].id);
}

TEST_CASE("predict endpoint") {
  const auto engine = toy::engine();
  IconSetStore store;
  Api api(engine, store);
  const auto icon = make("q", "home", 0.4);
  const ratings::Demographics elder{ratings::AgeLevel::elder, ratings::Occupation::other};
  const auto r = call(api, "POST", "/api/predict",
                      {{"icon", icon::icon_to_json(icon)}, {"demographics", ratings::to_json(elder)}});
  CHECK(r.body == expect::prediction(engine, icon, elder));
  const auto g = call(api, "POST", "/api/predict", {{"icon", icon::icon_to_json(icon)}});
  CHECK(g.body == expect::prediction(engine, icon, std::nullopt));
  for (const char* head : {"semantic_distance", "familiarity"}) {
    double sum = 0;
    for (double x : g.body["prediction"][head]["distribution"]) sum += x;
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("error responses") {
  const auto engine = toy::engine();
  IconSetStore store;
  Api api(engine, store);
  auto r = call(api, "GET", "/api/icon-sets/nope");
  CHECK(r.status == 404);
  CHECK(r.body["error"] == "set_not_found");
  r = call(api, "GET", "/api/icons/nope/suggestions");
  CHECK(r.status == 404);
  CHECK(r.body["error"] == "icon_not_found");
  r = api.handle({"POST", "/api/icon-sets", {}, "{broken"});
  CHECK(r.status == 400);
  CHECK(r.body["error"] == "invalid_json");
  r = call(api, "POST", "/api/icon-sets", {{"icons", {{{"id", "x"}, {"tags", json::array()}}}}});
  CHECK(r.status == 400);
  CHECK(r.body["error"] == "invalid_icon");
  const auto id = call(api, "POST", "/api/icon-sets", set_request({make("a", "t", 0.2)})).body["set_id"].get<std::string>();
  r = call(api, "GET", "/api/icon-sets/" + id + "/graph", nullptr, {{"threshold", "abc"}});
  CHECK(r.status == 400);
  r = call(api, "GET", "/api/icons/a/suggestions", nullptr, {{"k", "0"}});
  CHECK(r.status == 400);
  r = call(api, "PUT", "/api/icon-sets/" + id + "/icons/a", {{"id", "other"}, {"tags", {"t"}}});
  CHECK(r.status == 400);
  r = call(api, "POST", "/api/predict", {{"icon", icon::icon_to_json(make("a", "t", 0.2))}, {"demographics", {{"age_level", "baby"}, {"occupation", "other"}}}});
  CHECK(r.status == 400);
  CHECK(r.body["error"] == "invalid_demographics");
}

TEST_CASE("single-icon set") {
  const auto engine = toy::engine();
  IconSetStore store;
  Api api(engine, store);
  const auto id = call(api, "POST", "/api/icon-sets", set_request({make("a", "t", 0.2)})).body["set_id"].get<std::string>();
  const auto put = call(api, "PUT", "/api/icon-sets/" + id + "/icons/a", icon::icon_to_json(make("a", "t", 0.4)));
  CHECK(put.body["terms"]["phi_vd"] == 0.0);
  const auto g = call(api, "GET", "/api/icon-sets/" + id + "/graph");
  CHECK(g.body["nodes"].size() == 1);
  CHECK(g.body["edges"].empty());
}

TEST_CASE("file-backed store round-trips byte for byte") {
  const auto dir = temp_dir("store");
  std::string id;
  {
    IconSetStore store(dir);
    id = store.create({make("a", "t", 0.25), make("b", "u", 0.5)});
    store.mutate(id, [](IconSetRecord& r) { r.revision = 7; });
  }
  const auto file = dir / "sets" / (id + ".json");
  const auto before = slurp(file);
  IconSetStore reloaded(dir);
  const auto snap = reloaded.snapshot(id);
  REQUIRE(snap);
  CHECK(snap->revision == 7);
  CHECK(snap->icons.size() == 2);
  reloaded.mutate(id, [](IconSetRecord&) {});
  CHECK(slurp(file) == before);
  CHECK(reloaded.create({make("c", "t", 0.5)}) != id);
  std::filesystem::remove_all(dir);
}

TEST_CASE("concurrent edits to one set are serialized") {
  const auto engine = toy::engine();
  IconSetStore store;
  Api api(engine, store);
  const auto id = call(api, "POST", "/api/icon-sets", set_request({make("a", "t", 0.2), make("b", "t", 0.4)})).body["set_id"].get<std::string>();
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 5; ++i) {
        const auto r = call(api, "PUT", "/api/icon-sets/" + id + "/icons/" + (t % 2 ? "a" : "b"),
                            icon::icon_to_json(make(t % 2 ? "a" : "b", "t", 0.1 + 0.04 * i)));
        ok += r.status == 200;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(ok == 20);
  CHECK(store.snapshot(id)->revision == 20);
}

TEST_CASE("engine config and startup") {
  const auto cfg = EngineConfig::from_json({{"embedding_model", "e.json"}, {"weights", {1, 0, 0}}, {"port", 9000},
                                            {"projection", "neighbor-embed"}},
                                           "/models");
  CHECK(cfg.embedding_model == std::filesystem::path("/models/e.json"));
  CHECK(cfg.weights.w_sd == 1.0);
  CHECK(cfg.projection == distinct::ProjectionMethod::neighbor_embed);
  CHECK_THROWS_AS(EngineConfig::from_json({{"weights", {0, 0, 0}}}), Error);
  CHECK_THROWS_AS(EngineConfig::from_json({{"warning_threshold", -1}}), Error);

  ::setenv("EVICON_PORT", "9123", 1);
  ::setenv("EVICON_DATA_DIR", "/tmp/evicon-env", 1);
  auto env = cfg;
  env.apply_environment();
  CHECK(env.port == 9123);
  CHECK(env.data_dir == std::filesystem::path("/tmp/evicon-env"));
  ::unsetenv("EVICON_PORT");
  ::unsetenv("EVICON_DATA_DIR");

  EngineConfig missing;
  missing.embedding_model = "/nonexistent/e.json";
  missing.predictor_model = "/nonexistent/p.json";
  try {
    Engine::load(missing);
    FAIL("expected startup failure");
  } catch (const Error& e) {
    CHECK(e.code() == "startup_failure");
  }

  const auto dir = temp_dir("engine");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "e.json") << embed::to_json(toy::embedding()).dump();
  std::ofstream(dir / "p.json") << predict::to_json(toy::predictor()).dump();
  icon::write_icons(dir / "d.jsonl", toy::dataset());
  std::ofstream(dir / "config.json") << json{{"embedding_model", "e.json"}, {"predictor_model", "p.json"}, {"dataset", "d.jsonl"}}.dump();
  const auto loaded = Engine::load(EngineConfig::load(dir / "config.json"));
  CHECK(loaded.dataset().size() == toy::dataset().size());
  CHECK(loaded.model_versions() == toy::engine().model_versions());

  auto wrong = toy::predictor();
  wrong.embedding_dim = 8;
  CHECK_THROWS_AS(Engine(toy::embedding(), predict::PredictorModel::initialize(8, {}), {}, {}), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("score_set applies the objective") {
  const auto engine = toy::engine();
  const std::vector<icon::VectorIcon> icons{make("a", "t", 0.2), make("b", "t", 0.5), make("c", "u", 0.8)};
  const auto scores = score_set(engine, icons, {});
  REQUIRE(scores.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto fb = expect::feedback(engine, "s", 0, icons, icons[i].id);
    CHECK(scores[i].score == fb["score"].get<double>());
  }
}

TEST_CASE("live HTTP server answers like the handler") {
  const auto engine = toy::engine();
  IconSetStore store;
  Api api(engine, store);
  HttpServer server(api);
  const int port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.listen(); });
  httplib::Client client("127.0.0.1", port);
  for (int i = 0; i < 100 && !client.Get("/api/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));

  const auto health = client.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body) == call(api, "GET", "/api/health").body);

  const auto created = client.Post("/api/icon-sets", set_request({make("a", "t", 0.2), make("b", "t", 0.3)}).dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = json::parse(created->body)["set_id"];
  const auto put = client.Put("/api/icon-sets/" + id + "/icons/a", icon::icon_to_json(make("a", "t", 0.6)).dump(), "application/json");
  REQUIRE(put);
  CHECK(json::parse(put->body) == expect::feedback(engine, id, 1, {make("a", "t", 0.6), make("b", "t", 0.3)}, "a"));
  const auto graph = client.Get("/api/icon-sets/" + id + "/graph?threshold=0.4");
  REQUIRE(graph);
  CHECK(json::parse(graph->body) == call(api, "GET", "/api/icon-sets/" + id + "/graph", nullptr, {{"threshold", "0.4"}}).body);
  const auto missing = client.Get("/api/icon-sets/zzz");
  CHECK(missing->status == 404);

  server.stop();
  th.join();
}

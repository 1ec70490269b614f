#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "kic/distributions.hpp"
#include "kic/session.hpp"

using namespace kic;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("kic_session_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Ground-truth answers expressed in external ids, as a person would send.
json truthful_answer(const json& query, const std::map<std::uint64_t, ClassId>& truth) {
  std::map<ClassId, json> by_class;
  for (const auto& it : query.at("items")) {
    const auto id = it.at("id").get<std::uint64_t>();
    by_class[truth.at(id)].push_back(id);
  }
  json blocks = json::array();
  for (auto& [c, ids] : by_class) blocks.push_back(ids);
  return {{"blocks", blocks}, {"query_seq", query.at("query_seq")}};
}

std::map<std::uint64_t, ClassId> truth_map(const Dataset& d) {
  std::map<std::uint64_t, ClassId> m;
  for (const auto& it : d.items) m[it.external_id] = *it.truth;
  return m;
}

Dataset demo_dataset(unsigned n, std::size_t L, std::uint64_t seed, bool reps) {
  Dataset d = make_dataset(sample_labels(zipf(n, 0.8), L, seed), n, reps);
  // Sparse external ids, unlike internal positions.
  for (auto& it : d.items) it.external_id = 1000 + 7 * it.external_id;
  return d;
}

struct InProcess {
  std::uint64_t W;
  std::vector<std::pair<std::uint64_t, std::optional<ClassId>>> labels;
};

InProcess in_process(const Dataset& d, const EngineParams& p) {
  auto e = make_engine(d, p);
  SimulatedOracle oracle(d.truth());
  drive(*e, oracle);
  InProcess out{e->stats().queries, {}};
  for (auto s : d.samples()) out.labels.emplace_back(d[s].external_id, e->store().label(s));
  return out;
}

}  // namespace

TEST(Session, ScriptedAnswersMatchInProcessRun) {
  const auto dir = scratch("equiv");
  for (unsigned algo : {1u, 2u, 3u}) {
    const Dataset d = demo_dataset(4, 300, algo, algo == 3);
    EngineParams p;
    p.algo = algo;
    p.k = 3;
    p.seed = 42;
    p.cleanup_threshold = 16;
    SessionManager mgr(dir);
    auto s = mgr.create({{"manifest", dataset_to_json(d)}, {"params", p.to_json()}});
    const auto truth = truth_map(d);
    json q = s->query();
    while (q.at("status") == "pending") {
      auto out = s->answer(truthful_answer(q, truth));
      ASSERT_TRUE(out.accepted) << out.violation;
      q = s->query();
    }
    const auto ref = in_process(d, p);
    EXPECT_EQ(s->stats_json().at("W").get<std::uint64_t>(), ref.W) << "algo " << algo;
    EXPECT_EQ(s->labels(), ref.labels) << "algo " << algo;
  }
  fs::remove_all(dir);
}

TEST(Session, RejectedAnswersDoNotMutate) {
  const auto dir = scratch("reject");
  const Dataset d = demo_dataset(3, 50, 3, false);
  SessionManager mgr(dir);
  auto s = mgr.create({{"manifest", dataset_to_json(d)}, {"params", {{"algo", 1}, {"k", 3}}}});
  const json q = s->query();
  const auto before_log = fs::file_size(dir / (s->id() + ".jsonl"));
  const json before = s->state();
  const std::string first = q.at("items")[0].at("id").dump();
  std::vector<json> bad_bodies;
  for (const std::string& text :
       {std::string(R"({"blocks": []})"), R"({"blocks": [[)" + first + "]]}",
        R"({"blocks": [[)" + first + "," + first + "]]}", std::string(R"({"blocks": [[999999]]})"),
        std::string(R"({"nope": 1})"), std::string(R"({"blocks": [["x"]]})"),
        R"({"blocks": [[)" + first + R"(]], "query_seq": 17})"})
    bad_bodies.push_back(json::parse(text));
  for (const json& bad : bad_bodies) {
    const auto out = s->answer(bad);
    EXPECT_FALSE(out.accepted) << bad.dump();
    EXPECT_FALSE(out.violation.empty());
  }
  EXPECT_EQ(s->state(), before);
  EXPECT_EQ(s->query(), q);
  EXPECT_EQ(fs::file_size(dir / (s->id() + ".jsonl")), before_log);
  fs::remove_all(dir);
}

TEST(Session, RepresentativesOfDifferentClassesCannotShareABlock) {
  const auto dir = scratch("reps");
  const Dataset d = demo_dataset(4, 40, 5, true);
  SessionManager mgr(dir);
  auto s = mgr.create({{"manifest", dataset_to_json(d)}, {"params", {{"algo", 1}, {"k", 3}}}});
  const json q = s->query();
  json all = json::array();
  for (const auto& it : q.at("items")) all.push_back(it.at("id"));
  ASSERT_EQ(all.size(), 3u);
  const auto out = s->answer({{"blocks", json::array({all})}});
  EXPECT_FALSE(out.accepted);
  EXPECT_NE(out.violation.find("same block"), std::string::npos);
  fs::remove_all(dir);
}

// Random kill points: replaying the log reproduces state, and continuing
// from the replayed session gives the uninterrupted result.
TEST(Session, CrashReplayReproducesState) {
  std::mt19937 gen(3);
  for (unsigned algo : {1u, 2u, 3u}) {
    const auto dir = scratch("replay" + std::to_string(algo));
    const Dataset d = demo_dataset(5, 200, 10 + algo, algo == 3);
    EngineParams p;
    p.algo = algo;
    p.k = 3;
    p.seed = 8;
    p.cleanup_threshold = 16;
    const auto truth = truth_map(d);
    const auto ref = in_process(d, p);
    std::string id;
    std::size_t kill_at = std::uniform_int_distribution<std::size_t>(1, ref.W - 1)(gen);
    json state_before;
    {
      SessionManager mgr(dir);
      auto s = mgr.create({{"manifest", dataset_to_json(d)}, {"params", p.to_json()}});
      id = s->id();
      for (std::size_t t = 0; t < kill_at; ++t) ASSERT_TRUE(s->answer(truthful_answer(s->query(), truth)).accepted);
      state_before = s->state();
      state_before["stats"].erase("durations_ms");
      state_before["stats"].erase("mean_duration_ms");
    }
    SessionManager mgr(dir);
    auto s = mgr.get(id);
    json state_after = s->state();
    state_after["stats"].erase("durations_ms");
    state_after["stats"].erase("mean_duration_ms");
    EXPECT_EQ(state_after, state_before) << "algo " << algo;
    json q = s->query();
    while (q.at("status") == "pending") {
      ASSERT_TRUE(s->answer(truthful_answer(q, truth)).accepted);
      q = s->query();
    }
    EXPECT_EQ(s->stats_json().at("W").get<std::uint64_t>(), ref.W);
    EXPECT_EQ(s->labels(), ref.labels);
    fs::remove_all(dir);
  }
}

TEST(Session, TornFinalLineIsDropped) {
  const auto dir = scratch("torn");
  const Dataset d = demo_dataset(3, 60, 4, false);
  const auto truth = truth_map(d);
  std::string id;
  json state;
  {
    SessionManager mgr(dir);
    auto s = mgr.create({{"manifest", dataset_to_json(d)}, {"params", {{"algo", 1}, {"k", 2}}}});
    id = s->id();
    for (int t = 0; t < 5; ++t) ASSERT_TRUE(s->answer(truthful_answer(s->query(), truth)).accepted);
    state = s->state();
  }
  std::ofstream(dir / (id + ".jsonl"), std::ios::app) << R"({"seq": 6, "type": "answ)";
  SessionManager mgr(dir);
  EXPECT_EQ(mgr.get(id)->state().at("stats").at("W"), state.at("stats").at("W"));
  EXPECT_EQ(mgr.get(id)->state().at("event_seq"), state.at("event_seq"));
  // A corrupt line in the middle is an error, not silently skipped.
  std::ofstream(dir / (id + ".jsonl"), std::ios::app) << "\n" << R"({"seq": 6})" << "\n";
  EXPECT_THROW(SessionManager{dir}, std::exception);
  fs::remove_all(dir);
}

TEST(Session, ManagerIdsAndErrors) {
  const auto dir = scratch("mgr");
  SessionManager mgr(dir, demo_dataset(3, 20, 1, false));
  auto a = mgr.create(json::object());
  auto b = mgr.create({{"algo", 2}, {"k", 3}});
  EXPECT_EQ(a->id(), "000001");
  EXPECT_EQ(b->id(), "000002");
  EXPECT_THROW(mgr.get("nope"), NotFound);
  EXPECT_THROW(mgr.create({{"algo", 7}}), ConfigError);
  SessionManager empty(scratch("mgr2"));
  EXPECT_THROW(empty.create(json::object()), ConfigError);
  const std::string csv = a->export_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "sample_id,label");
  fs::remove_all(dir);
}

TEST(Session, HttpEndToEnd) {
  const auto dir = scratch("http");
  const Dataset d = demo_dataset(4, 150, 21, true);
  const auto truth = truth_map(d);
  SessionManager mgr(dir);
  httplib::Server server;
  register_routes(server, mgr);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  EngineParams p;
  p.algo = 3;
  p.k = 3;
  p.seed = 5;
  auto res = cli.Post("/sessions", json{{"manifest", dataset_to_json(d)}, {"params", p.to_json()}}.dump(),
                      "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201);
  const std::string id = json::parse(res->body).at("id");

  auto bad = cli.Post("/sessions/" + id + "/answer", R"({"blocks": [[1]]})", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 422);
  EXPECT_EQ(cli.Post("/sessions/" + id + "/answer", "{oops", "application/json")->status, 400);
  EXPECT_EQ(cli.Get("/sessions/zzz/query")->status, 404);
  EXPECT_EQ(cli.Post("/sessions", R"({"params": {"algo": 9}, "manifest": []})", "application/json")->status, 400);

  while (true) {
    auto q = cli.Get("/sessions/" + id + "/query");
    ASSERT_TRUE(q);
    ASSERT_EQ(q->status, 200);
    const json qj = json::parse(q->body);
    if (qj.at("status") == "complete") break;
    auto a = cli.Post("/sessions/" + id + "/answer", truthful_answer(qj, truth).dump(), "application/json");
    ASSERT_TRUE(a);
    ASSERT_EQ(a->status, 200) << a->body;
  }
  const json st = json::parse(cli.Get("/sessions/" + id + "/state")->body);
  EXPECT_EQ(st.at("status"), "complete");
  const auto ref = in_process(d, p);
  EXPECT_EQ(st.at("stats").at("W").get<std::uint64_t>(), ref.W);

  const json ex = json::parse(cli.Get("/sessions/" + id + "/export")->body);
  ASSERT_EQ(ex.at("labels").size(), ref.labels.size());
  for (std::size_t i = 0; i < ref.labels.size(); ++i) {
    EXPECT_EQ(ex.at("labels")[i].at("sample_id").get<std::uint64_t>(), ref.labels[i].first);
    EXPECT_EQ(ex.at("labels")[i].at("label").get<ClassId>(), *ref.labels[i].second);
    EXPECT_EQ(*ref.labels[i].second, truth.at(ref.labels[i].first));
  }
  auto csv = cli.Get("/sessions/" + id + "/export?format=csv");
  EXPECT_EQ(csv->get_header_value("Content-Type"), "text/csv");
  EXPECT_EQ(json::parse(cli.Get("/sessions")->body).at("sessions").size(), 1u);

  server.stop();
  th.join();
  fs::remove_all(dir);
}

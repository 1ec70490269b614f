#pragma once

// Live labeling sessions in which a person answers the queries, persisted as
// an append-only JSON-lines event log and served over HTTP.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "kic/basic.hpp"
#include "kic/batch.hpp"
#include "kic/engine.hpp"
#include "kic/factory.hpp"
#include "kic/greedy.hpp"
#include "kic/manifest.hpp"
#include "kic/oracle.hpp"

namespace kic {

using json = nlohmann::json;

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AnswerOutcome {
  bool accepted = false;
  std::string violation;
  json body;
};

class Session {
 public:
  // New session; writes the creation event.
  Session(std::string id, Dataset d, EngineParams p, std::filesystem::path log)
      : id_(std::move(id)), data_(std::move(d)), params_(p), log_path_(std::move(log)) {
    init();
    append({{"type", "create"},
            {"payload", {{"manifest", dataset_to_json(data_)}, {"params", params_.to_json()}}}});
  }

  // Rebuilds a session from its event log. A torn final line is dropped.
  static std::unique_ptr<Session> replay(const std::filesystem::path& log) {
    std::ifstream in(log);
    if (!in) throw ConfigError("cannot open session log " + log.string());
    std::vector<json> events;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        events.push_back(json::parse(line));
      } catch (const json::exception&) {
        if (in.peek() != std::char_traits<char>::eof())
          throw ConsistencyError("corrupt event in " + log.string());
      }
    }
    if (events.empty() || events[0].at("type") != "create")
      throw ConsistencyError("session log " + log.string() + " has no creation event");
    const auto& c = events[0].at("payload");
    std::unique_ptr<Session> s(new Session(log.stem().string(),
                                           dataset_from_json(c.at("manifest")),
                                           EngineParams::from_json(c.at("params")), log,
                                           Restore{}));
    s->seq_ = events[0].at("seq").get<std::uint64_t>() + 1;
    for (std::size_t i = 1; i < events.size(); ++i) {
      const auto& e = events[i];
      if (e.at("seq").get<std::uint64_t>() != s->seq_)
        throw ConsistencyError("event sequence gap in " + log.string());
      s->seq_++;
      if (e.at("type") != "answer") continue;
      const auto& pl = e.at("payload");
      auto q = s->engine_->next_query();
      if (!q || q->query_seq != pl.at("query_seq").get<std::uint64_t>())
        throw ConsistencyError("replayed answer does not match the pending query");
      s->engine_->submit(s->to_response(pl.at("blocks")));
      s->durations_.push_back(pl.at("duration_ms").get<double>());
    }
    s->fetched_.reset();
    return s;
  }

  const std::string& id() const { return id_; }
  std::mutex& mutex() { return mu_; }
  const Engine& engine() const { return *engine_; }
  const Dataset& dataset() const { return data_; }
  bool complete() const { return engine_->done(); }

  json query() {
    auto q = engine_->next_query();
    if (!q) return {{"session", id_}, {"status", "complete"}};
    if (!fetched_) fetched_ = std::chrono::steady_clock::now();
    return query_json(*q);
  }

  AnswerOutcome answer(const json& body) {
    AnswerOutcome out;
    auto q = engine_->next_query();
    if (!q) {
      out.violation = "session is complete";
      out.body = {{"accepted", false}, {"violation", out.violation}, {"status", "complete"}};
      return out;
    }
    std::optional<std::string> bad;
    QueryResponse r;
    if (!body.is_object() || !body.contains("blocks") || !body.at("blocks").is_array()) {
      bad = "answer needs a 'blocks' array";
    } else if (body.contains("query_seq") &&
               body.at("query_seq").get<std::uint64_t>() != q->query_seq) {
      bad = "answer refers to query " + body.at("query_seq").dump() + ", pending is " +
            std::to_string(q->query_seq);
    } else {
      try {
        r = to_response(body.at("blocks"));
        bad = validate_response(*q, r);
      } catch (const std::exception& e) {
        bad = e.what();
      }
    }
    if (bad) {
      out.violation = *bad;
      out.body = {{"accepted", false}, {"violation", *bad}, {"query", query_json(*q)},
                  {"stats", stats_json()}};
      return out;
    }
    const auto now = std::chrono::steady_clock::now();
    const double ms =
        std::chrono::duration<double, std::milli>(now - fetched_.value_or(now)).count();
    json blocks = json::array();
    for (const auto& b : r.blocks) {
      json ids = json::array();
      for (auto s : b) ids.push_back(data_[s].external_id);
      blocks.push_back(std::move(ids));
    }
    // Persist before applying.
    append({{"type", "answer"},
            {"payload", {{"query_seq", q->query_seq}, {"blocks", blocks}, {"duration_ms", ms}}}});
    engine_->submit(r);
    durations_.push_back(ms);
    fetched_.reset();
    out.accepted = true;
    out.body = {{"accepted", true}, {"stats", stats_json()}};
    auto next = engine_->next_query();
    out.body["status"] = next ? "pending" : "complete";
    out.body["query"] = next ? query_json(*next) : json(nullptr);
    return out;
  }

  json stats_json() const {
    const RunStats s = engine_->stats();
    double mean = 0.0;
    for (double d : durations_) mean += d;
    if (!durations_.empty()) mean /= static_cast<double>(durations_.size());
    return {{"W", s.queries},
            {"labeled", s.labeled},
            {"total", data_.samples().size()},
            {"rate", s.rate},
            {"mean_duration_ms", mean},
            {"durations_ms", durations_}};
  }

  json state() const {
    return {{"id", id_},
            {"algo", params_.algo},
            {"k", params_.k},
            {"status", complete() ? "complete" : "pending"},
            {"event_seq", seq_},
            {"stats", stats_json()}};
  }

  // (external id, label) for every sample; label empty while unknown.
  std::vector<std::pair<std::uint64_t, std::optional<ClassId>>> labels() const {
    std::vector<std::pair<std::uint64_t, std::optional<ClassId>>> out;
    for (auto s : data_.samples()) out.emplace_back(data_[s].external_id, engine_->store().label(s));
    return out;
  }

  std::string export_csv() const {
    std::ostringstream os;
    os << "sample_id,label\n";
    for (const auto& [id, label] : labels()) {
      os << id << ',';
      if (label) os << *label;
      os << '\n';
    }
    return os.str();
  }

  json export_json() const {
    json rows = json::array();
    for (const auto& [id, label] : labels())
      rows.push_back({{"sample_id", id}, {"label", label ? json(*label) : json(nullptr)}});
    return {{"labels", rows}, {"stats", stats_json()}, {"status", complete() ? "complete" : "pending"}};
  }

 private:
  struct Restore {};
  Session(std::string id, Dataset d, EngineParams p, std::filesystem::path log, Restore)
      : id_(std::move(id)), data_(std::move(d)), params_(p), log_path_(std::move(log)) {
    init();
  }

  void init() {
    engine_ = make_engine(data_, params_);
    for (std::uint32_t i = 0; i < data_.size(); ++i) by_external_[data_.items[i].external_id] = i;
  }

  json query_json(const Query& q) const {
    json items = json::array();
    for (const auto& it : q.items) {
      const auto& d = data_[it.sample];
      json j = {{"id", d.external_id}, {"uri", d.uri}, {"representative", it.is_representative()}};
      if (it.known_class) j["class"] = *it.known_class;
      items.push_back(std::move(j));
    }
    return {{"session", id_}, {"status", "pending"}, {"query_seq", q.query_seq}, {"items", items}};
  }

  QueryResponse to_response(const json& blocks) const {
    QueryResponse r;
    for (const auto& b : blocks) {
      if (!b.is_array()) throw ConfigError("each block must be an array of ids");
      std::vector<SampleId> block;
      for (const auto& id : b) {
        if (!id.is_number_integer()) throw ConfigError("block entries must be integer ids");
        auto it = by_external_.find(id.get<std::uint64_t>());
        if (it == by_external_.end())
          throw ConfigError("unknown id " + id.dump());
        block.emplace_back(it->second);
      }
      r.blocks.push_back(std::move(block));
    }
    return r;
  }

  void append(json event) {
    event["seq"] = seq_++;
    event["ts"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
    std::ofstream out(log_path_, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to " + log_path_.string());
    out << event.dump() << '\n';
    out.flush();
    if (!out) throw std::runtime_error("write to " + log_path_.string() + " failed");
  }

  std::string id_;
  Dataset data_;
  EngineParams params_;
  std::filesystem::path log_path_;
  std::unique_ptr<Engine> engine_;
  std::unordered_map<std::uint64_t, std::uint32_t> by_external_;
  std::uint64_t seq_ = 0;
  std::vector<double> durations_;
  std::optional<std::chrono::steady_clock::time_point> fetched_;
  std::mutex mu_;
};

inline std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("KIC_DATA_DIR"); env && *env) return env;
  return std::filesystem::path("kic-sessions");
}

class SessionManager {
 public:
  explicit SessionManager(std::filesystem::path dir, std::optional<Dataset> default_manifest = {})
      : dir_(std::move(dir)), default_manifest_(std::move(default_manifest)) {
    std::filesystem::create_directories(dir_);
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (entry.path().extension() != ".jsonl") continue;
      std::shared_ptr<Session> s = Session::replay(entry.path());
      const std::string id = s->id();
      sessions_.emplace(id, std::move(s));
    }
    for (const auto& [id, s] : sessions_) {
      try {
        next_id_ = std::max(next_id_, std::stoull(id) + 1);
      } catch (const std::exception&) {
      }
    }
  }

  std::shared_ptr<Session> create(const json& body) {
    Dataset d;
    if (body.contains("manifest")) d = dataset_from_json(body.at("manifest"));
    else if (default_manifest_) d = *default_manifest_;
    else throw ConfigError("request has no manifest and the server has no default");
    const EngineParams p = EngineParams::from_json(body.contains("params") ? body.at("params") : body);
    std::lock_guard lock(mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(next_id_++));
    auto s = std::make_shared<Session>(buf, std::move(d), p, dir_ / (std::string(buf) + ".jsonl"));
    sessions_.emplace(s->id(), s);
    return s;
  }

  std::shared_ptr<Session> get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("no session '" + id + "'");
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::optional<Dataset> default_manifest_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  unsigned long long next_id_ = 1;
};

namespace detail {
inline void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const NotFound& e) {
    reply(res, 404, {{"error", e.what()}});
  } catch (const ConfigError& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const json::exception& e) {
    reply(res, 400, {{"error", std::string("bad JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}
}  // namespace detail

inline void register_routes(httplib::Server& server, SessionManager& mgr,
                            const std::optional<std::string>& static_dir = {}) {
  using detail::guarded;
  using detail::reply;
  server.Post("/sessions", [&mgr](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = req.body.empty() ? json::object() : json::parse(req.body);
      auto s = mgr.create(body);
      std::lock_guard lock(s->mutex());
      reply(res, 201, {{"id", s->id()}, {"query", s->query()}, {"state", s->state()}});
    });
  });
  server.Get("/sessions", [&mgr](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, {{"sessions", mgr.ids()}}); });
  });
  server.Get("/sessions/:id/query", [&mgr](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = mgr.get(req.path_params.at("id"));
      std::lock_guard lock(s->mutex());
      reply(res, 200, s->query());
    });
  });
  server.Post("/sessions/:id/answer", [&mgr](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = mgr.get(req.path_params.at("id"));
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        reply(res, 400, {{"accepted", false}, {"violation", "body is not JSON"}});
        return;
      }
      std::lock_guard lock(s->mutex());
      auto out = s->answer(body);
      reply(res, out.accepted ? 200 : 422, out.body);
    });
  });
  server.Get("/sessions/:id/state", [&mgr](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = mgr.get(req.path_params.at("id"));
      std::lock_guard lock(s->mutex());
      reply(res, 200, s->state());
    });
  });
  server.Get("/sessions/:id/export", [&mgr](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = mgr.get(req.path_params.at("id"));
      std::lock_guard lock(s->mutex());
      if (req.has_param("format") && req.get_param_value("format") == "csv") {
        res.status = 200;
        res.set_content(s->export_csv(), "text/csv");
      } else {
        reply(res, 200, s->export_json());
      }
    });
  });
  if (static_dir && !server.set_mount_point("/", *static_dir))
    throw ConfigError("static directory " + *static_dir + " does not exist");
}

}  // namespace kic

#ifndef QQLINEUP_SERVICE_STUDY_SERVICE_HPP
#define QQLINEUP_SERVICE_STUDY_SERVICE_HPP

// Hosts lineups for human evaluation. All state is derived from an
// append-only record log; handlers are transport-independent and return a
// status code plus body so they can be exercised without a socket.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "qqlineup/digest.hpp"
#include "qqlineup/error.hpp"
#include "qqlineup/lineup.hpp"
#include "qqlineup/service/store.hpp"
#include "qqlineup/svg.hpp"
#include "qqlineup/visual.hpp"

namespace qqlineup::service {

inline constexpr int kSchemaVersion = 1;

struct ServiceConfig {
  std::string admin_token;  // empty disables admin routes
  std::size_t disclosure_threshold = 10;
  std::uint64_t service_seed = 0;
  std::size_t session_size = 10;
  std::size_t max_serves = 0;  // per lineup; 0 = unlimited
  std::string salt;            // empty: generated once and kept in the store
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

struct Session {
  std::string session_id;
  std::string observer_id;
  std::vector<std::string> assigned_lineups;
  std::set<std::string> completed;
};

class StudyService {
 public:
  StudyService(std::unique_ptr<RecordStore> store, ServiceConfig config)
      : store_(std::move(store)), config_(std::move(config)) {
    for (const auto& r : store_->records()) apply(r);
    if (salt_.empty()) {
      std::string salt = config_.salt;
      if (salt.empty()) {
        std::random_device rd;
        for (int i = 0; i < 4; ++i) salt += std::to_string(rd());
        salt = sha256_hex(salt);
      }
      apply(store_->append("secret", {{"salt", salt}}));
    }
  }

  // --- routes ---------------------------------------------------------------

  Response healthz() const {
    std::shared_lock lock(mutex_);
    return json_response(200, {{"status", "ok"}, {"lineups", lineups_.size()}, {"records", store_->records().size()}});
  }

  /// POST /lineups (admin).
  Response create_lineup(const std::string& body, const std::string& authorization) {
    if (!authorized(authorization)) return error(401, "missing or invalid admin token");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      return error(400, std::string("malformed JSON: ") + e.what());
    }
    try {
      LineupSpec spec = spec_from_json(j);
      std::optional<nlohmann::json> cell;
      if (j.contains("cell")) cell = j.at("cell");
      std::unique_lock lock(mutex_);
      const std::string id = "L" + sha256_hex(std::to_string(config_.service_seed) + "|lineup|" +
                                              std::to_string(store_->next_seq())).substr(0, 16);
      Lineup l = assemble_lineup(std::move(spec), LineupOptions{id, salt_});
      persist_lineup(l, cell);
      return json_response(201, {{"lineup_id", l.id}, {"key_digest", l.key_digest}});
    } catch (const DegenerateInputError& e) {
      return error(422, e.what());
    } catch (const std::invalid_argument& e) {
      return error(400, e.what());
    } catch (const std::domain_error& e) {
      return error(400, e.what());
    }
  }

  /// Loads a private lineup record (as written by `qqlineup generate`). The
  /// answer digest is re-sealed with the service salt.
  std::string import_private(const nlohmann::json& record) {
    std::unique_lock lock(mutex_);
    Lineup l = lineup_from_private_json(record);
    if (lineups_.contains(l.id)) return l.id;
    l.key_digest = compute_key_digest(l.id, l.data_position, salt_);
    std::optional<nlohmann::json> cell;
    if (record.contains("cell")) cell = record.at("cell");
    persist_lineup(l, cell);
    return l.id;
  }

  /// POST /admin/import with a manifest or {"lineups": [...]}.
  Response import_lineups(const std::string& body, const std::string& authorization) {
    if (!authorized(authorization)) return error(401, "missing or invalid admin token");
    try {
      const auto j = nlohmann::json::parse(body);
      std::vector<std::string> ids;
      for (const auto& rec : j.at("lineups")) ids.push_back(import_private(rec));
      return json_response(201, {{"imported", ids}});
    } catch (const nlohmann::json::exception& e) {
      return error(400, e.what());
    } catch (const std::exception& e) {
      return error(400, e.what());
    }
  }

  /// GET /lineups/{id}
  Response get_lineup(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = lineups_.find(id);
    if (it == lineups_.end()) return error(404, "unknown lineup '" + id + "'");
    return json_response(200, {{"lineup", it->second.public_json}, {"svg_url", "/lineups/" + id + "/svg"}});
  }

  /// GET /lineups/{id}/svg
  Response get_lineup_svg(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = lineups_.find(id);
    if (it == lineups_.end()) return error(404, "unknown lineup '" + id + "'");
    return Response{200, "image/svg+xml", it->second.svg};
  }

  /// POST /lineups/{id}/evaluations
  Response post_evaluation(const std::string& id, const std::string& body) {
    Evaluation e;
    try {
      e = evaluation_from_json(nlohmann::json::parse(body));
    } catch (const nlohmann::json::exception& ex) {
      return error(400, std::string("malformed JSON: ") + ex.what());
    } catch (const UsageError& ex) {
      return error(400, ex.what());
    }
    std::unique_lock lock(mutex_);
    auto it = lineups_.find(id);
    if (it == lineups_.end()) return error(404, "unknown lineup '" + id + "'");
    if (!e.lineup_id.empty() && e.lineup_id != id) return error(400, "lineup_id in body does not match the route");
    e.lineup_id = id;
    try {
      validate_evaluation(e, it->second.m, it->second.allow_multiple_select);
    } catch (const UsageError& ex) {
      return error(400, ex.what());
    }
    if (it->second.observers.contains(e.observer_id))
      return error(409, "observer '" + e.observer_id + "' already evaluated lineup '" + id + "'");
    if (e.timestamp.empty()) e.timestamp = utc_now();
    const Record& r = store_->append("evaluation", nlohmann::json(e));
    apply(r);
    nlohmann::json out = nlohmann::json(e);
    out["seq"] = r.seq;
    return json_response(201, out);
  }

  /// GET /lineups/{id}/result. Admin callers get the full result; public
  /// callers get the aggregate once N reaches the disclosure threshold.
  Response get_result(const std::string& id, const std::string& authorization) const {
    std::shared_lock lock(mutex_);
    auto it = lineups_.find(id);
    if (it == lineups_.end()) return error(404, "unknown lineup '" + id + "'");
    const auto& st = it->second;
    const VisualTestResult r = aggregate(st.evaluations, id, st.m, st.data_position, st.allow_multiple_select);
    nlohmann::json j = r;
    if (authorized(authorization)) {
      j["panel_counts"] = panel_pick_counts(st.evaluations, st.m);
      j["data_position"] = st.data_position;
      j["disclosure"] = "admin";
      return json_response(200, j);
    }
    if (r.N < config_.disclosure_threshold) {
      return json_response(403, {{"error", "result withheld until enough independent evaluations are collected"},
                                 {"N", r.N},
                                 {"threshold", config_.disclosure_threshold},
                                 {"retry_after_evaluations", config_.disclosure_threshold - r.N}});
    }
    j["disclosure"] = "public";
    return json_response(200, j);
  }

  /// POST /sessions. Resumes the observer's open session when there is one.
  Response create_session(const std::string& body) {
    nlohmann::json j = nlohmann::json::object();
    if (!body.empty()) {
      try {
        j = nlohmann::json::parse(body);
      } catch (const nlohmann::json::exception& e) {
        return error(400, std::string("malformed JSON: ") + e.what());
      }
      if (!j.is_object()) return error(400, "session request must be a JSON object");
    }
    std::unique_lock lock(mutex_);
    std::string observer;
    std::size_t size = config_.session_size;
    try {
      observer = j.value("observer_id", "");
      if (j.contains("size")) size = std::max<std::size_t>(1, j.at("size").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
      return error(400, e.what());
    }
    if (observer.empty())
      observer = "O" + sha256_hex(std::to_string(config_.service_seed) + "|observer|" +
                                  std::to_string(store_->next_seq())).substr(0, 16);
    if (auto open = open_session_of(observer)) return json_response(200, session_json(*open));

    const auto assigned = choose_lineups(observer, size, store_->next_seq());
    if (assigned.empty()) return error(409, "no lineups available for assignment");
    const std::string sid = "S" + sha256_hex(std::to_string(config_.service_seed) + "|session|" +
                                             std::to_string(store_->next_seq())).substr(0, 16);
    apply(store_->append("session", {{"session_id", sid}, {"observer_id", observer}, {"assigned_lineups", assigned}}));
    return json_response(201, session_json(sessions_.at(sid)));
  }

  /// GET /sessions/{id}
  Response get_session(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return error(404, "unknown session '" + id + "'");
    return json_response(200, session_json(it->second));
  }

  // --- inspection -----------------------------------------------------------

  /// Deterministic dump of the derived state; equal for a live service and
  /// one rebuilt from the same log.
  [[nodiscard]] nlohmann::json state_snapshot() const {
    std::shared_lock lock(mutex_);
    nlohmann::json lineups = nlohmann::json::object();
    for (const auto& [id, st] : lineups_) {
      nlohmann::json evals = nlohmann::json::array();
      for (const auto& e : st.evaluations) evals.push_back(e);
      lineups[id] = {{"public", st.public_json}, {"svg_sha256", sha256_hex(st.svg)},
                     {"data_position", st.data_position}, {"serves", st.serves},
                     {"evaluations", evals}};
    }
    nlohmann::json sessions = nlohmann::json::object();
    for (const auto& [id, s] : sessions_) sessions[id] = session_json(s);
    return {{"lineups", lineups}, {"sessions", sessions}, {"records", store_->records().size()}};
  }

  [[nodiscard]] std::size_t serve_count(const std::string& id) const {
    std::shared_lock lock(mutex_);
    return lineups_.at(id).serves;
  }

  [[nodiscard]] std::vector<std::string> lineup_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, st] : lineups_) ids.push_back(id);
    return ids;
  }

  [[nodiscard]] std::string data_id_of(const std::string& id) const {
    std::shared_lock lock(mutex_);
    return lineups_.at(id).data_id;
  }

  [[nodiscard]] const RecordStore& store() const { return *store_; }

 private:
  struct LineupState {
    nlohmann::json public_json;
    std::string svg;
    std::size_t data_position = 0;
    std::size_t m = 0;
    bool allow_multiple_select = false;
    std::string data_id;
    std::string design;
    std::string cell;
    std::vector<Evaluation> evaluations;
    std::set<std::string> observers;
    std::size_t serves = 0;
  };

  static Response json_response(int status, nlohmann::json body) {
    body["schema_version"] = kSchemaVersion;
    return Response{status, "application/json", body.dump()};
  }

  static Response error(int status, const std::string& message) { return json_response(status, {{"error", message}}); }

  static std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  [[nodiscard]] bool authorized(const std::string& authorization) const {
    if (config_.admin_token.empty()) return false;
    return authorization == "Bearer " + config_.admin_token;
  }

  /// Public lineup JSON without anything computed directly from data values:
  /// per-panel ordinates and ranges, and the shared ranges, are dropped. The
  /// pre-rendered SVG is what observers see.
  static nlohmann::json observer_view(const Lineup& l) {
    nlohmann::json j = to_public_json(l);
    for (auto& p : j.at("panels")) {
      p.erase("ordinates");
      p.erase("x_range");
      p.erase("y_range");
    }
    j.erase("shared_x_range");
    j.erase("shared_y_range");
    return j;
  }

  void persist_lineup(const Lineup& l, const std::optional<nlohmann::json>& cell) {
    nlohmann::json priv = to_private_json(l);
    priv["data_id"] = data_fingerprint(l.spec.data).substr(0, 16);
    if (cell) priv["cell"] = *cell;
    nlohmann::json pub{{"id", l.id}, {"lineup", observer_view(l)}, {"svg", render_svg(l, default_layout(l.spec.m))}};
    apply(store_->append("lineup_private", std::move(priv)));
    apply(store_->append("lineup_public", std::move(pub)));
  }

  // Single state transition used for live writes and for replay.
  void apply(const Record& r) {
    const auto& b = r.body;
    if (r.kind == "secret") {
      salt_ = b.at("salt").get<std::string>();
    } else if (r.kind == "lineup_private") {
      auto& st = lineups_[b.at("id").get<std::string>()];
      const auto& spec = b.at("spec");
      st.data_position = b.at("data_position").get<std::size_t>();
      st.m = spec.at("m").get<std::size_t>();
      st.allow_multiple_select = spec.at("allow_multiple_select").get<bool>();
      st.design = spec.at("design").get<std::string>();
      st.data_id = b.value("data_id", "");
      if (b.contains("cell")) st.cell = b.at("cell").value("df", nlohmann::json()).dump() + "/" +
                                        b.at("cell").value("n", nlohmann::json()).dump();
    } else if (r.kind == "lineup_public") {
      auto& st = lineups_[b.at("id").get<std::string>()];
      st.public_json = b.at("lineup");
      st.svg = b.at("svg").get<std::string>();
    } else if (r.kind == "evaluation") {
      Evaluation e = evaluation_from_json(b);
      auto& st = lineups_.at(e.lineup_id);
      st.observers.insert(e.observer_id);
      for (auto& sid : sessions_by_observer_[e.observer_id]) {
        auto& s = sessions_.at(sid);
        if (std::find(s.assigned_lineups.begin(), s.assigned_lineups.end(), e.lineup_id) != s.assigned_lineups.end())
          s.completed.insert(e.lineup_id);
      }
      st.evaluations.push_back(std::move(e));
    } else if (r.kind == "session") {
      Session s{b.at("session_id").get<std::string>(), b.at("observer_id").get<std::string>(),
                b.at("assigned_lineups").get<std::vector<std::string>>(), {}};
      for (const auto& id : s.assigned_lineups) {
        auto& st = lineups_.at(id);
        ++st.serves;
        if (st.observers.contains(s.observer_id)) s.completed.insert(id);
      }
      sessions_by_observer_[s.observer_id].push_back(s.session_id);
      sessions_.emplace(s.session_id, std::move(s));
    }
  }

  std::optional<Session> open_session_of(const std::string& observer) const {
    auto it = sessions_by_observer_.find(observer);
    if (it == sessions_by_observer_.end()) return std::nullopt;
    for (const auto& sid : it->second) {
      const auto& s = sessions_.at(sid);
      if (s.completed.size() < s.assigned_lineups.size()) return s;
    }
    return std::nullopt;
  }

  /// Least-served first: whole data samples are ranked by the serve count
  /// of their least-served lineup, then by total serves of the sample and
  /// of its (df, n) cell; within a sample the least-served lineup of the
  /// least-served design wins. At most one lineup per data sample.
  std::vector<std::string> choose_lineups(const std::string& observer, std::size_t size, std::uint64_t salt_seq) const {
    std::set<std::string> seen_lineups;
    std::set<std::string> seen_data;
    if (auto it = sessions_by_observer_.find(observer); it != sessions_by_observer_.end())
      for (const auto& sid : it->second)
        for (const auto& id : sessions_.at(sid).assigned_lineups) {
          seen_lineups.insert(id);
          seen_data.insert(lineups_.at(id).data_id);
        }
    std::map<std::string, std::size_t> design_serves, cell_serves;
    for (const auto& [id, st] : lineups_) {
      design_serves[st.design] += st.serves;
      cell_serves[st.cell] += st.serves;
    }
    auto tiebreak = [&](const std::string& s) {
      return sha256_hex(std::to_string(config_.service_seed) + "|" + std::to_string(salt_seq) + "|" + s);
    };

    struct Group {
      std::string data_id;
      std::size_t min_serves = SIZE_MAX;
      std::size_t total_serves = 0;
      std::size_t cell_serves = 0;
      std::string best;
      std::tuple<std::size_t, std::size_t, std::string> best_key{SIZE_MAX, SIZE_MAX, ""};
    };
    std::map<std::string, Group> groups;
    for (const auto& [id, st] : lineups_) {
      const std::string data_key = st.data_id.empty() ? id : st.data_id;
      auto& g = groups[data_key];
      g.data_id = data_key;
      g.total_serves += st.serves;
      g.cell_serves = cell_serves[st.cell];
      if (seen_lineups.contains(id) || seen_data.contains(data_key) || st.observers.contains(observer)) continue;
      if (config_.max_serves > 0 && st.serves >= config_.max_serves) continue;
      g.min_serves = std::min(g.min_serves, st.serves);
      std::tuple<std::size_t, std::size_t, std::string> key{st.serves, design_serves[st.design], tiebreak(id)};
      if (key < g.best_key) {
        g.best_key = key;
        g.best = id;
      }
    }
    std::vector<const Group*> ranked;
    for (const auto& [k, g] : groups)
      if (!g.best.empty()) ranked.push_back(&g);
    std::sort(ranked.begin(), ranked.end(), [&](const Group* a, const Group* b) {
      return std::make_tuple(a->min_serves, a->total_serves, a->cell_serves, tiebreak(a->data_id)) <
             std::make_tuple(b->min_serves, b->total_serves, b->cell_serves, tiebreak(b->data_id));
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ranked.size() && out.size() < size; ++i) out.push_back(ranked[i]->best);
    return out;
  }

  static nlohmann::json session_json(const Session& s) {
    std::size_t next = s.assigned_lineups.size();
    for (std::size_t i = 0; i < s.assigned_lineups.size(); ++i)
      if (!s.completed.contains(s.assigned_lineups[i])) {
        next = i;
        break;
      }
    return {{"session_id", s.session_id},
            {"observer_id", s.observer_id},
            {"assigned_lineups", s.assigned_lineups},
            {"completed", std::vector<std::string>(s.completed.begin(), s.completed.end())},
            {"next_index", next}};
  }

  std::unique_ptr<RecordStore> store_;
  ServiceConfig config_;
  mutable std::shared_mutex mutex_;
  std::string salt_;
  std::map<std::string, LineupState> lineups_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::vector<std::string>> sessions_by_observer_;
};

}  // namespace qqlineup::service

#endif  // QQLINEUP_SERVICE_STUDY_SERVICE_HPP

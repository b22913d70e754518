#pragma once

// Read-only JSON-over-HTTP facade over a solved database. Handlers are plain
// member functions returning (status, body) so they can be exercised without
// a socket; mount() wires them into an httplib::Server.
//
// Spawn sampler "mt19937_64-mod-u53": a std::mt19937_64 seeded with the
// session seed. For each spawn, draw r = gen() and pick the (r mod k)-th empty
// cell in row-major order; then draw u = (gen() >> 11) * 2^-53 and place a 4
// when u < 0.1, otherwise a 2. A new session spawns twice on the empty board.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "agesolver/analytics.hpp"
#include "agesolver/board.hpp"
#include "agesolver/error.hpp"
#include "agesolver/sha256.hpp"
#include "agesolver/solver.hpp"
#include "agesolver/store.hpp"
#include "httplib.h"
#include "json.hpp"

namespace agesolver {

inline constexpr const char* kSamplerId = "mt19937_64-mod-u53";

struct Spawned {
  int cell = 0;
  std::uint32_t value = 0;  // 2 or 4
};

class SpawnSampler {
 public:
  explicit SpawnSampler(std::uint64_t seed) : gen_(seed) {}

  /// Places one tile; the state must have an empty cell.
  std::pair<StateCode, Spawned> spawn(const Geometry& geo, StateCode s) {
    std::vector<int> empties;
    for (int i = 0; i < geo.cell_count(); ++i)
      if (nibble(s, i) == 0) empties.push_back(i);
    if (empties.empty()) throw UsageError("no empty cell to spawn into");
    const int cell = empties[std::size_t(gen_() % empties.size())];
    const double u = double(gen_() >> 11) * 0x1.0p-53;
    const unsigned e = u < SpawnModel::p4 ? 2 : 1;
    return {with_nibble(s, cell, e), Spawned{cell, std::uint32_t{1} << e}};
  }

  StateCode initial(const Geometry& geo) {
    StateCode s{0};
    s = spawn(geo, s).first;
    return spawn(geo, s).first;
  }

 private:
  std::mt19937_64 gen_;
};

/// Status code plus JSON body.
struct Reply {
  int status = 200;
  nlohmann::json body;
};

class LookupService {
 public:
  using json = nlohmann::json;
  using Clock = std::chrono::steady_clock;

  explicit LookupService(std::chrono::seconds session_ttl = std::chrono::hours(1),
                         Variant variant = Variant::standard)
      : ttl_(session_ttl), variant_(variant) {}

  /// Opens the database and makes it the one served.
  void load(const std::filesystem::path& root, std::optional<Geometry> geo = std::nullopt) {
    const Geometry g = Database::resolve_geometry(root, geo);
    auto db = std::make_shared<const Database>(root, g);
    const std::string digest = database_digest(*db);
    std::lock_guard lock(mutex_);
    db_ = std::move(db);
    digest_ = digest;
    stats_.clear();
  }

  bool loaded() const {
    std::lock_guard lock(mutex_);
    return db_ != nullptr;
  }

  // ----------------------------------------------------------- handlers

  Reply health() const {
    const auto db = database();
    if (!db) return error(409, "database not loaded");
    std::lock_guard lock(mutex_);
    return {200,
            {{"geometry", db->geometry().name()},
             {"ages_loaded", db->ages().size()},
             {"db_digest", digest_},
             {"variant", to_string(variant_)},
             {"forward_complete", db->index().forward_complete}}};
  }

  /// `board` is the text form; `code` the packed state in hex. Exactly one is used.
  Reply evaluate(const std::optional<std::string>& board,
                 const std::optional<std::string>& code) const {
    const auto db = database();
    if (!db) return error(409, "database not loaded");
    StateCode s;
    try {
      s = parse_state(db->geometry(), board, code);
    } catch (const Error& e) {
      return error(400, e.what());
    }
    try {
      return {200, evaluation(*db, s)};
    } catch (const NotFoundError& e) {
      return error(404, e.what());
    }
  }

  Reply create_session(std::optional<std::uint64_t> seed) {
    const auto db = database();
    if (!db) return error(409, "database not loaded");
    const std::uint64_t used = seed ? *seed : std::random_device{}() * 0x100000000ull + std::random_device{}();
    auto session = std::make_shared<Session>(used);
    session->state = session->sampler.initial(db->geometry());
    session->touched = Clock::now();
    std::string id;
    {
      std::lock_guard lock(mutex_);
      expire_locked();
      id = std::to_string(++next_id_);
      sessions_[id] = session;
    }
    json body = session_json(*db, id, *session);
    return {200, body};
  }

  Reply move(const std::string& id, const std::string& direction) {
    const auto db = database();
    if (!db) return error(409, "database not loaded");
    std::shared_ptr<Session> session;
    {
      std::lock_guard lock(mutex_);
      expire_locked();
      const auto it = sessions_.find(id);
      if (it == sessions_.end()) return error(404, "unknown session " + id);
      session = it->second;
    }
    const auto parsed = parse_direction(direction);
    if (!parsed) return error(400, "unknown direction '" + direction + "'");
    const Direction d = *parsed;
    std::lock_guard lock(session->mutex);
    session->touched = Clock::now();
    const Geometry& geo = db->geometry();
    const auto m = geo.apply_action(session->state, d);
    if (!m.changed) return error(422, "move " + std::string(to_string(d)) + " changes nothing");
    const auto [next, spawned] = session->sampler.spawn(geo, m.afterstate);
    session->state = next;
    session->score += m.reward;
    session->moves += 1;
    json body = session_json(*db, id, *session);
    body["reward"] = m.reward;
    body["spawned"] = {{"cell", spawned.cell},
                       {"row", spawned.cell / geo.cols()},
                       {"col", spawned.cell % geo.cols()},
                       {"value", spawned.value}};
    return {200, body};
  }

  Reply stats(std::uint64_t age) {
    const auto db = database();
    if (!db) return error(409, "database not loaded");
    {
      std::lock_guard lock(mutex_);
      if (const auto it = stats_.find(age); it != stats_.end()) return {200, it->second};
    }
    if (age < 4 || age % 2 || !has_manifest(db->root(), db->geometry(), age) ||
        db->partition(age)->set.empty())
      return error(404, "no afterstates at age " + std::to_string(age));
    auto load = [&](std::uint64_t a) {
      return AgePartition{a, a >= 4 ? db->codes(a) : std::vector<StateCode>{}};
    };
    const AgePartition cur = load(age);
    std::vector<double> values;
    if (db->has_values(variant_)) values = db->values(age, variant_)->dequantized();
    const AgeStats st = compute_age_stats(db->geometry(), cur, values, load(age - 2), load(age - 4));
    json body = stats_json(st);
    std::lock_guard lock(mutex_);
    stats_[age] = body;
    return {200, body};
  }

  std::size_t session_count() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
  }

  // ------------------------------------------------------------- wiring

  void mount(httplib::Server& server) {
    auto send = [](httplib::Response& res, const Reply& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });
    server.Get("/v1/health", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, health());
    });
    server.Get("/v1/evaluate", [this, send](const httplib::Request& req, httplib::Response& res) {
      auto param = [&](const char* k) -> std::optional<std::string> {
        if (!req.has_param(k)) return std::nullopt;
        return req.get_param_value(k);
      };
      send(res, evaluate(param("board"), param("code")));
    });
    server.Post("/v1/session", [this, send](const httplib::Request& req, httplib::Response& res) {
      std::optional<std::uint64_t> seed;
      try {
        if (!req.body.empty()) {
          const json in = json::parse(req.body);
          if (in.contains("seed") && !in["seed"].is_null()) seed = in["seed"].get<std::uint64_t>();
        }
      } catch (const json::exception& e) {
        return send(res, error(400, std::string("bad session request: ") + e.what()));
      }
      send(res, create_session(seed));
    });
    server.Post(R"(/v1/session/([^/]+)/move)",
                [this, send](const httplib::Request& req, httplib::Response& res) {
                  std::string direction;
                  try {
                    direction = json::parse(req.body).at("direction").get<std::string>();
                  } catch (const json::exception& e) {
                    return send(res, error(400, std::string("bad move request: ") + e.what()));
                  }
                  send(res, move(req.matches[1], direction));
                });
    server.Get(R"(/v1/stats/age/(\d+))", [this, send](const httplib::Request& req,
                                                      httplib::Response& res) {
      std::uint64_t age = 0;
      try {
        age = std::stoull(req.matches[1]);
      } catch (const std::exception&) {
        return send(res, error(404, "no such age"));
      }
      send(res, stats(age));
    });
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      res.set_content(json{{"error", "no route for " + req.method + " " + req.path}}.dump(),
                      "application/json");
    });
    server.set_exception_handler(
        [send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
          try {
            std::rethrow_exception(ep);
          } catch (const NotFoundError& e) {
            send(res, error(404, e.what()));
          } catch (const std::exception& e) {
            send(res, error(500, e.what()));
          }
        });
  }

  // ------------------------------------------------------------ helpers

  static json stats_json(const AgeStats& s) {
    return {{"age", s.age},
            {"state_count", s.state_count},
            {"afterstate_count", s.afterstate_count},
            {"best_afterstate_value", s.best_afterstate_value},
            {"dead_afterstate_fraction", s.dead_afterstate_fraction},
            {"mean_empty_cells", s.mean_empty_cells},
            {"mean_action_gap", s.mean_action_gap},
            {"alt_action_fraction", s.alt_action_fraction}};
  }

  static std::string hex_code(StateCode s) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(s.packed));
    return buf;
  }

  /// A state is in the database when it is an initial state or one of its
  /// spawned tiles can be removed to give a stored afterstate.
  static bool reachable(const Database& db, StateCode s) {
    const Geometry& geo = db.geometry();
    const std::uint64_t age = age_of(s);
    if (age < 4 || age % 2) return false;
    const StateCode c = geo.canonicalize(s);
    if (age <= 8) {
      const auto init = initial_layer(geo, age);
      if (std::binary_search(init.begin(), init.end(), c)) return true;
    }
    for (int i = 0; i < geo.cell_count(); ++i) {
      const unsigned e = nibble(c, i);
      if (e != 1 && e != 2) continue;
      if (db.rank(geo.canonicalize(with_nibble(c, i, 0)))) return true;
    }
    return false;
  }

  /// Same payload as /v1/evaluate for a raw (non-canonical) state.
  json evaluation(const Database& db, StateCode s) const {
    const Geometry& geo = db.geometry();
    if (!reachable(db, s))
      throw NotFoundError("state " + geo.format(s) + " is not in the database");
    const auto choice = best_action(geo, s, [&](StateCode c) { return db.value(c, variant_); });
    json actions = json::array();
    for (const auto& a : choice.actions)
      actions.push_back({{"direction", to_string(a.direction)},
                         {"reward", a.reward},
                         {"afterstate_value", a.afterstate_value},
                         {"q", a.q},
                         {"afterstate", geo.format(a.afterstate)},
                         {"afterstate_code", hex_code(a.afterstate)}});
    return {{"board", geo.format(s)},
            {"code", hex_code(s)},
            {"age", age_of(s)},
            {"terminal", choice.actions.empty()},
            {"valid_actions", actions},
            {"best", choice.best ? json(to_string(*choice.best)) : json(nullptr)},
            {"state_value", choice.state_value}};
  }

 private:
  struct Session {
    explicit Session(std::uint64_t s) : seed(s), sampler(s) {}
    std::mutex mutex;
    std::uint64_t seed;
    SpawnSampler sampler;
    StateCode state;
    std::uint64_t score = 0;
    std::uint64_t moves = 0;
    Clock::time_point touched;
  };

  static Reply error(int status, const std::string& message) {
    return {status, json{{"error", message}}};
  }

  static StateCode parse_state(const Geometry& geo, const std::optional<std::string>& board,
                               const std::optional<std::string>& code) {
    if (board.has_value() == code.has_value())
      throw UsageError("pass exactly one of board= or code=");
    if (board) {
      const StateCode s = geo.parse_board(*board);
      geo.validate(s);
      return s;
    }
    std::uint64_t packed = 0;
    const std::string& t = *code;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), packed, 16);
    if (t.empty() || ec != std::errc{} || p != t.data() + t.size())
      throw EncodingError("bad state code '" + t + "'");
    geo.validate(StateCode{packed});
    return StateCode{packed};
  }

  json session_json(const Database& db, const std::string& id, const Session& s) const {
    const Geometry& geo = db.geometry();
    json evaluation_body = nullptr;
    try {
      evaluation_body = evaluation(db, s.state);
    } catch (const NotFoundError&) {
    }
    return {{"id", id},
            {"seed", s.seed},
            {"rng", kSamplerId},
            {"board", geo.format(s.state)},
            {"code", hex_code(s.state)},
            {"score", s.score},
            {"moves", s.moves},
            {"terminal", geo.is_terminal(s.state)},
            {"evaluation", evaluation_body}};
  }

  std::shared_ptr<const Database> database() const {
    std::lock_guard lock(mutex_);
    return db_;
  }

  void expire_locked() {
    const auto now = Clock::now();
    std::erase_if(sessions_, [&](const auto& kv) {
      std::unique_lock l(kv.second->mutex, std::try_to_lock);
      return l.owns_lock() && now - kv.second->touched > ttl_;
    });
  }

  static std::string database_digest(const Database& db) {
    Sha256 h;
    auto add = [&](const std::string& s) {
      h.update({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
    };
    add(db.geometry().name() + "\n");
    for (const auto age : db.ages()) {
      const auto m = read_manifest(db.root(), db.geometry(), age);
      for (const auto& [file, digest] : m.sha256) add(std::to_string(age) + " " + file + " " + digest + "\n");
      for (const auto& [variant, info] : m.values)
        add(std::to_string(age) + " " + info.file + " " + info.sha256 + "\n");
    }
    return h.hex();
  }

  std::chrono::seconds ttl_;
  Variant variant_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Database> db_;
  std::string digest_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::uint64_t, json> stats_;
  std::uint64_t next_id_ = 0;
};

}  // namespace agesolver

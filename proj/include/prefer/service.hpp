#pragma once

// Session-oriented interaction loop over HTTP. Each session alternates
// summary -> feedback -> update, persists every transition to an append-only
// JSON-lines log, and is rebuilt by replaying that log on startup.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefer/core.hpp"
#include "prefer/preference.hpp"
#include "prefer/selection.hpp"
#include "prefer/simulation.hpp"
#include "prefer/summarizer.hpp"
#include "prefer/workspace.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that breaks Eigen kernels.
#include <httplib.h>

namespace prefer::service {

using nlohmann::json;

struct SessionConfig {
  std::vector<std::string> products;
  selection::SelectionConfig selection;
  preference::PreferenceConfig preference;
  preference::ProfileOptions profile;
  std::optional<json> oracle;  // demo mode: hidden target for live metrics
  std::uint64_t oracle_seed = 0;
};

inline json to_json(const SessionConfig& c) {
  json j{{"products", c.products},
         {"selection", prefer::to_json(c.selection)},
         {"preference", preference::to_json(c.preference)},
         {"profile",
          {{"scheme", preference::to_string(c.profile.scheme)},
           {"beta_alpha", c.profile.beta_alpha},
           {"gamma_alpha", c.profile.gamma_alpha}}},
         {"oracle_seed", c.oracle_seed}};
  if (c.oracle) j["oracle"] = *c.oracle;
  return j;
}

/// Validates a create request against the workspace. `default_oracle` is
/// the server-level demo oracle, used when the request names none.
inline SessionConfig session_config_from_json(const json& j, const Workspace& ws,
                                              const std::optional<json>& default_oracle) {
  SessionConfig c;
  try {
    require(j.is_object(), "session config must be a JSON object");
    if (j.contains("products")) c.products = j.at("products").get<std::vector<std::string>>();
    if (j.contains("selection")) c.selection = selection_from_json(j.at("selection"));
    if (j.contains("preference"))
      c.preference = preference::config_from_json(j.at("preference"), ws.K());
    if (j.contains("profile")) c.profile = profile_from_json(j.at("profile"));
    if (j.contains("oracle")) c.oracle = j.at("oracle");
    else c.oracle = default_oracle;
    c.oracle_seed = j.value("oracle_seed", c.selection.seed);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("session config: ") + e.what());
  }
  if (c.products.empty()) c.products = ws.products();
  require(!c.products.empty(), "corpus has no products");
  for (const auto& p : c.products)
    require(ws.has_product(p), "unknown product id '" + p + "'");
  c.preference.validate(ws.K());
  if (c.oracle) simulation::oracle_from_json(*c.oracle, ws.K(), c.oracle_seed);
  return c;
}

struct HistoryEntry {
  std::int64_t round = 0;
  std::string summary_id;
  double f = 0.0;
};

struct PendingSummary {
  std::string summary_id;
  std::int64_t round = 0;
  AspectVector z;
  json response;
};

struct Session {
  std::string id;
  SessionConfig config;
  preference::PreferenceState state;
  std::optional<PendingSummary> pending;
  std::vector<HistoryEntry> history;
  std::int64_t created_at = 0;
  std::optional<simulation::FeedbackOracle> oracle;
  std::mutex mu;

  const std::string& product_for(std::int64_t round) const {
    return config.products[static_cast<std::size_t>(round - 1) % config.products.size()];
  }
};

inline json state_view(const Session& s) {
  json history = json::array();
  for (const auto& h : s.history)
    history.push_back({{"round", h.round}, {"summary_id", h.summary_id}, {"f", h.f}});
  json j{{"session_id", s.id},
         {"round", s.state.round},
         {"w_hat", s.state.w_hat.vec()},
         {"baseline", s.state.baseline},
         {"pending_summary_id", s.pending ? json(s.pending->summary_id) : json(nullptr)},
         {"history", history},
         {"products", s.config.products},
         {"next_product", s.product_for(s.state.round)},
         {"created_at", s.created_at}};
  return j;
}

/// Owns the sessions and their logs. Calls for different sessions run
/// concurrently; calls for one session are serialized on its mutex.
class SessionManager {
 public:
  SessionManager(std::shared_ptr<const Workspace> ws, std::filesystem::path state_dir,
                 std::optional<json> demo_oracle = std::nullopt,
                 summarizer::TextGenerator* generator = nullptr)
      : ws_(std::move(ws)),
        dir_(std::move(state_dir)),
        demo_oracle_(std::move(demo_oracle)),
        generator_(generator) {
    require(ws_ != nullptr, "session manager needs a workspace");
    if (!dir_.empty()) {
      std::filesystem::create_directories(dir_);
      for (const auto& entry : std::filesystem::directory_iterator(dir_))
        if (entry.path().extension() == ".jsonl") replay(entry.path());
    }
  }

  std::string create_session(const json& request) {
    auto cfg = session_config_from_json(request, *ws_, demo_oracle_);
    auto s = std::make_shared<Session>();
    s->id = new_id();
    s->created_at = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    s->config = std::move(cfg);
    init(*s);
    append(*s, {{"type", "created"},
                {"session_id", s->id},
                {"created_at", s->created_at},
                {"config", to_json(s->config)}});
    std::unique_lock lock(map_mu_);
    sessions_[s->id] = s;
    return s->id;
  }

  json next_summary(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    if (s->pending) return s->pending->response;
    PendingSummary p = build_summary(*s);
    append(*s, {{"type", "summary"},
                {"summary_id", p.summary_id},
                {"round", p.round},
                {"z", p.z.vec()},
                {"response", p.response}});
    s->pending = std::move(p);
    return s->pending->response;
  }

  json submit_feedback(const std::string& id, const std::string& summary_id, double f) {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    require(std::isfinite(f) && f >= 0.0 && f <= 1.0, "feedback f must lie in [0,1]");
    if (!s->pending)
      throw Error(ErrorCode::conflict, "no pending summary; fetch one before giving feedback");
    if (s->pending->summary_id != summary_id)
      throw Error(ErrorCode::conflict, "summary '" + summary_id + "' is not the pending summary '" +
                                           s->pending->summary_id + "'");
    append(*s, {{"type", "feedback"}, {"summary_id", summary_id}, {"f", f}});
    return apply_feedback(*s, f);
  }

  json state(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    return state_view(*s);
  }

  std::vector<std::string> session_ids() const {
    std::shared_lock lock(map_mu_);
    std::vector<std::string> out;
    for (const auto& [id, _] : sessions_) out.push_back(id);
    return out;
  }

  const Workspace& workspace() const { return *ws_; }

 private:
  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(map_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::not_found, "unknown session '" + id + "'");
    return it->second;
  }

  void init(Session& s) const {
    s.state = preference::PreferenceState::initial(ws_->K(), s.config.preference);
    if (s.config.oracle)
      s.oracle = simulation::oracle_from_json(*s.config.oracle, ws_->K(), s.config.oracle_seed);
  }

  static std::string new_id() {
    static std::mutex mu;
    static std::random_device rd;
    std::lock_guard lock(mu);
    char buf[33];
    std::snprintf(buf, sizeof buf, "%08x%08x%08x%08x", rd(), rd(), rd(), rd());
    return buf;
  }

  PendingSummary build_summary(const Session& s) const {
    const std::int64_t round = s.state.round;
    const auto& product = s.product_for(round);
    const auto ev = select_evidence(*ws_, product, s.state.w_hat, s.config.selection, round,
                                    s.config.profile);
    const auto art = summarize_round(*ws_, ev, s.state.w_hat, generator_);
    PendingSummary p;
    p.summary_id = s.id + "-r" + std::to_string(round);
    p.round = round;
    p.z = ev.profile.z;
    json bins = json::object();
    for (const auto& [b, text] : art.bin_summaries) bins[summarizer::to_string(b)] = text;
    json provenance = json::object();
    for (const auto& [b, ids] : art.provenance) provenance[summarizer::to_string(b)] = ids;
    json sentences = json::array();
    for (const auto& pick : ev.selected.picks)
      sentences.push_back({{"sentence_id", pick.sentence_id},
                           {"text", ws_->text(pick.sentence_id)},
                           {"aspect", ws_->phi(pick.sentence_id).argmax()},
                           {"score", pick.marginal_score}});
    p.response = {{"summary_id", p.summary_id},
                  {"round", round},
                  {"product", product},
                  {"final", art.final_text},
                  {"draft", art.draft},
                  {"bin_summaries", bins},
                  {"provenance", provenance},
                  {"sentences", sentences},
                  {"z", p.z.vec()},
                  {"w_hat", s.state.w_hat.vec()},
                  {"g_cos", art.g_cos},
                  {"degraded", art.degraded}};
    if (s.oracle) {
      const auto w_true = s.oracle->preference(round);
      const auto a = preference::alignment_metrics(w_true, s.state.w_hat, p.z);
      p.response["metrics"] = {{"A_pref", a.a_pref}, {"A_evid", a.a_evid}};
    }
    return p;
  }

  json apply_feedback(Session& s, double f) {
    const auto& p = *s.pending;
    const auto centered = preference::center_feedback(s.state, f);
    const auto upd = preference::omd_update(s.state, centered.f_tilde, p.z);
    s.history.push_back({p.round, p.summary_id, f});
    json out{{"session_id", s.id},
             {"round", s.state.round},
             {"w_hat", s.state.w_hat.vec()},
             {"f_tilde", centered.f_tilde},
             {"baseline", s.state.baseline},
             {"eta", upd.eta},
             {"min_coord_pre", upd.min_coord_pre},
             {"min_coord_post", upd.min_coord_post}};
    if (s.oracle) {
      const auto w_true = s.oracle->preference(p.round);
      out["metrics"] = {{"A_pref", cosine(w_true.values(), s.state.w_hat.values())},
                        {"A_evid", cosine(w_true.values(), p.z.values())}};
    }
    s.pending.reset();
    return out;
  }

  std::filesystem::path log_path(const std::string& id) const { return dir_ / (id + ".jsonl"); }

  void append(const Session& s, const json& event) const {
    if (dir_.empty()) return;
    std::ofstream out(log_path(s.id), std::ios::app);
    require(out.good(), "cannot append to session log", ErrorCode::io);
    out << event.dump() << '\n';
    out.flush();
    require(out.good(), "session log write failed", ErrorCode::io);
  }

  /// A final line without its newline is an append cut short by a crash; it
  /// was never acknowledged, so it is dropped and the file truncated.
  static void drop_torn_tail(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    const std::string content((std::istreambuf_iterator<char>(in)), {});
    in.close();
    if (content.empty() || content.back() == '\n') return;
    const auto keep = content.find_last_of('\n');
    std::filesystem::resize_file(path, keep == std::string::npos ? 0 : keep + 1);
  }

  void replay(const std::filesystem::path& path) {
    drop_torn_tail(path);
    std::ifstream in(path);
    std::string line;
    std::shared_ptr<Session> s;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json ev;
      try {
        ev = json::parse(line);
      } catch (const std::exception& e) {
        throw Error(ErrorCode::parse_error,
                    path.string() + " line " + std::to_string(lineno) + ": " + e.what());
      }
      const auto type = ev.at("type").get<std::string>();
      if (type == "created") {
        s = std::make_shared<Session>();
        s->id = ev.at("session_id").get<std::string>();
        s->created_at = ev.value("created_at", std::int64_t{0});
        s->config = session_config_from_json(ev.at("config"), *ws_, std::nullopt);
        init(*s);
        continue;
      }
      require(s != nullptr, path.string() + ": event before session creation",
              ErrorCode::parse_error);
      if (type == "summary") {
        PendingSummary p;
        p.summary_id = ev.at("summary_id").get<std::string>();
        p.round = ev.at("round").get<std::int64_t>();
        p.z = AspectVector::checked(ev.at("z").get<std::vector<double>>());
        p.response = ev.at("response");
        require(p.round == s->state.round, path.string() + ": summary round out of order",
                ErrorCode::parse_error);
        s->pending = std::move(p);
      } else if (type == "feedback") {
        require(s->pending && s->pending->summary_id == ev.at("summary_id").get<std::string>(),
                path.string() + ": feedback without matching summary", ErrorCode::parse_error);
        apply_feedback(*s, ev.at("f").get<double>());
      } else {
        throw Error(ErrorCode::parse_error, path.string() + ": unknown event '" + type + "'");
      }
    }
    if (s) sessions_[s->id] = s;
  }

  std::shared_ptr<const Workspace> ws_;
  std::filesystem::path dir_;
  std::optional<json> demo_oracle_;
  summarizer::TextGenerator* generator_;
  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

// ---------------------------------------------------------------------------
// HTTP binding

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::parse_error: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::upstream: return 502;
    case ErrorCode::numerical:
    case ErrorCode::io: return 500;
  }
  return 500;
}

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Handler>
void guarded(httplib::Response& res, Handler&& handler) {
  try {
    handler();
  } catch (const Error& e) {
    send_json(res, http_status(e.code()), {{"error", to_string(e.code())}, {"message", e.what()}});
  } catch (const json::exception& e) {
    send_json(res, 400, {{"error", "invalid_argument"}, {"message", e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
  }
}

inline json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("request body is not JSON: ") + e.what());
  }
}

inline void install_routes(httplib::Server& server, SessionManager& manager) {
  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = manager.create_session(parse_body(req));
      auto body = manager.state(id);
      body["K"] = manager.workspace().K();
      send_json(res, 201, body);
    });
  });
  server.Get(R"(/sessions/([^/]+)/summary)",
             [&](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] { send_json(res, 200, manager.next_summary(req.matches[1])); });
             });
  server.Post(R"(/sessions/([^/]+)/feedback)",
              [&](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  const auto body = parse_body(req);
                  require(body.contains("summary_id") && body.at("summary_id").is_string(),
                          "feedback needs a string summary_id");
                  require(body.contains("f") && body.at("f").is_number(),
                          "feedback needs a numeric f");
                  send_json(res, 200,
                            manager.submit_feedback(req.matches[1],
                                                    body.at("summary_id").get<std::string>(),
                                                    body.at("f").get<double>()));
                });
              });
  server.Get(R"(/sessions/([^/]+)/state)",
             [&](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] { send_json(res, 200, manager.state(req.matches[1])); });
             });
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

}  // namespace prefer::service

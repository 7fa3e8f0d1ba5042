#pragma once

#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "prefer/service.hpp"
#include "prefer/simulation.hpp"

namespace prefer::testing {

/// A session service listening on an ephemeral loopback port.
class LiveService {
 public:
  explicit LiveService(service::SessionManager& manager) {
    service::install_routes(server_, manager);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveService() {
    server_.stop();
    thread_.join();
  }
  LiveService(const LiveService&) = delete;
  LiveService& operator=(const LiveService&) = delete;

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c;
  }
  int port() const { return port_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

/// Session request mirroring one simulation arm and seed.
inline nlohmann::json session_request_for(const simulation::ExperimentConfig& cfg,
                                          const Workspace& ws, simulation::Arm arm,
                                          std::uint64_t seed) {
  const auto sel = simulation::arm_selection(cfg, arm, seed);
  return {{"products", simulation::resolve_products(ws, cfg.products)},
          {"selection", to_json(sel)},
          {"preference", preference::to_json(cfg.preference)},
          {"profile",
           {{"scheme", preference::to_string(cfg.profile.scheme)},
            {"beta_alpha", cfg.profile.beta_alpha},
            {"gamma_alpha", cfg.profile.gamma_alpha}}},
          {"oracle", cfg.oracle},
          {"oracle_seed", seed}};
}

struct ReplayOutcome {
  std::vector<std::vector<double>> w_hat;  // after each round's feedback
  std::vector<double> a_pref;              // reported by the feedback response
  std::string error;                       // empty on success
};

/// Drives `rounds` summary/feedback exchanges over HTTP, answering each
/// summary with the simulation oracle evaluated on the returned profile.
inline ReplayOutcome http_oracle_replay(const LiveService& live,
                                        const simulation::ExperimentConfig& cfg,
                                        const Workspace& ws, simulation::Arm arm,
                                        std::uint64_t seed, std::int64_t rounds) {
  ReplayOutcome out;
  auto client = live.client();
  const auto oracle = simulation::oracle_from_json(cfg.oracle, ws.K(), seed);
  auto created = client.Post("/sessions", session_request_for(cfg, ws, arm, seed).dump(),
                             "application/json");
  if (!created || created->status != 201) {
    out.error = "create failed: " + (created ? created->body : std::string("no response"));
    return out;
  }
  const auto id = nlohmann::json::parse(created->body).at("session_id").get<std::string>();
  for (std::int64_t t = 1; t <= rounds; ++t) {
    auto summary = client.Get("/sessions/" + id + "/summary");
    if (!summary || summary->status != 200) {
      out.error = "summary failed at round " + std::to_string(t);
      return out;
    }
    const auto sj = nlohmann::json::parse(summary->body);
    const auto z = AspectVector::checked(sj.at("z").get<std::vector<double>>());
    const double f = simulation::oracle_feedback(oracle, sj.at("round").get<std::int64_t>(), z);
    const nlohmann::json body{{"summary_id", sj.at("summary_id")}, {"f", f}};
    auto fb = client.Post("/sessions/" + id + "/feedback", body.dump(), "application/json");
    if (!fb || fb->status != 200) {
      out.error = "feedback failed at round " + std::to_string(t) + ": " +
                  (fb ? fb->body : std::string("no response"));
      return out;
    }
    const auto fj = nlohmann::json::parse(fb->body);
    out.w_hat.push_back(fj.at("w_hat").get<std::vector<double>>());
    out.a_pref.push_back(fj.at("metrics").at("A_pref").get<double>());
  }
  return out;
}

/// Largest coordinate gap between the replayed and simulated trajectories.
inline double trajectory_gap(const ReplayOutcome& replay, const simulation::ArmRun& run) {
  double worst = replay.w_hat.size() == run.w_hat.size() ? 0.0 : INFINITY;
  for (std::size_t t = 0; t < std::min(replay.w_hat.size(), run.w_hat.size()); ++t)
    for (std::size_t k = 0; k < run.w_hat[t].size(); ++k)
      worst = std::max(worst, std::abs(replay.w_hat[t][k] - run.w_hat[t][k]));
  return worst;
}

}  // namespace prefer::testing

#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "prefer/service.hpp"
#include "service_harness.hpp"
#include "test_support.hpp"

using namespace prefer;
using namespace prefer::service;
using prefer::testing::LiveService;

namespace {

simulation::ExperimentConfig stationary() {
  auto cfg = simulation::load_experiment(std::string(PREFER_SOURCE_DIR) +
                                         "/configs/stationary.json");
  cfg.output_dir.clear();
  return cfg;
}

std::shared_ptr<const Workspace> shared_workspace() {
  static const auto ws = std::make_shared<const Workspace>(simulation::build_workspace(stationary()));
  return ws;
}

const json kDemoOracle = {{"gamma", 8}, {"sigma", 0.0}, {"w_true", {{"one_hot", 6}}}};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::io;
}

struct TempDir {
  std::filesystem::path path = prefer::testing::temp_dir("service");
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

// ---------------------------------------------------------------------------
// Manager semantics

TEST(SessionManager, CreateSummaryFeedbackCycle) {
  SessionManager m(shared_workspace(), {}, kDemoOracle);
  const auto id = m.create_session(json::object());
  EXPECT_EQ(id.size(), 32u);
  const auto st = m.state(id);
  EXPECT_EQ(st.at("round"), 1);
  EXPECT_EQ(st.at("pending_summary_id"), nullptr);
  EXPECT_EQ(st.at("products").size(), 3u);

  const auto s1 = m.next_summary(id);
  EXPECT_EQ(s1.at("summary_id"), id + "-r1");
  EXPECT_EQ(s1.at("round"), 1);
  EXPECT_FALSE(s1.at("final").get<std::string>().empty());
  EXPECT_EQ(s1.at("sentences").size(), 8u);
  EXPECT_TRUE(s1.contains("metrics"));
  EXPECT_EQ(m.next_summary(id), s1);  // idempotent while pending

  const auto fb = m.submit_feedback(id, s1.at("summary_id"), 0.9);
  EXPECT_EQ(fb.at("round"), 2);
  EXPECT_NEAR(fb.at("f_tilde").get<double>(), 0.4, 1e-15);
  EXPECT_NEAR(fb.at("baseline").get<double>(), 0.54, 1e-15);
  const auto after = m.state(id);
  EXPECT_EQ(after.at("history").size(), 1u);
  EXPECT_EQ(after.at("w_hat"), fb.at("w_hat"));
  EXPECT_EQ(m.next_summary(id).at("summary_id"), id + "-r2");
}

TEST(SessionManager, ErrorCodes) {
  SessionManager m(shared_workspace(), {});
  EXPECT_EQ(code_of([&] { m.state("nope"); }), ErrorCode::not_found);
  EXPECT_EQ(code_of([&] { m.create_session({{"products", {"zzz"}}}); }),
            ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { m.create_session({{"selection", {{"lambda", 3}}}}); }),
            ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { m.create_session(json::array()); }), ErrorCode::invalid_argument);
  const auto id = m.create_session(json::object());
  EXPECT_EQ(code_of([&] { m.submit_feedback(id, id + "-r1", 0.5); }), ErrorCode::conflict);
  const auto s = m.next_summary(id);
  EXPECT_EQ(code_of([&] { m.submit_feedback(id, s.at("summary_id"), 1.5); }),
            ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { m.submit_feedback(id, "other", 0.5); }), ErrorCode::conflict);
  m.submit_feedback(id, s.at("summary_id"), 0.5);
  EXPECT_EQ(code_of([&] { m.submit_feedback(id, s.at("summary_id"), 0.5); }),
            ErrorCode::conflict);
  EXPECT_FALSE(s.contains("metrics"));
}

TEST(SessionManager, ProductsRotate) {
  SessionManager m(shared_workspace(), {});
  const auto products = shared_workspace()->products();
  const auto id = m.create_session({{"products", {products[2], products[0]}}});
  for (int t = 0; t < 4; ++t) {
    const auto s = m.next_summary(id);
    EXPECT_EQ(s.at("product"), t % 2 == 0 ? products[2] : products[0]);
    m.submit_feedback(id, s.at("summary_id"), 0.5);
  }
}

TEST(SessionManager, ConcurrentDuplicateFeedbackAppliesOnce) {
  SessionManager m(shared_workspace(), {});
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(m.create_session(json::object()));
  std::atomic<int> accepted{0}, rejected{0};
  std::vector<std::thread> threads;
  for (const auto& id : ids) {
    const auto sid = m.next_summary(id).at("summary_id").get<std::string>();
    for (int k = 0; k < 8; ++k)
      threads.emplace_back([&, id, sid] {
        try {
          m.submit_feedback(id, sid, 0.8);
          ++accepted;
        } catch (const Error& e) {
          if (e.code() == ErrorCode::conflict) ++rejected;
        }
      });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(accepted, 4);
  EXPECT_EQ(rejected, 28);
  for (const auto& id : ids) EXPECT_EQ(m.state(id).at("round"), 2);
}

// ---------------------------------------------------------------------------
// Persistence

TEST(SessionPersistence, ReplayRestoresStateAndPendingSummary) {
  TempDir dir;
  std::string id;
  json pending, continued;
  {
    SessionManager a(shared_workspace(), dir.path);
    id = a.create_session({{"selection", {{"mode", "gumbel"}, {"seed", 3}}}});
    for (double f : {0.9, 0.2, 0.7}) {
      const auto s = a.next_summary(id);
      a.submit_feedback(id, s.at("summary_id"), f);
    }
    pending = a.next_summary(id);
  }
  SessionManager b(shared_workspace(), dir.path);
  ASSERT_EQ(b.session_ids(), std::vector<std::string>{id});
  const auto st = b.state(id);
  EXPECT_EQ(st.at("round"), 4);
  EXPECT_EQ(st.at("history").size(), 3u);
  EXPECT_EQ(b.next_summary(id), pending);
  const auto fb = b.submit_feedback(id, pending.at("summary_id"), 0.6);

  // Same sequence without a restart.
  SessionManager c(shared_workspace(), {});
  const auto id2 = c.create_session({{"selection", {{"mode", "gumbel"}, {"seed", 3}}}});
  for (double f : {0.9, 0.2, 0.7, 0.6}) {
    const auto s = c.next_summary(id2);
    continued = c.submit_feedback(id2, s.at("summary_id"), f);
  }
  EXPECT_EQ(fb.at("w_hat"), continued.at("w_hat"));
}

TEST(SessionPersistence, TornFinalLineIsDropped) {
  TempDir dir;
  std::string id;
  {
    SessionManager a(shared_workspace(), dir.path);
    id = a.create_session(json::object());
    const auto s = a.next_summary(id);
    a.submit_feedback(id, s.at("summary_id"), 0.9);
  }
  const auto log = dir.path / (id + ".jsonl");
  {
    std::ofstream out(log, std::ios::app);
    out << R"({"type":"summary","summary_id":")";  // crash mid-append
  }
  SessionManager b(shared_workspace(), dir.path);
  EXPECT_EQ(b.state(id).at("round"), 2);
  const auto s = b.next_summary(id);
  b.submit_feedback(id, s.at("summary_id"), 0.1);
  SessionManager c(shared_workspace(), dir.path);
  EXPECT_EQ(c.state(id).at("round"), 3);
}

TEST(SessionPersistence, CorruptCompleteLineIsParseError) {
  TempDir dir;
  {
    std::ofstream out(dir.path / "bad.jsonl");
    out << "{not json}\n";
  }
  EXPECT_EQ(code_of([&] { SessionManager m(shared_workspace(), dir.path); }),
            ErrorCode::parse_error);
}

// ---------------------------------------------------------------------------
// HTTP

TEST(HttpApi, RoutesAndStatusCodes) {
  SessionManager m(shared_workspace(), {}, kDemoOracle);
  LiveService live(m);
  auto c = live.client();

  auto created = c.Post("/sessions", "{}", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  EXPECT_EQ(created->get_header_value("Access-Control-Allow-Origin"), "*");
  const auto cj = json::parse(created->body);
  EXPECT_EQ(cj.at("K"), 10);
  const auto id = cj.at("session_id").get<std::string>();

  auto summary = c.Get("/sessions/" + id + "/summary");
  ASSERT_EQ(summary->status, 200);
  const auto sj = json::parse(summary->body);

  auto post_fb = [&](const json& body) {
    return c.Post("/sessions/" + id + "/feedback", body.dump(), "application/json");
  };
  EXPECT_EQ(post_fb({{"summary_id", sj.at("summary_id")}, {"f", 1.5}})->status, 400);
  EXPECT_EQ(post_fb({{"summary_id", sj.at("summary_id")}})->status, 400);
  EXPECT_EQ(post_fb({{"f", 0.5}})->status, 400);
  EXPECT_EQ(c.Post("/sessions/" + id + "/feedback", "{oops", "application/json")->status, 400);
  auto ok = post_fb({{"summary_id", sj.at("summary_id")}, {"f", 0.9}});
  ASSERT_EQ(ok->status, 200);
  EXPECT_TRUE(json::parse(ok->body).contains("metrics"));
  auto dup = post_fb({{"summary_id", sj.at("summary_id")}, {"f", 0.9}});
  EXPECT_EQ(dup->status, 409);
  EXPECT_EQ(json::parse(dup->body).at("error"), "conflict");

  auto state = c.Get("/sessions/" + id + "/state");
  ASSERT_EQ(state->status, 200);
  EXPECT_EQ(json::parse(state->body).at("round"), 2);
  EXPECT_EQ(c.Get("/sessions/missing/state")->status, 404);
  EXPECT_EQ(c.Get("/sessions/missing/summary")->status, 404);
  EXPECT_EQ(c.Post("/sessions", R"({"products":["zzz"]})", "application/json")->status, 400);

  auto pre = c.Options("/sessions");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  EXPECT_NE(pre->get_header_value("Access-Control-Allow-Methods").find("POST"),
            std::string::npos);
}

TEST(HttpApi, OracleSessionMatchesSimulation) {
  auto cfg = stationary();
  cfg.rounds = 50;
  cfg.seeds = {3};
  cfg.arms = {simulation::Arm::prefer_gumbel, simulation::Arm::prefer_mmr};
  const auto ws = shared_workspace();
  const auto result = simulation::run_experiment(*ws, cfg);
  SessionManager m(ws, {});
  LiveService live(m);
  for (auto arm : cfg.arms) {
    const auto replay = prefer::testing::http_oracle_replay(live, cfg, *ws, arm, 3, 50);
    ASSERT_TRUE(replay.error.empty()) << replay.error;
    const auto& run = result.find(arm, 3);
    EXPECT_LE(prefer::testing::trajectory_gap(replay, run), 1e-12);
    for (std::size_t t = 0; t < run.rows.size(); ++t)
      EXPECT_NEAR(replay.a_pref[t], run.rows[t].a_pref, 1e-12);
  }
}

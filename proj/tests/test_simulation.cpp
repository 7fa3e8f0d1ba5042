#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "prefer/simulation.hpp"
#include "test_support.hpp"

using namespace prefer;
using namespace prefer::simulation;

namespace {

std::string config_path(const std::string& name) {
  return std::string(PREFER_SOURCE_DIR) + "/configs/" + name;
}

/// Stationary acceptance config, shortened where a test does not need the
/// full horizon.
ExperimentConfig stationary(std::int64_t rounds = 100) {
  auto cfg = load_experiment(config_path("stationary.json"));
  cfg.rounds = rounds;
  cfg.output_dir.clear();
  return cfg;
}

const Workspace& shared_workspace() {
  static const Workspace ws = build_workspace(stationary());
  return ws;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Oracle

TEST(Oracle, PerfectAlignmentGammaOne) {
  FeedbackOracle o;
  o.schedule = DriftSchedule::stationary(AspectVector::one_hot(10, 3));
  o.gamma = 1.0;
  o.sigma = 0.0;
  const double f = oracle_feedback(o, 1, AspectVector::one_hot(10, 3));
  EXPECT_NEAR(f, 1.0 / (1.0 + std::exp(-0.9)), 1e-15);
  EXPECT_NEAR(f, 0.71095, 1e-5);
}

TEST(Oracle, ChanceLevelGivesHalf) {
  FeedbackOracle o;
  o.schedule = DriftSchedule::stationary(AspectVector::one_hot(4, 0));
  o.sigma = 0.0;
  EXPECT_DOUBLE_EQ(oracle_feedback(o, 5, AspectVector::uniform(4)), 0.5);
}

TEST(Oracle, SteepLogisticApproachesOne) {
  FeedbackOracle o;
  o.schedule = DriftSchedule::stationary(AspectVector::one_hot(4, 0));
  o.gamma = 200.0;
  o.sigma = 0.0;
  EXPECT_GT(oracle_feedback(o, 1, AspectVector::one_hot(4, 0)), 1.0 - 1e-12);
}

TEST(OracleProperty, FeedbackInsideOpenInterval) {
  std::mt19937_64 gen(51);
  FeedbackOracle o;
  o.schedule = DriftSchedule::stationary(AspectVector::one_hot(6, 2));
  o.sigma = 0.3;
  for (int t = 1; t <= 2000; ++t) {
    const double f = oracle_feedback(o, t, prefer::testing::random_simplex(gen, 6));
    EXPECT_GT(f, 0.0);
    EXPECT_LT(f, 1.0);
  }
}

TEST(Oracle, NoiseIsReplayable) {
  FeedbackOracle o;
  o.schedule = DriftSchedule::stationary(AspectVector::one_hot(3, 0));
  o.seed = 4;
  const auto z = AspectVector::checked({0.2, 0.3, 0.5});
  EXPECT_EQ(oracle_feedback(o, 9, z), oracle_feedback(o, 9, z));
  o.seed = 5;
  FeedbackOracle other = o;
  other.seed = 6;
  EXPECT_NE(oracle_feedback(o, 9, z), oracle_feedback(other, 9, z));
}

TEST(Drift, LinearInterpolationInsideWindow) {
  DriftSchedule s{AspectVector::one_hot(10, 6), AspectVector::one_hot(10, 5), 80, 120};
  EXPECT_EQ(drift_preference(s, 10), s.w_start);
  EXPECT_EQ(drift_preference(s, 80), s.w_start);
  EXPECT_EQ(drift_preference(s, 150), s.w_end);
  const auto mid = drift_preference(s, 100);
  EXPECT_DOUBLE_EQ(mid[6], 0.5);
  EXPECT_DOUBLE_EQ(mid[5], 0.5);
}

TEST(Drift, InvertedWindowRejected) {
  EXPECT_THROW(oracle_from_json({{"w_true", {{"one_hot", 1}}},
                                 {"drift", {{"w_end", {{"one_hot", 2}}}, {"t_begin", 9},
                                            {"t_end", 3}}}},
                                4, 0),
               Error);
}

// ---------------------------------------------------------------------------
// Round loop

TEST(RunArm, ZeroCenteredFeedbackKeepsUniform) {
  auto cfg = stationary(1);
  cfg.oracle = {{"gamma", 8}, {"sigma", 0.0}, {"w_true", "uniform"}};
  const auto& ws = shared_workspace();
  const auto run = run_arm(ws, cfg, ws.products(), Arm::prefer_gumbel, 1);
  ASSERT_EQ(run.rows.size(), 1u);
  EXPECT_NEAR(run.rows[0].f_tilde, 0.0, 1e-15);
  for (double v : run.w_hat.back().values()) EXPECT_NEAR(v, 1.0 / static_cast<double>(ws.K()), 1e-15);
}

TEST(RunArm, StaticArmNeverMoves) {
  const auto& ws = shared_workspace();
  const auto cfg = stationary(30);
  for (Arm arm : {Arm::static_mmr, Arm::static_gumbel}) {
    const auto run = run_arm(ws, cfg, ws.products(), arm, 3);
    for (const auto& w : run.w_hat) EXPECT_EQ(w, AspectVector::uniform(ws.K()));
  }
}

TEST(RunArm, NoiselessOracleConvergesOnEverySeed) {
  auto cfg = stationary(100);
  cfg.oracle["sigma"] = 0.0;
  const auto& ws = shared_workspace();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto run = run_arm(ws, cfg, ws.products(), Arm::prefer_gumbel, seed);
    EXPECT_GE(run.rows.back().a_pref, 0.9) << "seed " << seed;
  }
}

TEST(RunArm, RowsAreInternallyConsistent) {
  const auto& ws = shared_workspace();
  const auto cfg = stationary(40);
  const auto run = run_arm(ws, cfg, ws.products(), Arm::prefer_mmr, 2);
  double cum = 0.0;
  for (const auto& r : run.rows) {
    cum += r.loss - r.loss_comparator;
    EXPECT_NEAR(r.regret_cum, cum, 1e-12);
    EXPECT_NEAR(r.regret_avg, cum / static_cast<double>(r.round), 1e-12);
    EXPECT_NEAR(r.f_tilde, std::clamp(r.f - r.b, -1.0, 1.0), 1e-15);
    EXPECT_EQ(r.v_t, 0.0);
  }
}

TEST(RunExperiment, UnknownProductFailsBeforeRunning) {
  auto cfg = stationary(5);
  cfg.products = {"no-such-product"};
  EXPECT_THROW(run_experiment(shared_workspace(), cfg), Error);
}

TEST(RunExperiment, ByteIdenticalOutputsAcrossRuns) {
  auto cfg = stationary(25);
  cfg.seeds = {1, 2};
  const auto dir_a = prefer::testing::temp_dir("sim_a");
  const auto dir_b = prefer::testing::temp_dir("sim_b");
  cfg.threads = 4;
  const auto files_a = write_results(run_experiment(shared_workspace(), cfg), dir_a.string());
  cfg.threads = 1;
  const auto files_b = write_results(run_experiment(shared_workspace(), cfg), dir_b.string());
  ASSERT_EQ(files_a.size(), files_b.size());
  EXPECT_EQ(files_a.size(), 4u * 2u + 1u);
  for (std::size_t i = 0; i < files_a.size(); ++i) {
    const auto name = std::filesystem::path(files_a[i]).filename();
    EXPECT_EQ(slurp(dir_a / name), slurp(dir_b / name)) << name;
  }
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST(RunExperiment, AggregateMatchesPerSeedMeans) {
  auto cfg = stationary(10);
  cfg.seeds = {4, 5, 6};
  cfg.arms = {Arm::prefer_gumbel};
  const auto result = run_experiment(shared_workspace(), cfg);
  std::ostringstream agg;
  write_aggregate_csv(agg, result);
  std::istringstream in(agg.str());
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  double expected = 0.0;
  for (auto s : cfg.seeds) expected += result.find(Arm::prefer_gumbel, s).rows[0].a_pref / 3.0;
  // round,arm,seeds, then 3 columns per metric; A_pref is the 9th metric.
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
  EXPECT_EQ(cells[1], "prefer-gumbel");
  EXPECT_EQ(cells[2], "3");
  EXPECT_NEAR(std::stod(cells[3 + 8 * 3]), expected, 1e-15);
}

TEST(ExperimentConfig, RelativeOutputResolvesAgainstConfigDir) {
  const auto cfg = load_experiment(config_path("stationary.json"));
  EXPECT_EQ(std::filesystem::path(cfg.output_dir).lexically_normal(),
            (std::filesystem::path(PREFER_SOURCE_DIR) / "results/stationary").lexically_normal());
}

TEST(ExperimentConfig, MissingDataSourceIsError) {
  EXPECT_THROW(experiment_from_json({{"rounds", 5}}), Error);
  EXPECT_THROW(experiment_from_json({{"rounds", 0}, {"synthetic", nlohmann::json::object()}}),
               Error);
}

// ---------------------------------------------------------------------------
// Profile heterogeneity

TEST(CompareProfiles, IdenticalProfilesAgree) {
  const auto& ws = shared_workspace();
  selection::SelectionConfig sel;
  const auto w = AspectVector::one_hot(ws.K(), 1);
  const auto rep = compare_profiles(ws, ws.products().front(), {w, w}, sel);
  EXPECT_DOUBLE_EQ(rep.jaccard[0][1], 1.0);
  EXPECT_EQ(rep.profiles[0].sentence_ids, rep.profiles[1].sentence_ids);
}

TEST(CompareProfiles, OrthogonalProfilesOnPureCorpusAreDisjoint) {
  const auto& base = shared_workspace();
  auto features = base.features();
  for (auto& phi : features.phi) phi = AspectVector::one_hot(base.K(), phi.argmax());
  const Workspace ws(base.tables(), base.model(), features);
  selection::SelectionConfig sel;
  const auto product = ws.products().front();
  const auto e0 = AspectVector::one_hot(ws.K(), 0);
  const auto e2 = AspectVector::one_hot(ws.K(), 2);
  const auto rep = compare_profiles(ws, product, {e0, e2}, sel);
  EXPECT_EQ(rep.jaccard[0][1], 0.0);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& target = i == 0 ? e0 : e2;
    EXPECT_EQ(rep.profiles[i].sentence_ids,
              oracle::brute_force_mmr(ws.candidates(product), target.vec(), sel.lambda,
                                      sel.max_sentences));
    for (auto id : rep.profiles[i].sentence_ids) EXPECT_EQ(ws.phi(id), target);
  }
}

TEST(CompareProfiles, JaccardHelper) {
  EXPECT_DOUBLE_EQ(jaccard({1, 2, 3}, {2, 3, 4}), 0.5);
  EXPECT_DOUBLE_EQ(jaccard({}, {}), 1.0);
}

TEST(Synthetic, CorpusShapeAndDeterminism) {
  SyntheticSpec spec;
  spec.products = 2;
  spec.sentences_per_product = 50;
  const auto a = make_synthetic_corpus(spec);
  const auto b = make_synthetic_corpus(spec);
  EXPECT_EQ(a.tables, b.tables);
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_EQ(a.tables.sentences.size(), 100u);
  EXPECT_EQ(a.tables.product_index.size(), 2u);
  for (Eigen::Index i = 0; i < a.embeddings.rows(); ++i)
    EXPECT_NEAR(a.embeddings.row(i).norm(), 1.0, 1e-12);
}

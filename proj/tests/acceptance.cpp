// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "prefer/simulation.hpp"
#include "service_harness.hpp"
#include "test_support.hpp"

using namespace prefer;
using prefer::testing::random_candidates;
using prefer::testing::random_simplex;
using simulation::Arm;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Verdict()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!v.pass) ++failures;
  std::printf("%s  %-34s %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str(),
              secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

simulation::ExperimentConfig config(const std::string& name) {
  auto cfg = simulation::load_experiment(std::string(PREFER_SOURCE_DIR) + "/configs/" + name);
  cfg.output_dir.clear();
  return cfg;
}

/// Seed-mean of a row field per round for one arm.
std::vector<double> seed_mean(const simulation::ExperimentResult& r, Arm arm,
                              double simulation::RoundRow::*field) {
  std::vector<double> mean;
  int n = 0;
  for (const auto& run : r.runs) {
    if (run.arm != arm) continue;
    if (mean.empty()) mean.assign(run.rows.size(), 0.0);
    for (std::size_t t = 0; t < run.rows.size(); ++t) mean[t] += run.rows[t].*field;
    ++n;
  }
  for (double& v : mean) v /= n;
  return mean;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const Arm kOnline[] = {Arm::prefer_mmr, Arm::prefer_gumbel};
const Arm kStatic[] = {Arm::static_mmr, Arm::static_gumbel};

}  // namespace

int main() {
  const auto stationary_cfg = config("stationary.json");
  const auto drift_cfg = config("drift.json");
  const auto ws = std::make_shared<const Workspace>(simulation::build_workspace(stationary_cfg));
  const auto stationary = simulation::run_experiment(*ws, stationary_cfg);
  const auto drift = simulation::run_experiment(*ws, drift_cfg);

  report("omd-closed-form-vs-prox", [] {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 gen(101);
    std::uniform_real_distribution<double> f_dist(-1.0, 1.0), eta_dist(0.01, 2.0);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t k = 2 + trial % 4;
      const auto w = random_simplex(gen, k, 0.02);
      const auto z = random_simplex(gen, k);
      const double f = f_dist(gen), eta = eta_dist(gen);
      const auto closed = preference::exponentiated_gradient(w, eta, f, z);
      const auto prox = oracle::kl_prox(w.vec(), preference::surrogate_gradient(f, z), eta);
      for (std::size_t i = 0; i < k; ++i) worst = std::max(worst, std::abs(closed[i] - prox[i]));
    }
    const double secs = elapsed_since(t0);
    return Verdict{worst <= 1e-6 && secs < 30.0,
                   fmt("1000 tuples, max gap %.2e", worst)};
  });

  report("gumbel-matches-softmax", [] {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 gen(102);
    std::normal_distribution<double> score_dist(0.0, 1.0);
    std::uniform_real_distribution<double> beta_dist(0.5, 8.0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 2 + trial % 9;
      std::vector<double> scores(n);
      std::vector<std::int64_t> ids(n);
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = score_dist(gen);
        ids[i] = static_cast<std::int64_t>(7 * i + 1);
      }
      const double beta = beta_dist(gen);
      const int draws = 100000;
      std::vector<double> freq(n, 0.0);
      for (int t = 0; t < draws; ++t)
        freq[selection::gumbel_pick(scores, ids, beta, 1000 + trial, t, 0)] += 1.0 / draws;
      worst = std::max(worst, oracle::total_variation(freq, oracle::softmax(scores, beta)));
    }
    const double secs = elapsed_since(t0);
    return Verdict{worst < 0.01 && secs < 60.0,
                   fmt("20 score vectors x 1e5 draws, max TV %.4f", worst)};
  });

  report("mmr-cache-vs-recompute", [] {
    std::mt19937_64 gen(103);
    std::uniform_int_distribution<int> n_dist(1, 50), k_dist(1, 10), dim_dist(2, 12);
    std::uniform_real_distribution<double> lambda_dist(0.0, 1.0);
    int mismatches = 0;
    for (int trial = 0; trial < 500; ++trial) {
      const auto c = random_candidates(gen, n_dist(gen), 6, dim_dist(gen), trial % 2 == 0);
      const auto w = random_simplex(gen, 6);
      selection::SelectionConfig cfg;
      cfg.lambda = lambda_dist(gen);
      cfg.max_sentences = k_dist(gen);
      if (selection::select_mmr(c, w, cfg).ids() !=
          oracle::brute_force_mmr(c, w.vec(), cfg.lambda, cfg.max_sentences))
        ++mismatches;
    }
    return Verdict{mismatches == 0, fmt("500 instances, %.0f mismatches", mismatches)};
  });

  report("submodularity", [] {
    std::mt19937_64 gen(104);
    std::uniform_real_distribution<double> lambda_dist(0.0, 1.0);
    long comparisons = 0, violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t n = 2 + trial % 7;
      const auto c = random_candidates(gen, n, 5, 6, true);
      const auto w = random_simplex(gen, 5);
      std::vector<double> rel;
      for (const auto& x : c) rel.push_back(selection::relevance(w, x.phi));
      const auto check =
          oracle::check_submodularity(rel, oracle::similarity_matrix(c), lambda_dist(gen));
      comparisons += check.comparisons;
      violations += check.objective_violations + check.redundancy_violations;
    }
    return Verdict{violations == 0,
                   fmt("1000 instances, %.0f comparisons, %.0f violations",
                       static_cast<double>(comparisons), static_cast<double>(violations))};
  });

  report("regret-below-bound", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto timed = simulation::run_experiment(*ws, stationary_cfg);
    const double secs = elapsed_since(t0);
    int above = 0;
    double worst_final_ratio = 0.0;
    for (const auto& run : timed.runs) {
      if (!simulation::is_online(run.arm)) continue;
      for (const auto& r : run.rows)
        if (r.regret_avg > r.bound_avg) ++above;
      const auto& last = run.rows.back();
      worst_final_ratio = std::max(worst_final_ratio, last.regret_avg / last.bound_avg);
    }
    return Verdict{above == 0 && worst_final_ratio < 0.5 && secs < 120.0,
                   fmt("%.0f rounds above bound, worst final regret/bound %.3f", above,
                       worst_final_ratio)};
  });

  report("static-bound-value", [&] {
    preference::BoundParams p = simulation::bound_params(stationary_cfg.preference, ws->K());
    const double total = preference::static_bound(p, 100);
    const bool ok = std::abs(total - 61.0) <= 1e-2 * 61.0 && std::abs(total / 100.0 - 0.610) <= 1e-2;
    return Verdict{ok, fmt("T=100: %.3f total, %.4f average", total, total / 100.0)};
  });

  report("convergence-separation", [&] {
    double online_min = 1.0, static_max = 0.0;
    std::string detail;
    for (Arm a : kOnline) {
      const double v = seed_mean(stationary, a, &simulation::RoundRow::a_pref).back();
      online_min = std::min(online_min, v);
      detail += std::string(simulation::to_string(a)) + fmt(" %.3f ", v);
    }
    for (Arm a : kStatic) {
      const double v = seed_mean(stationary, a, &simulation::RoundRow::a_pref).back();
      static_max = std::max(static_max, v);
      detail += std::string(simulation::to_string(a)) + fmt(" %.3f ", v);
    }
    return Verdict{online_min - static_max >= 0.2 && online_min >= 0.9,
                   "final A_pref " + detail};
  });

  report("drift-path-length", [&] {
    double worst = 0.0;
    for (const auto& run : drift.runs) worst = std::max(worst, std::abs(run.rows.back().v_t - 2.0));
    return Verdict{worst <= 1e-12, fmt("max |V_T - 2| %.2e", worst)};
  });

  const auto begin = drift_cfg.oracle.at("drift").at("t_begin").get<std::size_t>();
  const auto end = drift_cfg.oracle.at("drift").at("t_end").get<std::size_t>();

  report("drift-dip", [&] {
    const auto a = seed_mean(drift, Arm::prefer_gumbel, &simulation::RoundRow::a_pref);
    const double before = a[begin - 2];
    const double low = *std::min_element(a.begin() + static_cast<long>(begin) - 1,
                                         a.begin() + static_cast<long>(end));
    return Verdict{low < before - 0.2,
                   fmt("prefer-gumbel A_pref %.3f before, %.3f min in window", before, low)};
  });

  report("drift-recovery", [&] {
    const double final_a = seed_mean(drift, Arm::prefer_gumbel, &simulation::RoundRow::a_pref).back();
    return Verdict{final_a >= 0.8, fmt("prefer-gumbel final A_pref %.3f (need 0.8)", final_a)};
  });

  report("drift-regret-shape", [&] {
    const auto r = seed_mean(drift, Arm::prefer_gumbel, &simulation::RoundRow::regret_avg);
    const double in_min = *std::min_element(r.begin() + static_cast<long>(begin) - 1,
                                            r.begin() + static_cast<long>(end));
    const double at_end = r[end - 1];
    const double after_max = *std::max_element(r.begin() + static_cast<long>(end) - 1, r.end());
    const bool rises = at_end > in_min;
    const bool falls = r.back() < after_max;
    return Verdict{rises && falls, fmt("window min %.4f, at t_end %.4f, later max %.4f, final %.4f",
                                       in_min, at_end, after_max, r.back())};
  });

  report("simplex-floor", [&] {
    double low = 1.0;
    for (const auto* res : {&stationary, &drift})
      for (const auto& run : res->runs)
        if (simulation::is_online(run.arm))
          for (const auto& r : run.rows) low = std::min({low, r.min_coord_pre, r.min_coord_post});
    return Verdict{low > 1e-4, fmt("min coordinate %.5f", low)};
  });

  report("tau-calibration", [&] {
    const auto& model = ws->model();
    const auto& f = ws->features();
    std::vector<double> gaps;
    double ratio_err = 0.0, row_err = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double gap = aspects::nearest_gap(model.centroids, f.reduced[i]);
      gaps.push_back(gap);
      auto p = f.phi[i].vec();
      double sum = 0.0;
      for (double v : p) sum += v;
      row_err = std::max(row_err, std::abs(sum - 1.0));
      std::sort(p.rbegin(), p.rend());
      if (gap > 0.0)
        ratio_err = std::max(ratio_err, std::abs(std::log(p[0] / p[1]) - model.tau * gap));
    }
    const double r = stationary_cfg.discovery.r;
    const double median_ratio = std::exp(model.tau * oracle::quantile7(gaps, 0.5));
    const bool ok = std::abs(median_ratio - r) <= 1e-6 && row_err <= 1e-9 && ratio_err <= 1e-9;
    return Verdict{ok, fmt("median-gap ratio %.9f (r %.0f), max row-sum error %.1e, "
                           "max log-ratio error %.1e",
                           median_ratio, r, row_err, ratio_err)};
  });

  report("deterministic-output", [&] {
    const auto dir = prefer::testing::temp_dir("acceptance");
    auto one = stationary_cfg;
    one.threads = 1;
    auto many = stationary_cfg;
    many.threads = 8;
    const auto a = simulation::write_results(simulation::run_experiment(*ws, one), (dir / "a").string());
    const auto b = simulation::write_results(simulation::run_experiment(*ws, many), (dir / "b").string());
    int differing = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (i >= b.size() || slurp(a[i]) != slurp(b[i]) || slurp(a[i]).empty()) ++differing;
    std::filesystem::remove_all(dir);
    return Verdict{differing == 0 && a.size() == b.size(),
                   fmt("%.0f files, %.0f differ", static_cast<double>(a.size()), differing)};
  });

  report("http-replay-matches-simulation", [&] {
    service::SessionManager manager(ws, {});
    prefer::testing::LiveService live(manager);
    double worst = 0.0;
    for (Arm arm : kOnline)
      for (std::uint64_t seed : {1ULL, 2ULL}) {
        const auto replay = prefer::testing::http_oracle_replay(live, stationary_cfg, *ws, arm,
                                                                seed, stationary_cfg.rounds);
        if (!replay.error.empty()) return Verdict{false, replay.error};
        const auto& run = stationary.find(arm, seed);
        worst = std::max(worst, prefer::testing::trajectory_gap(replay, run));
        for (std::size_t t = 0; t < run.rows.size(); ++t)
          worst = std::max(worst, std::abs(replay.a_pref[t] - run.rows[t].a_pref));
      }
    return Verdict{worst <= 1e-12, fmt("2 arms x 2 seeds x 100 rounds, max gap %.2e", worst)};
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}

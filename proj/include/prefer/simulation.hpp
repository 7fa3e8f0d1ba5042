#pragma once

// Controlled experiments: a synthetic feedback oracle with an optional linear
// drift of the hidden preference, the round loop over products and seeds for
// the four static/online x MMR/Gumbel arms, CSV emission, and the profile
// heterogeneity comparison.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "prefer/aspect_space.hpp"
#include "prefer/core.hpp"
#include "prefer/corpus.hpp"
#include "prefer/preference.hpp"
#include "prefer/selection.hpp"
#include "prefer/summarizer.hpp"
#include "prefer/workspace.hpp"

namespace prefer::simulation {

// ---------------------------------------------------------------------------
// Oracle

struct DriftSchedule {
  AspectVector w_start;
  AspectVector w_end;
  std::int64_t t_begin = 0;
  std::int64_t t_end = 0;

  static DriftSchedule stationary(AspectVector w) { return {w, w, 0, 0}; }

  void validate() const {
    require(w_start.size() == w_end.size() && w_start.size() > 0,
            "drift endpoints must share a dimension");
    require(t_begin <= t_end, "drift window must satisfy t_begin <= t_end");
  }

  /// 0 before the window, 1 after it, linear inside.
  double rho(std::int64_t t) const {
    if (t <= t_begin) return t_begin == t_end && t == t_end ? 1.0 : 0.0;
    if (t >= t_end) return 1.0;
    return static_cast<double>(t - t_begin) / static_cast<double>(t_end - t_begin);
  }
};

inline AspectVector drift_preference(const DriftSchedule& s, std::int64_t t) {
  const double r = s.rho(t);
  if (r == 0.0) return s.w_start;
  if (r == 1.0) return s.w_end;
  std::vector<double> w(s.w_start.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = (1.0 - r) * s.w_start[k] + r * s.w_end[k];
  return AspectVector::checked(std::move(w));
}

struct FeedbackOracle {
  DriftSchedule schedule;
  double gamma = 8.0;
  double sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    schedule.validate();
    require(gamma > 0.0, "oracle gamma must be positive");
    require(sigma >= 0.0, "oracle sigma must be nonnegative");
  }

  AspectVector preference(std::int64_t t) const { return drift_preference(schedule, t); }
};

inline constexpr std::uint64_t kOracleStream = 0x6f7261636c65ULL;

/// q = w_t . z + N(0, sigma^2); f = logistic(gamma (q - 1/K)).
inline double oracle_feedback(const FeedbackOracle& oracle, std::int64_t t,
                              const AspectVector& z) {
  const AspectVector w = oracle.preference(t);
  require(w.size() == z.size(), "oracle and profile dimensions differ");
  double q = dot(w.values(), z.values());
  if (oracle.sigma > 0.0)
    q += oracle.sigma * rng::normal(rng::hash({oracle.seed, kOracleStream,
                                               static_cast<std::uint64_t>(t)}));
  const double centre = 1.0 / static_cast<double>(z.size());
  return 1.0 / (1.0 + std::exp(-oracle.gamma * (q - centre)));
}

inline FeedbackOracle oracle_from_json(const nlohmann::json& j, std::size_t k,
                                       std::uint64_t seed) {
  FeedbackOracle o;
  o.gamma = j.value("gamma", o.gamma);
  o.sigma = j.value("sigma", o.sigma);
  o.seed = seed;
  const AspectVector w = aspect_vector_from_json(j.value("w_true", nlohmann::json("uniform")), k);
  o.schedule = DriftSchedule::stationary(w);
  if (j.contains("drift")) {
    const auto& d = j.at("drift");
    o.schedule.w_end = aspect_vector_from_json(d.at("w_end"), k);
    o.schedule.t_begin = d.at("t_begin").get<std::int64_t>();
    o.schedule.t_end = d.at("t_end").get<std::int64_t>();
  }
  o.validate();
  return o;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticSpec {
  int K = 10;
  int dim = 32;
  int products = 3;
  int sentences_per_product = 200;
  int sentences_per_review = 4;
  int users = 150;
  double spread = 0.6;  // within-aspect noise norm relative to unit centres
  std::uint64_t seed = 7;

  void validate() const {
    require(K >= 2 && dim >= K, "synthetic corpus needs 2 <= K <= dim");
    require(products >= 1 && sentences_per_product >= 1 && sentences_per_review >= 1,
            "synthetic corpus sizes must be positive");
    require(users >= 1, "synthetic corpus needs users");
    require(spread >= 0.0, "spread must be nonnegative");
  }
};

struct SyntheticCorpus {
  corpus::CorpusTables tables;
  aspects::Matrix embeddings;   // one row per sentence, unit norm
  std::vector<int> theme;       // generating aspect per sentence
};

namespace detail {

inline const std::vector<std::string>& theme_words() {
  static const std::vector<std::string> w = {
      "battery", "screen",  "price",   "shipping", "sound",   "design",  "comfort",  "durability",
      "support", "setup",   "weight",  "camera",   "storage", "charger", "warranty", "packaging"};
  return w;
}

inline std::string theme_word(int k) {
  const auto& w = theme_words();
  return k < static_cast<int>(w.size()) ? w[static_cast<std::size_t>(k)]
                                        : "aspect" + std::to_string(k);
}

}  // namespace detail

/// Reviews whose sentences each open with an aspect's theme word, embedded
/// around one random unit centre per aspect. Sentences pass through the
/// real ingest and split steps, so ids follow the production layout.
inline SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  static const char* adjectives[] = {"great", "poor", "solid", "mixed", "excellent",
                                     "weak", "fine", "impressive"};
  static const char* tails[] = {"for daily use", "after a week", "compared to others",
                                "for the money", "in my experience", "overall"};
  std::vector<corpus::ReviewRecord> raw;
  std::map<std::string, int> theme_of_word;
  for (int k = 0; k < spec.K; ++k) theme_of_word[detail::theme_word(k)] = k;

  std::int64_t serial = 0;
  for (int p = 0; p < spec.products; ++p) {
    const int reviews = (spec.sentences_per_product + spec.sentences_per_review - 1) /
                        spec.sentences_per_review;
    int remaining = spec.sentences_per_product;
    for (int r = 0; r < reviews; ++r) {
      corpus::ReviewRecord rec;
      rec.product_id = "p" + std::to_string(p);
      rec.user_id = "u" + std::to_string(rng::hash({spec.seed, 0x75ULL, static_cast<std::uint64_t>(p),
                                                    static_cast<std::uint64_t>(r)}) %
                                         static_cast<std::uint64_t>(spec.users));
      rec.timestamp = 1'600'000'000'000 + serial;
      rec.title = "review " + std::to_string(serial);
      const int n = std::min(spec.sentences_per_review, remaining);
      remaining -= n;
      for (int s = 0; s < n; ++s, ++serial) {
        rng::Stream st(rng::hash({spec.seed, 0x73ULL, static_cast<std::uint64_t>(serial)}));
        const int k = static_cast<int>(st.next_index(static_cast<std::size_t>(spec.K)));
        std::string theme = detail::theme_word(k);
        theme[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(theme[0])));
        if (!rec.text.empty()) rec.text.push_back(' ');
        rec.text += theme + " is " + adjectives[st.next_index(8)] + " " + tails[st.next_index(6)] +
                    " in note " + std::to_string(serial) + ".";
      }
      raw.push_back(std::move(rec));
    }
  }
  auto ingested = corpus::ingest(raw);
  require(ingested.errors.empty(), "synthetic corpus failed ingest");
  SyntheticCorpus out;
  out.tables = corpus::sentence_split(std::move(ingested.tables));

  rng::Stream centre_stream(rng::hash({spec.seed, 0x63ULL}));
  aspects::Matrix centres(spec.K, spec.dim);
  for (int k = 0; k < spec.K; ++k) {
    for (int d = 0; d < spec.dim; ++d) centres(k, d) = centre_stream.next_normal();
    centres.row(k).normalize();
  }
  const auto n = static_cast<Eigen::Index>(out.tables.sentences.size());
  out.embeddings.resize(n, spec.dim);
  const double scale = spec.spread / std::sqrt(static_cast<double>(spec.dim));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& text = out.tables.sentences[static_cast<std::size_t>(i)].text;
    std::string first = text.substr(0, text.find(' '));
    first[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(first[0])));
    const int k = theme_of_word.at(first);
    out.theme.push_back(k);
    rng::Stream st(rng::hash({spec.seed, 0x65ULL, static_cast<std::uint64_t>(i)}));
    for (int d = 0; d < spec.dim; ++d) out.embeddings(i, d) = centres(k, d) + scale * st.next_normal();
    out.embeddings.row(i).normalize();
  }
  return out;
}

inline SyntheticSpec synthetic_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.K = j.value("K", s.K);
  s.dim = j.value("dim", s.dim);
  s.products = j.value("products", s.products);
  s.sentences_per_product = j.value("sentences_per_product", s.sentences_per_product);
  s.sentences_per_review = j.value("sentences_per_review", s.sentences_per_review);
  s.users = j.value("users", s.users);
  s.spread = j.value("spread", s.spread);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

inline aspects::DiscoveryOptions discovery_from_json(const nlohmann::json& j) {
  aspects::DiscoveryOptions o;
  if (j.contains("pca_components"))
    o.pca = aspects::PcaTarget::fixed(j.at("pca_components").get<int>());
  else
    o.pca = aspects::PcaTarget::variance(j.value("variance_target", 0.5));
  o.kmeans.k = j.value("k", o.kmeans.k);
  o.kmeans.n_init = j.value("n_init", o.kmeans.n_init);
  o.kmeans.max_iter = j.value("max_iter", o.kmeans.max_iter);
  o.kmeans.seed = j.value("seed", o.kmeans.seed);
  o.r = j.value("r", o.r);
  return o;
}

/// Synthetic corpus through the full discovery pipeline.
inline Workspace synthetic_workspace(const SyntheticSpec& spec,
                                     const aspects::DiscoveryOptions& opt,
                                     aspects::Discovery* discovery_out = nullptr) {
  auto syn = make_synthetic_corpus(spec);
  auto disc = aspects::discover(aspects::EmbeddingMatrix{syn.embeddings, true}, opt);
  Workspace ws(std::move(syn.tables), disc.model, disc.features);
  if (discovery_out) *discovery_out = std::move(disc);
  return ws;
}

// ---------------------------------------------------------------------------
// Experiment configuration

enum class Arm { static_mmr, static_gumbel, prefer_mmr, prefer_gumbel };

inline const char* to_string(Arm a) {
  switch (a) {
    case Arm::static_mmr: return "static-mmr";
    case Arm::static_gumbel: return "static-gumbel";
    case Arm::prefer_mmr: return "prefer-mmr";
    case Arm::prefer_gumbel: return "prefer-gumbel";
  }
  return "?";
}

inline Arm arm_from_string(const std::string& s) {
  for (Arm a : {Arm::static_mmr, Arm::static_gumbel, Arm::prefer_mmr, Arm::prefer_gumbel})
    if (s == to_string(a)) return a;
  throw Error(ErrorCode::invalid_argument, "unknown arm '" + s + "'");
}

inline bool is_online(Arm a) { return a == Arm::prefer_mmr || a == Arm::prefer_gumbel; }
inline bool is_gumbel(Arm a) { return a == Arm::static_gumbel || a == Arm::prefer_gumbel; }

struct ExperimentConfig {
  std::int64_t rounds = 100;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<Arm> arms = {Arm::static_mmr, Arm::static_gumbel, Arm::prefer_mmr,
                           Arm::prefer_gumbel};
  std::vector<std::string> products;  // empty: every product, sorted
  selection::SelectionConfig selection;
  preference::PreferenceConfig preference;
  preference::ProfileOptions profile;
  nlohmann::json oracle = nlohmann::json::object();
  std::string output_dir;
  unsigned threads = 0;  // 0: hardware concurrency
  bool summaries = false;

  // Data source: files, or a synthetic corpus run through discovery.
  std::optional<std::string> corpus_path;
  std::optional<std::string> model_path;
  std::optional<std::string> embeddings_path;
  std::optional<SyntheticSpec> synthetic;
  aspects::DiscoveryOptions discovery;

  void validate() const {
    require(rounds >= 1, "rounds must be >= 1");
    require(!seeds.empty(), "seeds must be non-empty");
    require(!arms.empty(), "arms must be non-empty");
    require(synthetic || (corpus_path && model_path),
            "experiment needs either a synthetic block or corpus and model paths");
  }
};

/// Parses an experiment document. Relative paths resolve against `base_dir`.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).string();
  };
  try {
    c.rounds = j.value("rounds", c.rounds);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("arms")) {
      c.arms.clear();
      for (const auto& a : j.at("arms")) c.arms.push_back(arm_from_string(a.get<std::string>()));
    }
    if (j.contains("products")) c.products = j.at("products").get<std::vector<std::string>>();
    if (j.contains("selection")) c.selection = selection_from_json(j.at("selection"));
    if (j.contains("profile")) c.profile = profile_from_json(j.at("profile"));
    if (j.contains("oracle")) c.oracle = j.at("oracle");
    c.output_dir = j.contains("output") ? resolve(j.at("output").get<std::string>()) : "";
    c.threads = j.value("threads", 0u);
    c.summaries = j.value("summaries", false);
    if (j.contains("corpus")) c.corpus_path = resolve(j.at("corpus").get<std::string>());
    if (j.contains("model")) c.model_path = resolve(j.at("model").get<std::string>());
    if (j.contains("embeddings")) c.embeddings_path = resolve(j.at("embeddings").get<std::string>());
    if (j.contains("synthetic")) c.synthetic = synthetic_from_json(j.at("synthetic"));
    if (j.contains("discovery")) c.discovery = discovery_from_json(j.at("discovery"));
    const std::size_t k = c.synthetic ? static_cast<std::size_t>(c.synthetic->K) : 0;
    if (j.contains("preference")) c.preference = preference::config_from_json(j.at("preference"), k);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config '" + path + "'", ErrorCode::io);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::parse_error, "config '" + path + "': " + e.what());
  }
  return experiment_from_json(j, std::filesystem::path(path).parent_path());
}

inline Workspace build_workspace(const ExperimentConfig& cfg) {
  if (cfg.synthetic) return synthetic_workspace(*cfg.synthetic, cfg.discovery);
  return Workspace::load(*cfg.corpus_path, *cfg.model_path, cfg.embeddings_path);
}

/// Products in rotation order, each checked against the corpus.
inline std::vector<std::string> resolve_products(const Workspace& ws,
                                                 const std::vector<std::string>& wanted) {
  if (wanted.empty()) {
    auto all = ws.products();
    require(!all.empty(), "corpus has no products");
    return all;
  }
  for (const auto& p : wanted)
    require(ws.has_product(p), "unknown product id '" + p + "'", ErrorCode::not_found);
  return wanted;
}

// ---------------------------------------------------------------------------
// Round loop

struct RoundRow {
  std::int64_t round = 0;
  double f = 0.0;
  double b = 0.0;
  double f_tilde = 0.0;
  double loss = 0.0;
  double loss_comparator = 0.0;
  double regret_cum = 0.0;
  double regret_avg = 0.0;
  double bound_avg = 0.0;
  double a_pref = 0.0;
  double a_evid = 0.0;
  double min_coord_pre = 0.0;
  double min_coord_post = 0.0;
  double v_t = 0.0;
};

struct ArmRun {
  Arm arm = Arm::prefer_mmr;
  std::uint64_t seed = 0;
  std::vector<RoundRow> rows;
  std::vector<AspectVector> w_hat;  // estimate after each round's update
  std::vector<nlohmann::json> summaries;
};

/// Selection config for an arm and seed.
inline selection::SelectionConfig arm_selection(const ExperimentConfig& cfg, Arm arm,
                                                std::uint64_t seed) {
  auto s = cfg.selection;
  s.mode = is_gumbel(arm) ? selection::Mode::gumbel : selection::Mode::deterministic;
  s.seed = seed;
  return s;
}

inline preference::BoundParams bound_params(const preference::PreferenceConfig& p, std::size_t k) {
  preference::BoundParams b;
  b.c = p.clip_c;
  b.delta = p.delta;
  b.c_eta = p.c_eta;
  b.eta0 = p.eta0;
  b.K = k;
  return b;
}

inline ArmRun run_arm(const Workspace& ws, const ExperimentConfig& cfg,
                      const std::vector<std::string>& products, Arm arm, std::uint64_t seed) {
  ArmRun run;
  run.arm = arm;
  run.seed = seed;
  const std::size_t k = ws.K();
  const auto oracle = oracle_from_json(cfg.oracle, k, seed);
  const auto sel = arm_selection(cfg, arm, seed);
  const auto bounds = bound_params(cfg.preference, k);
  auto state = preference::PreferenceState::initial(k, cfg.preference);
  preference::RegretLedger ledger;
  run.rows.reserve(static_cast<std::size_t>(cfg.rounds));
  for (std::int64_t t = 1; t <= cfg.rounds; ++t) {
    const auto& product = products[static_cast<std::size_t>(t - 1) % products.size()];
    const auto ev = select_evidence(ws, product, state.w_hat, sel, state.round, cfg.profile);
    const AspectVector& z = ev.profile.z;
    if (cfg.summaries) {
      const auto art = summarize_round(ws, ev, state.w_hat);
      run.summaries.push_back({{"round", t},
                               {"product", product},
                               {"sentence_ids", ev.selected.ids()},
                               {"final", art.final_text},
                               {"g_cos", art.g_cos}});
    }
    const AspectVector w_true = oracle.preference(t);
    const double f = oracle_feedback(oracle, t, z);
    const auto centered = preference::center_feedback(state, f);
    RoundRow row;
    row.round = t;
    row.f = f;
    row.b = centered.baseline_used;
    row.f_tilde = centered.f_tilde;
    row.loss = preference::surrogate_loss(state.w_hat, centered.f_tilde, z);
    row.loss_comparator = preference::surrogate_loss(w_true, centered.f_tilde, z);
    const auto upd = is_online(arm) ? preference::omd_update(state, centered.f_tilde, z)
                                    : preference::hold(state);
    ledger.record({t, f, centered.baseline_used, centered.f_tilde, row.loss,
                   row.loss_comparator, z, w_true, upd.min_coord_pre, upd.min_coord_post});
    row.regret_cum = ledger.cumulative_regret();
    row.regret_avg = ledger.average_regret();
    row.v_t = ledger.path_length();
    row.bound_avg =
        preference::dynamic_bound(bounds, t, row.v_t) / static_cast<double>(t);
    const auto align = preference::alignment_metrics(w_true, state.w_hat, z);
    row.a_pref = align.a_pref;
    row.a_evid = align.a_evid;
    row.min_coord_pre = upd.min_coord_pre;
    row.min_coord_post = upd.min_coord_post;
    run.rows.push_back(row);
    run.w_hat.push_back(state.w_hat);
  }
  return run;
}

struct ExperimentResult {
  std::vector<ArmRun> runs;  // arm-major, then seed in config order

  const ArmRun& find(Arm arm, std::uint64_t seed) const {
    for (const auto& r : runs)
      if (r.arm == arm && r.seed == seed) return r;
    throw Error(ErrorCode::not_found, "no run for that arm and seed");
  }
};

/// Every (arm, seed) pair, in parallel; results land in fixed slots so the
/// output order does not depend on scheduling.
inline ExperimentResult run_experiment(const Workspace& ws, const ExperimentConfig& cfg) {
  cfg.validate();
  cfg.preference.validate(ws.K());
  const auto products = resolve_products(ws, cfg.products);
  oracle_from_json(cfg.oracle, ws.K(), 0);

  ExperimentResult result;
  for (Arm a : cfg.arms)
    for (auto s : cfg.seeds) result.runs.push_back({a, s, {}, {}, {}});

  unsigned workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(result.runs.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < result.runs.size(); i = next++) {
      try {
        result.runs[i] = run_arm(ws, cfg, products, result.runs[i].arm, result.runs[i].seed);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(build_workspace(cfg), cfg);
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kMetricColumns[] = {
    "f",      "b",          "f_tilde",   "loss",   "loss_comparator",
    "regret_cum", "regret_avg", "bound_avg", "A_pref", "A_evid",
    "min_coord_pre", "min_coord_post", "V_T"};

inline std::vector<double> metric_values(const RoundRow& r) {
  return {r.f,          r.b,          r.f_tilde,   r.loss,   r.loss_comparator,
          r.regret_cum, r.regret_avg, r.bound_avg, r.a_pref, r.a_evid,
          r.min_coord_pre, r.min_coord_post, r.v_t};
}

inline void write_run_csv(std::ostream& out, const ArmRun& run) {
  out << "round,arm,seed";
  for (const char* c : kMetricColumns) out << ',' << c;
  out << '\n';
  for (const auto& r : run.rows) {
    out << r.round << ',' << to_string(run.arm) << ',' << run.seed;
    for (double v : metric_values(r)) out << ',' << format_number(v);
    out << '\n';
  }
}

/// Across-seed mean and min/max per arm and round.
inline void write_aggregate_csv(std::ostream& out, const ExperimentResult& result) {
  out << "round,arm,seeds";
  for (const char* c : kMetricColumns) out << ',' << c << "_mean," << c << "_min," << c << "_max";
  out << '\n';
  std::vector<Arm> arms;
  for (const auto& r : result.runs)
    if (std::find(arms.begin(), arms.end(), r.arm) == arms.end()) arms.push_back(r.arm);
  for (Arm arm : arms) {
    std::vector<const ArmRun*> runs;
    for (const auto& r : result.runs)
      if (r.arm == arm) runs.push_back(&r);
    const std::size_t rounds = runs.front()->rows.size();
    for (std::size_t t = 0; t < rounds; ++t) {
      out << runs.front()->rows[t].round << ',' << to_string(arm) << ',' << runs.size();
      const std::size_t m = std::size(kMetricColumns);
      std::vector<double> sum(m, 0.0), lo(m, INFINITY), hi(m, -INFINITY);
      for (const auto* r : runs) {
        const auto v = metric_values(r->rows[t]);
        for (std::size_t c = 0; c < m; ++c) {
          sum[c] += v[c];
          lo[c] = std::min(lo[c], v[c]);
          hi[c] = std::max(hi[c], v[c]);
        }
      }
      for (std::size_t c = 0; c < m; ++c)
        out << ',' << format_number(sum[c] / static_cast<double>(runs.size())) << ','
            << format_number(lo[c]) << ',' << format_number(hi[c]);
      out << '\n';
    }
  }
}

inline std::string run_file_name(const ArmRun& run) {
  return std::string(to_string(run.arm)) + "_seed" + std::to_string(run.seed) + ".csv";
}

/// Writes each file to a temporary name and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(out.good(), "cannot write '" + tmp + "'", ErrorCode::io);
    out << content;
    require(out.good(), "write failed for '" + tmp + "'", ErrorCode::io);
  }
  std::filesystem::rename(tmp, path);
}

/// One CSV per arm and seed plus aggregate.csv; returns the written paths.
inline std::vector<std::string> write_results(const ExperimentResult& result,
                                              const std::string& dir) {
  require(!dir.empty(), "no output directory configured");
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  for (const auto& run : result.runs) {
    std::ostringstream s;
    write_run_csv(s, run);
    const auto path = std::filesystem::path(dir) / run_file_name(run);
    write_file_atomic(path, s.str());
    written.push_back(path.string());
    if (!run.summaries.empty()) {
      std::ostringstream js;
      for (const auto& j : run.summaries) js << j.dump() << '\n';
      auto spath = path;
      spath.replace_extension(".summaries.jsonl");
      write_file_atomic(spath, js.str());
      written.push_back(spath.string());
    }
  }
  std::ostringstream agg;
  write_aggregate_csv(agg, result);
  const auto apath = std::filesystem::path(dir) / "aggregate.csv";
  write_file_atomic(apath, agg.str());
  written.push_back(apath.string());
  return written;
}

// ---------------------------------------------------------------------------
// Profile heterogeneity

struct ProfileOutcome {
  AspectVector target;
  std::vector<std::int64_t> sentence_ids;
  AspectVector z;
  double g_cos = 0.0;
  std::string final_text;
  bool degraded = false;
};

struct HeterogeneityReport {
  std::string product;
  std::vector<ProfileOutcome> profiles;
  std::vector<std::vector<double>> jaccard;
};

inline double jaccard(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  const std::set<std::int64_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (auto x : sa) inter += sb.count(x);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

inline HeterogeneityReport compare_profiles(const Workspace& ws, const std::string& product,
                                            const std::vector<AspectVector>& profiles,
                                            const selection::SelectionConfig& sel,
                                            const preference::ProfileOptions& popt = {},
                                            summarizer::TextGenerator* generator = nullptr) {
  require(!profiles.empty(), "no profiles to compare");
  const auto& cands = ws.candidates(product);
  require(cands.size() >= static_cast<std::size_t>(sel.max_sentences),
          "product '" + product + "' has fewer sentences than the selection size");
  HeterogeneityReport rep;
  rep.product = product;
  for (const auto& w : profiles) {
    require(w.size() == ws.K(), "profile dimension differs from K");
    const auto ev = select_evidence(ws, product, w, sel, 1, popt);
    const auto art = summarize_round(ws, ev, w, generator);
    rep.profiles.push_back({w, ev.selected.ids(), ev.profile.z, art.g_cos, art.final_text,
                            art.degraded});
  }
  const std::size_t n = rep.profiles.size();
  rep.jaccard.assign(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      rep.jaccard[i][j] = jaccard(rep.profiles[i].sentence_ids, rep.profiles[j].sentence_ids);
  return rep;
}

inline nlohmann::json to_json(const HeterogeneityReport& r) {
  nlohmann::json profiles = nlohmann::json::array();
  for (const auto& p : r.profiles)
    profiles.push_back({{"target", p.target.vec()},
                        {"sentence_ids", p.sentence_ids},
                        {"z", p.z.vec()},
                        {"g_cos", p.g_cos},
                        {"final", p.final_text},
                        {"degraded", p.degraded}});
  return {{"product", r.product}, {"profiles", profiles}, {"jaccard", r.jaccard}};
}

}  // namespace prefer::simulation

#pragma once

// Online preference learning: aspect profile of the shown evidence, centred
// scalar feedback, linear surrogate loss and the entropic mirror-descent
// (exponentiated-gradient) update, plus regret bookkeeping and the bound
// evaluators for fixed and drifting comparators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefer/core.hpp"
#include "prefer/selection.hpp"

namespace prefer::preference {

// ---------------------------------------------------------------------------
// Aspect profile

enum class WeightScheme { uniform, util, rank, blend };

inline WeightScheme weight_scheme_from_string(const std::string& s) {
  if (s == "uniform") return WeightScheme::uniform;
  if (s == "util") return WeightScheme::util;
  if (s == "rank") return WeightScheme::rank;
  if (s == "blend") return WeightScheme::blend;
  throw Error(ErrorCode::invalid_argument, "unknown weight scheme '" + s + "'");
}

inline const char* to_string(WeightScheme s) {
  switch (s) {
    case WeightScheme::uniform: return "uniform";
    case WeightScheme::util: return "util";
    case WeightScheme::rank: return "rank";
    case WeightScheme::blend: return "blend";
  }
  return "uniform";
}

struct ProfileOptions {
  WeightScheme scheme = WeightScheme::uniform;
  double beta_alpha = 1.0;
  double gamma_alpha = 0.0;
};

struct AspectProfile {
  AspectVector z;
  std::vector<double> alpha;
};

/// Log-weights per pick, then a max-subtracted softmax.
inline std::vector<double> profile_weights(const std::vector<selection::Pick>& picks,
                                           const ProfileOptions& opt) {
  require(!picks.empty(), "aspect profile of an empty selection");
  std::vector<double> logits(picks.size(), 0.0);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const double pos = static_cast<double>(i);
    switch (opt.scheme) {
      case WeightScheme::uniform: break;
      case WeightScheme::util: logits[i] = opt.beta_alpha * picks[i].marginal_score; break;
      case WeightScheme::rank: logits[i] = -opt.gamma_alpha * pos; break;
      case WeightScheme::blend:
        logits[i] = opt.beta_alpha * picks[i].marginal_score - opt.gamma_alpha * pos;
        break;
    }
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(picks.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += (w[i] = std::exp(logits[i] - top));
  for (double& v : w) v /= total;
  return w;
}

/// z = sum_i alpha_i phi_i. `phi_of(sentence_id)` returns that sentence's phi.
template <typename PhiLookup>
AspectProfile aspect_profile(const selection::SelectedEvidence& selected,
                             PhiLookup&& phi_of, const ProfileOptions& opt = {}) {
  AspectProfile out;
  out.alpha = profile_weights(selected.picks, opt);
  std::vector<double> z;
  for (std::size_t i = 0; i < selected.picks.size(); ++i) {
    const AspectVector& phi = phi_of(selected.picks[i].sentence_id);
    if (z.empty()) z.assign(phi.size(), 0.0);
    require(phi.size() == z.size(), "phi vectors differ in dimension");
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += out.alpha[i] * phi[k];
  }
  out.z = AspectVector::from_weights(std::move(z));
  return out;
}

// ---------------------------------------------------------------------------
// State

enum class Baseline { mean, ema };

struct PreferenceConfig {
  double eta0 = 0.5;
  double c_eta = 1.0;
  Baseline baseline = Baseline::ema;
  double ema_rho = 0.1;
  double clip_c = 1.0;
  double delta = 1e-4;
  bool project_to_delta = false;
  double initial_baseline = 0.5;

  void validate(std::size_t k) const {
    require(eta0 > 0.0 && std::isfinite(eta0), "eta0 must be positive");
    require(c_eta > 0.0, "c_eta must be positive");
    require(ema_rho > 0.0 && ema_rho <= 1.0, "ema_rho must be in (0,1]");
    require(clip_c > 0.0, "clip level c must be positive");
    require(delta > 0.0 && delta <= 1.0 / static_cast<double>(k),
            "delta must be in (0, 1/K]");
    require(initial_baseline >= 0.0 && initial_baseline <= 1.0,
            "initial baseline must be in [0,1]");
  }

  friend bool operator==(const PreferenceConfig&, const PreferenceConfig&) = default;
};

struct PreferenceState {
  AspectVector w_hat;
  std::int64_t round = 1;
  double baseline = 0.5;
  double feedback_sum = 0.0;  // running-mean baseline bookkeeping
  std::int64_t feedback_count = 0;
  PreferenceConfig config;

  static PreferenceState initial(std::size_t k, const PreferenceConfig& cfg) {
    cfg.validate(k);
    PreferenceState s;
    s.w_hat = AspectVector::uniform(k);
    s.baseline = cfg.initial_baseline;
    s.config = cfg;
    return s;
  }

  friend bool operator==(const PreferenceState&, const PreferenceState&) = default;
};

struct Centered {
  double f_tilde = 0.0;
  double baseline_used = 0.0;
};

/// f~ = clamp(f - b_t, -c, c); the baseline advances afterwards.
inline Centered center_feedback(PreferenceState& state, double f) {
  require(std::isfinite(f) && f >= 0.0 && f <= 1.0, "feedback must lie in [0,1]");
  const auto& cfg = state.config;
  Centered out;
  out.baseline_used = state.baseline;
  out.f_tilde = std::clamp(f - state.baseline, -cfg.clip_c, cfg.clip_c);
  state.feedback_sum += f;
  ++state.feedback_count;
  if (cfg.baseline == Baseline::ema) {
    state.baseline = (1.0 - cfg.ema_rho) * state.baseline + cfg.ema_rho * f;
  } else {
    state.baseline = state.feedback_sum / static_cast<double>(state.feedback_count);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss and update

/// l(w) = -f~ * w.z
inline double surrogate_loss(const AspectVector& w, double f_tilde, const AspectVector& z) {
  return -f_tilde * dot(w.values(), z.values());
}

/// g = -f~ * z
inline std::vector<double> surrogate_gradient(double f_tilde, const AspectVector& z) {
  std::vector<double> g(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) g[k] = -f_tilde * z[k];
  return g;
}

inline double step_size(const PreferenceConfig& cfg, std::int64_t round) {
  return cfg.eta0 / std::sqrt(1.0 + cfg.c_eta * static_cast<double>(round));
}

/// KL(u || w) with 0 log 0 = 0.
inline double kl_divergence(const AspectVector& u, const AspectVector& w) {
  require(u.size() == w.size(), "dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (u[k] == 0.0) continue;
    require(w[k] > 0.0, "KL undefined: reference has a zero coordinate", ErrorCode::numerical);
    s += u[k] * std::log(u[k] / w[k]);
  }
  return s;
}

/// D_d(u||w) = d(u) - d(w) - <grad d(w), u - w> for d(w) = sum w log w.
inline double entropy_bregman(const AspectVector& u, const AspectVector& w) {
  require(u.size() == w.size(), "dimension mismatch");
  auto neg_entropy = [](const AspectVector& v) {
    double s = 0.0;
    for (double x : v.values())
      if (x > 0.0) s += x * std::log(x);
    return s;
  };
  double inner = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    require(w[k] > 0.0, "Bregman divergence needs an interior reference", ErrorCode::numerical);
    inner += (std::log(w[k]) + 1.0) * (u[k] - w[k]);
  }
  return neg_entropy(u) - neg_entropy(w) - inner;
}

/// Closed-form entropic step: w'_k proportional to w_k exp(eta f~ z_k).
inline AspectVector exponentiated_gradient(const AspectVector& w, double eta, double f_tilde,
                                           const AspectVector& z) {
  require(w.size() == z.size(), "dimension mismatch");
  std::vector<double> exponent(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    require(w[k] > 0.0, "preference estimate left the relative interior (coordinate " +
                            std::to_string(k) + " is not positive)");
    exponent[k] = eta * f_tilde * z[k];
  }
  const double top = *std::max_element(exponent.begin(), exponent.end());
  std::vector<double> out(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) out[k] = w[k] * std::exp(exponent[k] - top);
  return AspectVector::from_weights(std::move(out));
}

/// Clamp every coordinate to >= delta, then renormalize (repeated until stable).
inline AspectVector project_floor(const AspectVector& w, double delta) {
  std::vector<double> v = w.vec();
  for (int pass = 0; pass < 64; ++pass) {
    bool changed = false;
    double total = 0.0;
    for (double& x : v) {
      if (x < delta) {
        x = delta;
        changed = true;
      }
      total += x;
    }
    for (double& x : v) x /= total;
    if (!changed) break;
  }
  return AspectVector::from_weights(std::move(v));
}

struct UpdateRecord {
  double eta = 0.0;
  double min_coord_pre = 0.0;
  double min_coord_post = 0.0;
};

/// One mirror-descent step using eta_t at the state's current round, then
/// advances the round.
inline UpdateRecord omd_update(PreferenceState& state, double f_tilde, const AspectVector& z) {
  UpdateRecord rec;
  rec.min_coord_pre = state.w_hat.min_coordinate();
  require(rec.min_coord_pre > 0.0,
          "preference estimate has a non-positive coordinate (outside the relative interior)");
  rec.eta = step_size(state.config, state.round);
  AspectVector next = exponentiated_gradient(state.w_hat, rec.eta, f_tilde, z);
  if (state.config.project_to_delta) next = project_floor(next, state.config.delta);
  state.w_hat = std::move(next);
  rec.min_coord_post = state.w_hat.min_coordinate();
  ++state.round;
  return rec;
}

/// Advances the round without changing the estimate (static arms).
inline UpdateRecord hold(PreferenceState& state) {
  UpdateRecord rec;
  rec.eta = 0.0;
  rec.min_coord_pre = rec.min_coord_post = state.w_hat.min_coordinate();
  ++state.round;
  return rec;
}

// ---------------------------------------------------------------------------
// Regret bounds

struct BoundParams {
  double c = 1.0;
  double delta = 1e-4;
  double c_eta = 1.0;
  double eta0 = 0.5;
  std::size_t K = 10;

  void validate() const {
    require(c > 0.0, "c must be positive");
    require(c_eta > 0.0, "c_eta must be positive");
    require(eta0 > 0.0, "eta0 must be positive");
    require(K >= 1, "K must be >= 1");
    require(delta > 0.0 && delta <= 1.0 / static_cast<double>(K), "delta must be in (0, 1/K]");
  }
};

/// L_delta = 1 + log(1/delta)
inline double lipschitz_constant(double delta) { return 1.0 + std::log(1.0 / delta); }

/// eta0 = sqrt(c_eta * A) / c where A = log(1/delta) (+ L_delta V_T under drift).
inline double optimized_eta0(const BoundParams& p, double path_length = 0.0) {
  p.validate();
  const double a = std::log(1.0 / p.delta) + lipschitz_constant(p.delta) * path_length;
  return std::sqrt(p.c_eta * a) / p.c;
}

/// (A/eta0 + c^2 eta0/c_eta) sqrt(1 + c_eta T), A = log(1/delta) + L_delta V_T.
inline double dynamic_bound(const BoundParams& p, std::int64_t T, double path_length) {
  p.validate();
  require(T >= 0, "T must be nonnegative");
  require(path_length >= 0.0, "path length must be nonnegative");
  const double a = std::log(1.0 / p.delta) + lipschitz_constant(p.delta) * path_length;
  return (a / p.eta0 + p.c * p.c * p.eta0 / p.c_eta) *
         std::sqrt(1.0 + p.c_eta * static_cast<double>(T));
}

inline double static_bound(const BoundParams& p, std::int64_t T) {
  return dynamic_bound(p, T, 0.0);
}

/// 2c sqrt(A/c_eta) sqrt(1 + c_eta T): the bound at the optimal eta0.
inline double optimized_dynamic_bound(const BoundParams& p, std::int64_t T, double path_length) {
  p.validate();
  const double a = std::log(1.0 / p.delta) + lipschitz_constant(p.delta) * path_length;
  return 2.0 * p.c * std::sqrt(a / p.c_eta) * std::sqrt(1.0 + p.c_eta * static_cast<double>(T));
}

inline double optimized_static_bound(const BoundParams& p, std::int64_t T) {
  return optimized_dynamic_bound(p, T, 0.0);
}

/// Smallest T meeting the sufficient horizon for average regret <= epsilon
/// (at the optimized eta0). path_length = 0 gives the stationary case.
inline std::int64_t horizon_for_accuracy(const BoundParams& p, double epsilon,
                                         double path_length = 0.0) {
  p.validate();
  require(epsilon > 0.0, "epsilon must be positive");
  const double a = std::log(1.0 / p.delta) + lipschitz_constant(p.delta) * path_length;
  const double c2 = p.c * p.c;
  const double t = 2.0 / (epsilon * epsilon) *
                   (c2 * a + std::sqrt(c2 * c2 * a * a + epsilon * epsilon * c2 * a / p.c_eta));
  return static_cast<std::int64_t>(std::ceil(t - 1e-9));
}

// ---------------------------------------------------------------------------
// Regret ledger

struct RoundRecord {
  std::int64_t round = 0;
  double f = 0.0;
  double baseline = 0.0;
  double f_tilde = 0.0;
  double loss = 0.0;             // l_t(w_hat_t)
  double loss_comparator = 0.0;  // l_t(w_true_t)
  AspectVector z;
  AspectVector w_true;
  double min_coord_pre = 0.0;
  double min_coord_post = 0.0;
};

class RegretLedger {
 public:
  void record(RoundRecord r) {
    if (!rounds_.empty()) {
      // Neumaier-compensated so a piecewise-linear drift telescopes exactly.
      const double step = l1_distance(rounds_.back().w_true.values(), r.w_true.values());
      const double t = path_length_ + step;
      path_comp_ += std::abs(path_length_) >= std::abs(step) ? (path_length_ - t) + step
                                                             : (step - t) + path_length_;
      path_length_ = t;
    }
    cumulative_ += r.loss - r.loss_comparator;
    rounds_.push_back(std::move(r));
  }

  /// Appends another ledger's rounds; the junction contributes its l1 jump.
  void append(const RegretLedger& other) {
    for (const auto& r : other.rounds_) record(r);
  }

  std::size_t size() const { return rounds_.size(); }
  const std::vector<RoundRecord>& rounds() const { return rounds_; }

  double cumulative_regret() const { return cumulative_; }
  double average_regret() const {
    return rounds_.empty() ? 0.0 : cumulative_ / static_cast<double>(rounds_.size());
  }
  /// V_T = sum_{t>=2} |w_t - w_{t-1}|_1
  double path_length() const { return path_length_ + path_comp_; }

  /// Static regret against a single fixed comparator, recomputed from the
  /// stored per-round (f~, z).
  double static_regret(const AspectVector& comparator) const {
    double s = 0.0;
    for (const auto& r : rounds_) s += r.loss - surrogate_loss(comparator, r.f_tilde, r.z);
    return s;
  }

 private:
  std::vector<RoundRecord> rounds_;
  double cumulative_ = 0.0;
  double path_length_ = 0.0;
  double path_comp_ = 0.0;
};

// ---------------------------------------------------------------------------
// Metrics

struct Alignment {
  double a_pref = 0.0;
  double a_evid = 0.0;
};

inline Alignment alignment_metrics(const AspectVector& w_true, const AspectVector& w_hat,
                                   const AspectVector& z) {
  return {cosine(w_true.values(), w_hat.values()), cosine(w_true.values(), z.values())};
}

// ---------------------------------------------------------------------------
// Snapshot

inline nlohmann::json to_json(const PreferenceConfig& c) {
  return {{"eta0", c.eta0},
          {"c_eta", c.c_eta},
          {"baseline", c.baseline == Baseline::ema ? "ema" : "mean"},
          {"ema_rho", c.ema_rho},
          {"clip_c", c.clip_c},
          {"delta", c.delta},
          {"project_to_delta", c.project_to_delta},
          {"initial_baseline", c.initial_baseline}};
}

inline PreferenceConfig config_from_json(const nlohmann::json& j, std::size_t k = 0) {
  PreferenceConfig c;
  if (j.contains("eta0")) {
    const auto& e = j.at("eta0");
    if (e.is_string()) {
      require(e.get<std::string>() == "optimized", "eta0 must be a number or \"optimized\"");
      BoundParams p;
      p.c = j.value("clip_c", c.clip_c);
      p.delta = j.value("delta", c.delta);
      p.c_eta = j.value("c_eta", c.c_eta);
      p.K = k > 0 ? k : 1;
      c.eta0 = optimized_eta0(p, j.value("eta0_path_length", 0.0));
    } else {
      c.eta0 = e.get<double>();
    }
  }
  c.c_eta = j.value("c_eta", c.c_eta);
  const std::string b = j.value("baseline", std::string("ema"));
  require(b == "ema" || b == "mean", "baseline must be \"ema\" or \"mean\"");
  c.baseline = b == "ema" ? Baseline::ema : Baseline::mean;
  c.ema_rho = j.value("ema_rho", c.ema_rho);
  c.clip_c = j.value("clip_c", c.clip_c);
  c.delta = j.value("delta", c.delta);
  c.project_to_delta = j.value("project_to_delta", c.project_to_delta);
  c.initial_baseline = j.value("initial_baseline", c.initial_baseline);
  return c;
}

inline nlohmann::json to_json(const PreferenceState& s) {
  return {{"w_hat", s.w_hat.vec()},
          {"round", s.round},
          {"baseline", s.baseline},
          {"feedback_sum", s.feedback_sum},
          {"feedback_count", s.feedback_count},
          {"config", to_json(s.config)}};
}

inline PreferenceState state_from_json(const nlohmann::json& j) {
  PreferenceState s;
  s.w_hat = AspectVector::checked(j.at("w_hat").get<std::vector<double>>());
  s.round = j.at("round").get<std::int64_t>();
  s.baseline = j.at("baseline").get<double>();
  s.feedback_sum = j.value("feedback_sum", 0.0);
  s.feedback_count = j.value("feedback_count", std::int64_t{0});
  s.config = config_from_json(j.at("config"), s.w_hat.size());
  require(s.round >= 1, "round must be >= 1");
  return s;
}

}  // namespace prefer::preference

#pragma once

// Budgeted evidence selection: greedy maximal-marginal-relevance with a cached
// redundancy term, and its Gumbel-perturbed stochastic counterpart.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "prefer/core.hpp"

namespace prefer::selection {

struct EvidenceCandidate {
  std::int64_t sentence_id = 0;
  AspectVector phi;
  Eigen::VectorXd reduced;
  std::int64_t token_count = 1;
};

enum class Mode { deterministic, gumbel };

struct SelectionConfig {
  double lambda = 0.7;
  int max_sentences = 8;
  std::optional<std::int64_t> max_tokens;
  Mode mode = Mode::deterministic;
  double c_beta = 2.0;
  double beta_max = 50.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0,1]");
    require(max_sentences >= 1, "max_sentences must be >= 1");
    require(!max_tokens || *max_tokens >= 0, "max_tokens must be nonnegative");
    require(beta_max >= 1.0, "beta_max must be >= 1");
    require(c_beta >= 0.0, "c_beta must be nonnegative");
  }
};

struct Pick {
  std::int64_t sentence_id = 0;
  double marginal_score = 0.0;  // lambda*Rel - (1-lambda)*m(j) at pick time

  friend bool operator==(const Pick&, const Pick&) = default;
};

struct SelectedEvidence {
  std::vector<Pick> picks;  // extraction order
  std::int64_t total_tokens = 0;
  std::optional<AspectVector> aspect_profile;  // filled by the preference layer

  std::vector<std::int64_t> ids() const {
    std::vector<std::int64_t> out;
    out.reserve(picks.size());
    for (const auto& p : picks) out.push_back(p.sentence_id);
    return out;
  }
};

/// Rel = w_hat . phi
inline double relevance(const AspectVector& w_hat, const AspectVector& phi) {
  return dot(w_hat.values(), phi.values());
}

/// Cosine similarity of reduced vectors.
inline double similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  require(a.size() == b.size(), "similarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  require(na > 0.0 && nb > 0.0, "similarity of a zero vector is undefined");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// Inverse temperature at round t: min(beta_max, 1 + c_beta * log(t + 2)).
inline double beta_schedule(const SelectionConfig& cfg, std::int64_t round_t) {
  return std::min(cfg.beta_max,
                  1.0 + cfg.c_beta * std::log(static_cast<double>(round_t) + 2.0));
}

namespace detail {

/// Shared greedy loop. `choose(scores, feasible, step)` returns the position
/// of the next pick among `feasible` (indices into candidates).
template <typename Chooser>
SelectedEvidence greedy(const std::vector<EvidenceCandidate>& candidates,
                        const AspectVector& w_hat, const SelectionConfig& cfg,
                        Chooser&& choose) {
  require(!candidates.empty(), "selection needs at least one candidate");
  cfg.validate();
  const std::size_t n = candidates.size();
  std::vector<double> rel(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& c = candidates[j];
    require(c.token_count >= 1, "candidate token_count must be >= 1");
    rel[j] = relevance(w_hat, c.phi);
    require(c.reduced.norm() > 0.0, "candidate has a zero reduced vector");
  }

  SelectedEvidence out;
  std::vector<double> redundancy(n, 0.0);  // cached max similarity to picks
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> feasible;
  std::vector<double> scores;
  for (int step = 0; step < cfg.max_sentences; ++step) {
    feasible.clear();
    scores.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      if (cfg.max_tokens && out.total_tokens + candidates[j].token_count > *cfg.max_tokens)
        continue;
      feasible.push_back(j);
      scores.push_back(cfg.lambda * rel[j] - (1.0 - cfg.lambda) * redundancy[j]);
    }
    if (feasible.empty()) break;
    const std::size_t pos = choose(scores, feasible, step);
    const std::size_t star = feasible[pos];
    taken[star] = true;
    out.total_tokens += candidates[star].token_count;
    out.picks.push_back({candidates[star].sentence_id, scores[pos]});
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      redundancy[j] = std::max(redundancy[j],
                               similarity(candidates[star].reduced, candidates[j].reduced));
    }
  }
  return out;
}

/// argmax of `values`, ties to the lowest sentence id.
inline std::size_t argmax_by_id(const std::vector<double>& values,
                                const std::vector<std::size_t>& feasible,
                                const std::vector<EvidenceCandidate>& candidates) {
  std::size_t best = 0;
  for (std::size_t p = 1; p < values.size(); ++p) {
    if (values[p] > values[best] ||
        (values[p] == values[best] &&
         candidates[feasible[p]].sentence_id < candidates[feasible[best]].sentence_id))
      best = p;
  }
  return best;
}

}  // namespace detail

/// Per-step Gumbel-max draw: argmax_j beta*score_j + g_j with g_j from the
/// stream (seed, round, step, sentence_id).
inline std::size_t gumbel_pick(const std::vector<double>& scores,
                               const std::vector<std::int64_t>& ids, double beta,
                               std::uint64_t seed, std::int64_t round_t, int step) {
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < scores.size(); ++p) {
    const double g = rng::gumbel({seed, static_cast<std::uint64_t>(round_t),
                                  static_cast<std::uint64_t>(step),
                                  static_cast<std::uint64_t>(ids[p])});
    const double v = beta * scores[p] + g;
    if (v > best_value || (v == best_value && ids[p] < ids[best])) {
      best_value = v;
      best = p;
    }
  }
  return best;
}

inline SelectedEvidence select_mmr(const std::vector<EvidenceCandidate>& candidates,
                                   const AspectVector& w_hat, const SelectionConfig& cfg) {
  return detail::greedy(candidates, w_hat, cfg,
                        [&](const std::vector<double>& scores,
                            const std::vector<std::size_t>& feasible, int) {
                          return detail::argmax_by_id(scores, feasible, candidates);
                        });
}

inline SelectedEvidence select_gumbel(const std::vector<EvidenceCandidate>& candidates,
                                      const AspectVector& w_hat, const SelectionConfig& cfg,
                                      std::int64_t round_t) {
  const double beta = beta_schedule(cfg, round_t);
  std::vector<std::int64_t> ids;
  return detail::greedy(candidates, w_hat, cfg,
                        [&](const std::vector<double>& scores,
                            const std::vector<std::size_t>& feasible, int step) {
                          ids.clear();
                          for (std::size_t j : feasible) ids.push_back(candidates[j].sentence_id);
                          return gumbel_pick(scores, ids, beta, cfg.seed, round_t, step);
                        });
}

inline SelectedEvidence select(const std::vector<EvidenceCandidate>& candidates,
                               const AspectVector& w_hat, const SelectionConfig& cfg,
                               std::int64_t round_t) {
  return cfg.mode == Mode::gumbel ? select_gumbel(candidates, w_hat, cfg, round_t)
                                  : select_mmr(candidates, w_hat, cfg);
}

}  // namespace prefer::selection

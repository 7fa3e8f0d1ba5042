#pragma once

// Read-only bundle of corpus, aspect model and per-sentence features, plus the
// single-round step (select, profile, summarize) shared by the simulator and
// the service.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefer/aspect_space.hpp"
#include "prefer/core.hpp"
#include "prefer/corpus.hpp"
#include "prefer/preference.hpp"
#include "prefer/selection.hpp"
#include "prefer/summarizer.hpp"

namespace prefer {

class Workspace {
 public:
  Workspace() = default;

  Workspace(corpus::CorpusTables tables, aspects::AspectModel model,
            aspects::SentenceFeatures features)
      : tables_(std::move(tables)), model_(std::move(model)), features_(std::move(features)) {
    model_.validate();
    require(features_.size() == tables_.sentences.size(),
            "feature rows (" + std::to_string(features_.size()) + ") != sentences (" +
                std::to_string(tables_.sentences.size()) + ")");
    tables_.rebuild_index();
    for (const auto& [product, ids] : tables_.product_index) {
      auto& cands = candidates_[product];
      cands.reserve(ids.size());
      for (auto id : ids) {
        const auto i = static_cast<std::size_t>(id);
        cands.push_back({id, features_.phi[i], features_.reduced[i],
                         std::max<std::int64_t>(1, tables_.sentences[i].token_count)});
      }
    }
  }

  /// Corpus JSONL plus a model document; features come from the model
  /// document or, failing that, from an embedding file.
  static Workspace load(const std::string& corpus_path, const std::string& model_path,
                        const std::optional<std::string>& embeddings_path = std::nullopt) {
    auto tables = corpus::load_tables(corpus_path);
    std::ifstream in(model_path);
    require(in.good(), "cannot open model file '" + model_path + "'", ErrorCode::io);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::parse_error, "model file: " + std::string(e.what()));
    }
    auto model = aspects::model_from_json(doc);
    auto features = aspects::features_from_json(model, doc);
    if (!features) {
      require(embeddings_path.has_value(),
              "model file has no features; supply the sentence embeddings");
      const auto emb = aspects::normalize_rows(aspects::read_embeddings(*embeddings_path));
      features = aspects::compute_features(model, aspects::project_rows(model.pca, emb.data));
    }
    return Workspace(std::move(tables), std::move(model), std::move(*features));
  }

  std::size_t K() const { return static_cast<std::size_t>(model_.K()); }
  const corpus::CorpusTables& tables() const { return tables_; }
  const aspects::AspectModel& model() const { return model_; }
  const aspects::SentenceFeatures& features() const { return features_; }

  bool has_product(const std::string& p) const { return candidates_.contains(p); }

  std::vector<std::string> products() const {
    std::vector<std::string> out;
    for (const auto& [p, _] : candidates_) out.push_back(p);
    return out;
  }

  const std::vector<selection::EvidenceCandidate>& candidates(const std::string& product) const {
    auto it = candidates_.find(product);
    if (it == candidates_.end())
      throw Error(ErrorCode::not_found, "unknown product id '" + product + "'");
    return it->second;
  }

  const AspectVector& phi(std::int64_t id) const { return features_.phi.at(check(id)); }
  const std::string& reviewer(std::int64_t id) const {
    return tables_.sentences.at(check(id)).user_id;
  }
  const std::string& text(std::int64_t id) const { return tables_.sentences.at(check(id)).text; }

 private:
  std::size_t check(std::int64_t id) const {
    require(id >= 0 && static_cast<std::size_t>(id) < tables_.sentences.size(),
            "sentence id out of range", ErrorCode::not_found);
    return static_cast<std::size_t>(id);
  }

  corpus::CorpusTables tables_;
  aspects::AspectModel model_;
  aspects::SentenceFeatures features_;
  std::map<std::string, std::vector<selection::EvidenceCandidate>> candidates_;
};

struct RoundEvidence {
  selection::SelectedEvidence selected;
  preference::AspectProfile profile;
};

/// Selection for one round and the aspect profile of what was shown.
inline RoundEvidence select_evidence(const Workspace& ws, const std::string& product,
                                     const AspectVector& w_hat,
                                     const selection::SelectionConfig& cfg, std::int64_t round,
                                     const preference::ProfileOptions& profile = {}) {
  RoundEvidence out;
  out.selected = selection::select(ws.candidates(product), w_hat, cfg, round);
  out.profile = preference::aspect_profile(
      out.selected, [&](std::int64_t id) -> const AspectVector& { return ws.phi(id); }, profile);
  out.selected.aspect_profile = out.profile.z;
  return out;
}

inline summarizer::SummaryArtifact summarize_round(const Workspace& ws, const RoundEvidence& ev,
                                                   const AspectVector& w_hat,
                                                   summarizer::TextGenerator* generator = nullptr) {
  auto art = summarizer::summarize(
      ev.selected, [&](std::int64_t id) -> const AspectVector& { return ws.phi(id); },
      [&](std::int64_t id) -> const std::string& { return ws.reviewer(id); },
      [&](std::int64_t id) -> const std::string& { return ws.text(id); }, generator);
  art.g_cos = summarizer::g_cos(w_hat, ev.profile.z);
  return art;
}

// ---------------------------------------------------------------------------
// Shared config parsing

inline selection::SelectionConfig selection_from_json(const nlohmann::json& j) {
  selection::SelectionConfig c;
  c.lambda = j.value("lambda", c.lambda);
  c.max_sentences = j.value("max_sentences", c.max_sentences);
  if (j.contains("max_tokens") && !j.at("max_tokens").is_null())
    c.max_tokens = j.at("max_tokens").get<std::int64_t>();
  const std::string mode = j.value("mode", std::string("mmr"));
  require(mode == "mmr" || mode == "gumbel", "selection mode must be \"mmr\" or \"gumbel\"");
  c.mode = mode == "gumbel" ? selection::Mode::gumbel : selection::Mode::deterministic;
  c.c_beta = j.value("c_beta", c.c_beta);
  c.beta_max = j.value("beta_max", c.beta_max);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const selection::SelectionConfig& c) {
  nlohmann::json j{{"lambda", c.lambda},
                   {"max_sentences", c.max_sentences},
                   {"mode", c.mode == selection::Mode::gumbel ? "gumbel" : "mmr"},
                   {"c_beta", c.c_beta},
                   {"beta_max", c.beta_max},
                   {"seed", c.seed}};
  j["max_tokens"] = c.max_tokens ? nlohmann::json(*c.max_tokens) : nlohmann::json(nullptr);
  return j;
}

inline preference::ProfileOptions profile_from_json(const nlohmann::json& j) {
  preference::ProfileOptions o;
  o.scheme = preference::weight_scheme_from_string(j.value("scheme", std::string("uniform")));
  o.beta_alpha = j.value("beta_alpha", o.beta_alpha);
  o.gamma_alpha = j.value("gamma_alpha", o.gamma_alpha);
  return o;
}

/// Aspect vector from JSON: an explicit array, {"one_hot": k} or "uniform".
inline AspectVector aspect_vector_from_json(const nlohmann::json& j, std::size_t k) {
  if (j.is_string()) {
    require(j.get<std::string>() == "uniform", "aspect vector string must be \"uniform\"");
    return AspectVector::uniform(k);
  }
  if (j.is_object()) {
    if (j.contains("one_hot")) {
      const auto i = j.at("one_hot").get<std::size_t>();
      require(i < k, "one_hot index out of range");
      return AspectVector::one_hot(k, i);
    }
    if (j.contains("mix")) {
      std::vector<double> v(k, 0.0);
      for (const auto& idx : j.at("mix")) {
        const auto i = idx.get<std::size_t>();
        require(i < k, "mix index out of range");
        v[i] += 1.0;
      }
      return AspectVector::from_weights(std::move(v));
    }
    throw Error(ErrorCode::invalid_argument, "aspect vector object needs one_hot or mix");
  }
  auto v = j.get<std::vector<double>>();
  require(v.size() == k, "aspect vector has " + std::to_string(v.size()) +
                             " entries, expected " + std::to_string(k));
  return AspectVector::checked(std::move(v));
}

}  // namespace prefer

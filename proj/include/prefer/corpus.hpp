#pragma once

// Review ingestion, sentence segmentation and the line-delimited JSON tables
// shared by the rest of the pipeline.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "prefer/core.hpp"

namespace prefer::corpus {

struct ReviewRecord {
  std::string user_id;
  std::string product_id;
  std::int64_t timestamp = 0;  // milliseconds
  std::string title;
  std::string text;
  std::int64_t helpful_votes = 0;
  bool verified = false;

  friend bool operator==(const ReviewRecord&, const ReviewRecord&) = default;
};

struct SentenceRecord {
  std::int64_t sentence_id = 0;
  std::int64_t review_key = 0;  // index into CorpusTables::reviews
  std::string user_id;
  std::string product_id;
  std::string text;
  std::int64_t token_count = 0;

  friend bool operator==(const SentenceRecord&, const SentenceRecord&) = default;
};

struct CorpusTables {
  std::vector<ReviewRecord> reviews;
  std::vector<SentenceRecord> sentences;
  std::map<std::string, std::vector<std::int64_t>> product_index;

  void rebuild_index() {
    product_index.clear();
    for (const auto& s : sentences)
      product_index[s.product_id].push_back(s.sentence_id);
  }

  const std::vector<std::int64_t>& product_sentences(const std::string& product_id) const {
    auto it = product_index.find(product_id);
    if (it == product_index.end())
      throw Error(ErrorCode::not_found, "unknown product id '" + product_id + "'");
    return it->second;
  }

  bool has_product(const std::string& product_id) const {
    return product_index.contains(product_id);
  }

  friend bool operator==(const CorpusTables& a, const CorpusTables& b) {
    return a.reviews == b.reviews && a.sentences == b.sentences;
  }
};

struct RecordError {
  std::size_t index = 0;  // position in the input sequence
  std::string message;
};

struct IngestResult {
  CorpusTables tables;
  std::vector<RecordError> errors;
};

struct SplitOptions {
  int min_words = 3;
  int max_sentences_per_review = 20;
};

// ---------------------------------------------------------------------------
// Text helpers

inline bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

/// Collapses whitespace runs to one space and trims both ends.
inline std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

inline std::int64_t count_tokens(std::string_view text) {
  std::int64_t n = 0;
  bool in_token = false;
  for (char c : text) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

/// Splits after '.', '!' or '?' when followed by whitespace or end of text.
inline std::vector<std::string> split_sentences(std::string_view text) {
  const std::string clean = normalize_whitespace(text);
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const char c = clean[i];
    if (c != '.' && c != '!' && c != '?') continue;
    const bool boundary = i + 1 == clean.size() || is_space(clean[i + 1]);
    if (!boundary) continue;
    std::string piece = normalize_whitespace(
        std::string_view(clean).substr(start, i + 1 - start));
    if (!piece.empty()) out.push_back(std::move(piece));
    start = i + 1;
  }
  if (start < clean.size()) {
    std::string tail = normalize_whitespace(std::string_view(clean).substr(start));
    if (!tail.empty()) out.push_back(std::move(tail));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operations

namespace detail {

inline bool better_duplicate(const ReviewRecord& challenger,
                             const ReviewRecord& incumbent) {
  if (challenger.helpful_votes != incumbent.helpful_votes)
    return challenger.helpful_votes > incumbent.helpful_votes;
  if (challenger.verified != incumbent.verified) return challenger.verified;
  return false;  // first seen wins
}

}  // namespace detail

/// Deduplicates on (user_id, product_id, timestamp). The surviving record
/// has the most helpful votes, then verified=true, then appeared first.
/// Surviving records keep the order in which their key was first seen.
inline IngestResult ingest(const std::vector<ReviewRecord>& records) {
  IngestResult result;
  using Key = std::tuple<std::string, std::string, std::int64_t>;
  std::map<Key, std::size_t> slot_of;
  for (std::size_t i = 0; i < records.size(); ++i) {
    ReviewRecord r = records[i];
    r.text = normalize_whitespace(r.text);
    r.title = normalize_whitespace(r.title);
    if (r.user_id.empty()) {
      result.errors.push_back({i, "empty user_id"});
      continue;
    }
    if (r.product_id.empty()) {
      result.errors.push_back({i, "empty product_id"});
      continue;
    }
    if (r.text.empty()) {
      result.errors.push_back({i, "empty review text"});
      continue;
    }
    if (r.helpful_votes < 0) {
      result.errors.push_back({i, "negative helpful_votes"});
      continue;
    }
    Key key{r.user_id, r.product_id, r.timestamp};
    auto [it, inserted] = slot_of.try_emplace(key, result.tables.reviews.size());
    if (inserted) {
      result.tables.reviews.push_back(std::move(r));
    } else if (detail::better_duplicate(r, result.tables.reviews[it->second])) {
      result.tables.reviews[it->second] = std::move(r);
    }
  }
  return result;
}

/// Populates the sentence table from already ingested reviews.
inline CorpusTables sentence_split(CorpusTables tables, const SplitOptions& options = {}) {
  require(options.min_words >= 1, "min_words must be >= 1");
  require(options.max_sentences_per_review >= 1,
          "max_sentences_per_review must be >= 1");
  tables.sentences.clear();
  for (std::size_t r = 0; r < tables.reviews.size(); ++r) {
    const ReviewRecord& review = tables.reviews[r];
    int kept = 0;
    for (std::string& piece : split_sentences(review.text)) {
      if (kept >= options.max_sentences_per_review) break;
      const std::int64_t tokens = count_tokens(piece);
      if (tokens < options.min_words) continue;
      SentenceRecord s;
      s.sentence_id = static_cast<std::int64_t>(tables.sentences.size());
      s.review_key = static_cast<std::int64_t>(r);
      s.user_id = review.user_id;
      s.product_id = review.product_id;
      s.text = std::move(piece);
      s.token_count = tokens;
      tables.sentences.push_back(std::move(s));
      ++kept;
    }
  }
  tables.rebuild_index();
  return tables;
}

// ---------------------------------------------------------------------------
// Serialization

using nlohmann::json;

inline json to_json(const ReviewRecord& r) {
  return json{{"kind", "review"},           {"user_id", r.user_id},
              {"product_id", r.product_id}, {"timestamp", r.timestamp},
              {"title", r.title},           {"text", r.text},
              {"helpful_votes", r.helpful_votes}, {"verified", r.verified}};
}

inline json to_json(const SentenceRecord& s) {
  return json{{"kind", "sentence"},         {"sentence_id", s.sentence_id},
              {"review_key", s.review_key}, {"user_id", s.user_id},
              {"product_id", s.product_id}, {"text", s.text},
              {"token_count", s.token_count}};
}

namespace detail {

template <typename T>
T field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw std::runtime_error(std::string("missing field '") + name + "'");
  return it->get<T>();
}

/// First present field among aliases, or the fallback.
template <typename T>
T field_or(const json& j, std::initializer_list<const char*> names, T fallback) {
  for (const char* n : names) {
    auto it = j.find(n);
    if (it != j.end() && !it->is_null()) return it->get<T>();
  }
  return fallback;
}

inline ReviewRecord review_from_json(const json& j) {
  ReviewRecord r;
  r.user_id = field<std::string>(j, "user_id");
  r.product_id = field<std::string>(j, "product_id");
  r.timestamp = field<std::int64_t>(j, "timestamp");
  r.title = field<std::string>(j, "title");
  r.text = field<std::string>(j, "text");
  r.helpful_votes = field<std::int64_t>(j, "helpful_votes");
  r.verified = field<bool>(j, "verified");
  return r;
}

inline SentenceRecord sentence_from_json(const json& j) {
  SentenceRecord s;
  s.sentence_id = field<std::int64_t>(j, "sentence_id");
  s.review_key = field<std::int64_t>(j, "review_key");
  s.user_id = field<std::string>(j, "user_id");
  s.product_id = field<std::string>(j, "product_id");
  s.text = field<std::string>(j, "text");
  s.token_count = field<std::int64_t>(j, "token_count");
  return s;
}

[[noreturn]] inline void fail_at(std::size_t line, std::size_t offset,
                                 const std::string& what) {
  throw Error(ErrorCode::parse_error, "line " + std::to_string(line) + ", offset " +
                                          std::to_string(offset) + ": " + what);
}

}  // namespace detail

inline void write_tables(std::ostream& out, const CorpusTables& tables) {
  for (const auto& r : tables.reviews) out << to_json(r).dump() << '\n';
  for (const auto& s : tables.sentences) out << to_json(s).dump() << '\n';
}

inline CorpusTables read_tables(std::istream& in) {
  CorpusTables tables;
  std::string line;
  std::size_t line_no = 0;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (normalize_whitespace(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      detail::fail_at(line_no, line_offset + (e.byte > 0 ? e.byte - 1 : 0), e.what());
    }
    try {
      const auto kind = detail::field<std::string>(j, "kind");
      if (kind == "review") {
        tables.reviews.push_back(detail::review_from_json(j));
      } else if (kind == "sentence") {
        tables.sentences.push_back(detail::sentence_from_json(j));
      } else {
        throw std::runtime_error("unknown record kind '" + kind + "'");
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      detail::fail_at(line_no, line_offset, e.what());
    }
  }
  for (std::size_t i = 0; i < tables.sentences.size(); ++i) {
    const auto& s = tables.sentences[i];
    if (s.sentence_id != static_cast<std::int64_t>(i))
      throw Error(ErrorCode::parse_error,
                  "sentence ids are not dense: expected " + std::to_string(i) +
                      ", found " + std::to_string(s.sentence_id));
    if (s.review_key < 0 || s.review_key >= static_cast<std::int64_t>(tables.reviews.size()))
      throw Error(ErrorCode::parse_error, "sentence " + std::to_string(i) +
                                              " references missing review " +
                                              std::to_string(s.review_key));
    if (s.token_count < 1 || s.token_count != count_tokens(s.text))
      throw Error(ErrorCode::parse_error,
                  "sentence " + std::to_string(i) + " has inconsistent token_count");
  }
  tables.rebuild_index();
  return tables;
}

inline void save_tables(const std::string& path, const CorpusTables& tables) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
  write_tables(out, tables);
  if (!out) throw Error(ErrorCode::io, "write to '" + path + "' failed");
}

inline CorpusTables load_tables(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  return read_tables(in);
}

/// Reads raw review records (one JSON object per line). Field aliases used by
/// the public Amazon dumps are accepted. Malformed lines are reported, not fatal.
inline std::vector<ReviewRecord> read_raw_records(std::istream& in,
                                                  std::vector<RecordError>* errors) {
  std::vector<ReviewRecord> out;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (normalize_whitespace(line).empty()) continue;
    const std::size_t this_index = index++;
    try {
      const json j = json::parse(line);
      ReviewRecord r;
      r.user_id = detail::field_or<std::string>(j, {"user_id"}, "");
      r.product_id = detail::field_or<std::string>(j, {"product_id", "parent_asin", "asin"}, "");
      r.timestamp = detail::field_or<std::int64_t>(j, {"timestamp"}, 0);
      r.title = detail::field_or<std::string>(j, {"title"}, "");
      r.text = detail::field_or<std::string>(j, {"text"}, "");
      r.helpful_votes = detail::field_or<std::int64_t>(j, {"helpful_votes", "helpful_vote"}, 0);
      r.verified = detail::field_or<bool>(j, {"verified", "verified_purchase"}, false);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      if (errors) errors->push_back({this_index, e.what()});
    }
  }
  return out;
}

}  // namespace prefer::corpus

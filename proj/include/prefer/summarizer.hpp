#pragma once

// Hierarchical summary of selected evidence: reviewer-support binning,
// per-bin compression, cross-bin stitching and a final polish. Each stage
// goes through an optional text generator and falls back to a deterministic
// stub when the generator is absent or fails.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prefer/core.hpp"
#include "prefer/prompts.hpp"
#include "prefer/selection.hpp"

namespace prefer::summarizer {

enum class Bin { high, mid, low };

inline const char* to_string(Bin b) {
  switch (b) {
    case Bin::high: return "HIGH";
    case Bin::mid: return "MID";
    case Bin::low: return "LOW";
  }
  return "?";
}

inline constexpr Bin kBinOrder[] = {Bin::high, Bin::mid, Bin::low};

struct SupportBins {
  std::map<std::size_t, int> support;  // aspect -> distinct reviewers
  double q33 = 0.0;
  double q67 = 0.0;
  std::map<std::size_t, Bin> aspect_bin;
  std::map<Bin, std::vector<std::int64_t>> members;  // sentence ids, extraction order

  const std::vector<std::int64_t>& of(Bin b) const {
    static const std::vector<std::int64_t> empty;
    auto it = members.find(b);
    return it == members.end() ? empty : it->second;
  }
};

/// Empirical quantile by linear interpolation between order statistics.
inline double quantile(std::vector<double> values, double p) {
  require(!values.empty(), "quantile of an empty sample");
  require(p >= 0.0 && p <= 1.0, "quantile level must be in [0,1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Dominant aspect per sentence (ties to the lowest index), distinct
/// reviewer support per aspect, then high/mid/low by the 0.67/0.33
/// quantiles of the supports of aspects present in the selection.
template <typename PhiLookup, typename ReviewerLookup>
SupportBins bin_by_support(const selection::SelectedEvidence& selected, PhiLookup&& phi_of,
                           ReviewerLookup&& reviewer_of) {
  require(!selected.picks.empty(), "binning needs a non-empty selection");
  SupportBins bins;
  std::map<std::size_t, std::set<std::string>> reviewers;
  std::vector<std::pair<std::int64_t, std::size_t>> dominant;
  for (const auto& p : selected.picks) {
    const std::size_t a = phi_of(p.sentence_id).argmax();
    dominant.emplace_back(p.sentence_id, a);
    reviewers[a].insert(std::string(reviewer_of(p.sentence_id)));
  }
  std::vector<double> supports;
  for (const auto& [aspect, users] : reviewers) {
    bins.support[aspect] = static_cast<int>(users.size());
    supports.push_back(static_cast<double>(users.size()));
  }
  bins.q33 = quantile(supports, 0.33);
  bins.q67 = quantile(supports, 0.67);
  for (const auto& [aspect, n] : bins.support) {
    const double v = static_cast<double>(n);
    bins.aspect_bin[aspect] = v >= bins.q67 ? Bin::high : v <= bins.q33 ? Bin::low : Bin::mid;
  }
  for (const auto& [id, aspect] : dominant) bins.members[bins.aspect_bin[aspect]].push_back(id);
  return bins;
}

// ---------------------------------------------------------------------------
// Text generation

/// A prompt-in, text-out model. Implementations throw on failure.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string generate(const std::string& prompt, int max_tokens) = 0;
};

// ---------------------------------------------------------------------------
// Deterministic stub stages

namespace stub {

/// Lowercased alphanumeric words; two sentences with the same key are
/// near-duplicates.
inline std::string dedup_key(const std::string& text) {
  std::string key;
  bool gap = false;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      if (gap && !key.empty()) key.push_back(' ');
      gap = false;
      key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      gap = true;
    }
  }
  return key;
}

inline std::string truncate_tokens(const std::string& text, std::size_t max_tokens) {
  std::istringstream in(text);
  std::string word;
  std::string out;
  std::size_t n = 0;
  while (n < max_tokens && in >> word) {
    if (!out.empty()) out.push_back(' ');
    out += word;
    ++n;
  }
  return out;
}

inline constexpr std::size_t kCompressTokens = 80;

inline std::string compress(const std::vector<std::string>& evidence) {
  std::set<std::string> seen;
  std::string joined;
  for (const auto& s : evidence) {
    if (!seen.insert(dedup_key(s)).second) continue;
    if (!joined.empty()) joined.push_back(' ');
    joined += s;
  }
  return truncate_tokens(joined, kCompressTokens);
}

inline std::string stitch(const std::map<Bin, std::string>& bin_summaries) {
  std::string out;
  for (Bin b : kBinOrder) {
    auto it = bin_summaries.find(b);
    if (it == bin_summaries.end()) continue;
    if (!out.empty()) out.push_back('\n');
    out += std::string(to_string(b)) + ": " + it->second;
  }
  return out;
}

/// One paragraph: the stitched paragraphs without their bin prefixes.
inline std::string polish(const std::string& draft) {
  std::istringstream in(draft);
  std::string line;
  std::string out;
  while (std::getline(in, line)) {
    const auto colon = line.find(": ");
    std::string body = line;
    for (Bin b : kBinOrder)
      if (line.rfind(std::string(to_string(b)) + ": ", 0) == 0) body = line.substr(colon + 2);
    if (body.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += body;
  }
  return out;
}

}  // namespace stub

// ---------------------------------------------------------------------------
// Prompt construction

inline std::string compress_prompt(const std::vector<std::string>& evidence) {
  std::string p(prompts::kCompress);
  p += "\n\n";
  for (const auto& s : evidence) {
    p += s;
    p.push_back('\n');
  }
  return p;
}

struct BinStats {
  double pct = 0.0;
  int count = 0;
};

inline std::string stitch_prompt(const std::map<Bin, std::string>& summaries,
                                 const std::map<Bin, BinStats>& stats) {
  std::string p(prompts::kStitchHeader);
  for (Bin b : kBinOrder) {
    const auto st = stats.contains(b) ? stats.at(b) : BinStats{};
    const auto sm = summaries.contains(b) ? summaries.at(b) : std::string();
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.1f", st.pct);
    std::string label = to_string(b);
    label.resize(4, ' ');
    p += "\n" + label + " | pct=" + pct + "% | count=" + std::to_string(st.count) +
         " | summary=" + sm + " |";
  }
  return p;
}

inline std::string polish_prompt(const std::string& draft) {
  return std::string(prompts::kPolish) + "\n\n" + draft;
}

// ---------------------------------------------------------------------------
// Pipeline

struct SummaryArtifact {
  std::map<Bin, std::string> bin_summaries;
  std::string draft;
  std::string final_text;
  std::map<Bin, std::vector<std::int64_t>> provenance;
  double g_cos = 0.0;
  bool degraded = false;
};

/// Runs one stage through the generator, or the stub when the generator is
/// absent, throws, or returns blank text.
class StageRunner {
 public:
  explicit StageRunner(TextGenerator* generator, int max_tokens = 256)
      : generator_(generator), max_tokens_(max_tokens) {}

  std::string run(const std::string& prompt, const std::function<std::string()>& fallback) {
    if (generator_ != nullptr) {
      try {
        std::string text = generator_->generate(prompt, max_tokens_);
        if (text.find_first_not_of(" \t\r\n") != std::string::npos) return text;
      } catch (const std::exception&) {
      }
      degraded_ = true;
    }
    return fallback();
  }

  bool degraded() const { return degraded_; }

 private:
  TextGenerator* generator_;
  int max_tokens_;
  bool degraded_ = false;
};

template <typename TextLookup>
std::map<Bin, std::string> compress_bins(const SupportBins& bins, TextLookup&& text_of,
                                         StageRunner& runner) {
  std::map<Bin, std::string> out;
  for (Bin b : kBinOrder) {
    const auto& ids = bins.of(b);
    if (ids.empty()) continue;
    std::vector<std::string> evidence;
    for (auto id : ids) evidence.emplace_back(text_of(id));
    out[b] = runner.run(compress_prompt(evidence), [&] { return stub::compress(evidence); });
  }
  return out;
}

struct DraftAndFinal {
  std::string draft;
  std::string final_text;
};

inline DraftAndFinal stitch_and_polish(const std::map<Bin, std::string>& bin_summaries,
                                       const std::map<Bin, BinStats>& stats,
                                       StageRunner& runner) {
  require(!bin_summaries.empty(), "stitching needs at least one bin summary");
  DraftAndFinal out;
  out.draft = runner.run(stitch_prompt(bin_summaries, stats),
                         [&] { return stub::stitch(bin_summaries); });
  out.final_text = runner.run(polish_prompt(out.draft), [&] {
    // A generated draft has no bin prefixes; polish the stub draft instead
    // so the fallback stays deterministic.
    return stub::polish(stub::stitch(bin_summaries));
  });
  return out;
}

/// cos(w_hat, z)
inline double g_cos(const AspectVector& w_hat, const AspectVector& z) {
  return cosine(w_hat.values(), z.values());
}

template <typename PhiLookup, typename ReviewerLookup, typename TextLookup>
SummaryArtifact summarize(const selection::SelectedEvidence& selected, PhiLookup&& phi_of,
                          ReviewerLookup&& reviewer_of, TextLookup&& text_of,
                          TextGenerator* generator = nullptr) {
  SummaryArtifact art;
  const SupportBins bins = bin_by_support(selected, phi_of, reviewer_of);
  StageRunner runner(generator);
  art.bin_summaries = compress_bins(bins, text_of, runner);
  std::map<Bin, BinStats> stats;
  const double total = static_cast<double>(selected.picks.size());
  for (Bin b : kBinOrder) {
    const auto& ids = bins.of(b);
    if (ids.empty()) continue;
    art.provenance[b] = ids;
    stats[b] = {100.0 * static_cast<double>(ids.size()) / total, static_cast<int>(ids.size())};
  }
  auto df = stitch_and_polish(art.bin_summaries, stats, runner);
  art.draft = std::move(df.draft);
  art.final_text = std::move(df.final_text);
  art.degraded = runner.degraded();
  return art;
}

}  // namespace prefer::summarizer

#pragma once

// Distracting-row removal. Each hypothesis content word is aligned with its
// most similar token in a row sentence (cosine over static word vectors); a
// row's score is the mean of those maxima. Rows are ranked by score and the
// top k are kept.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <istream>
#include <limits>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tabprem/embedding.hpp"
#include "tabprem/error.hpp"
#include "tabprem/renderer.hpp"
#include "tabprem/text.hpp"

namespace tabprem {

using TokenSequence = std::vector<std::string>;

namespace detail {

/// A trailing '.' belongs to a dotted abbreviation ("u.s.", "b.p.", "ph.d."):
/// the rest of the token is short letter groups joined by periods.
inline bool keeps_trailing_period(std::string_view tok) {
  if (tok.size() < 3 || tok.back() != '.') return false;
  auto body = tok.substr(0, tok.size() - 1);
  if (body.find('.') == std::string_view::npos) return false;
  std::size_t start = 0;
  while (start <= body.size()) {
    auto end = body.find('.', start);
    if (end == std::string_view::npos) end = body.size();
    auto seg = body.substr(start, end - start);
    if (seg.empty() || seg.size() > 3) return false;
    for (char c : seg)
      if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))) return false;
    start = end + 1;
  }
  return true;
}

}  // namespace detail

/// Lowercase, split on whitespace, strip punctuation at both ends of each
/// token. Internal punctuation ("3,000", "andré-marie", "u.s.") survives.
inline TokenSequence tokenize(std::string_view sentence) {
  TokenSequence out;
  for (auto& raw : text::split_ws(sentence)) {
    std::string_view tok = raw;
    while (!tok.empty() && text::is_ascii_punct(tok.front())) tok.remove_prefix(1);
    while (!tok.empty() && text::is_ascii_punct(tok.back())) {
      if (detail::keeps_trailing_period(tok)) break;
      tok.remove_suffix(1);
    }
    if (!tok.empty()) out.push_back(text::lower(tok));
  }
  return out;
}

class StopWordSet {
public:
  StopWordSet() = default;
  StopWordSet(std::initializer_list<std::string_view> words) {
    for (auto w : words) add(w);
  }

  void add(std::string_view w) {
    auto t = text::trim(w);
    if (!t.empty()) words_.insert(text::lower(t));
  }

  bool contains(std::string_view w) const { return words_.count(text::lower(w)) > 0; }
  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }

private:
  std::unordered_set<std::string> words_;
};

/// English stop-word list compiled in from data/stopwords.txt.
inline const StopWordSet& default_stopwords() {
  static const StopWordSet set = {
#include "tabprem/default_stopwords.inc"
  };
  return set;
}

inline StopWordSet parse_stopwords(std::istream& in) {
  StopWordSet set;
  std::string line;
  while (std::getline(in, line)) set.add(line);
  return set;
}

inline StopWordSet load_stopwords(const std::string& path) {
  auto in = text::open_input(path);
  return parse_stopwords(in);
}

inline TokenSequence content_words(const TokenSequence& seq, const StopWordSet& stops) {
  TokenSequence out;
  for (const auto& t : seq)
    if (!stops.contains(t)) out.push_back(t);
  return out;
}

struct RowScore {
  double score = 0.0;
  /// No hypothesis word could be aligned (missing vectors on either side).
  bool no_coverage = false;
};

namespace detail {

inline const EmbeddingVector* usable(const EmbeddingTable& emb, std::string_view w) {
  const auto* v = emb.find(w);
  if (!v) return nullptr;
  for (double c : v->components())
    if (c != 0.0) return v;
  return nullptr;
}

}  // namespace detail

/// Mean over embeddable hypothesis words of the max cosine against the
/// embeddable row tokens. Words without vectors are left out of the mean.
inline RowScore row_score(const TokenSequence& hyp_content,
                          const TokenSequence& row_tokens,
                          const EmbeddingTable& emb) {
  if (hyp_content.empty()) throw EmptyHypothesis("hypothesis has no content words");
  std::vector<const EmbeddingVector*> row_vecs;
  row_vecs.reserve(row_tokens.size());
  for (const auto& u : row_tokens)
    if (const auto* v = detail::usable(emb, u)) row_vecs.push_back(v);

  double sum = 0.0;
  std::size_t counted = 0;
  if (!row_vecs.empty()) {
    for (const auto& w : hyp_content) {
      const auto* wv = detail::usable(emb, w);
      if (!wv) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (const auto* uv : row_vecs) best = std::max(best, cosine(*wv, *uv));
      sum += best;
      ++counted;
    }
  }
  if (counted == 0) return RowScore{0.0, true};
  return RowScore{sum / static_cast<double>(counted), false};
}

struct RankEntry {
  std::size_t row_index = 0;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
  bool no_coverage = false;
};

namespace detail {

/// Scores equal to within 1e-12 rank as ties, so rows that tie exactly in
/// real arithmetic keep row order despite rounding in the last bits.
inline long long tie_bucket(double score) { return std::llround(score * 1e12); }

}  // namespace detail

/// Entries sorted by score descending (ties within 1e-12), ties by ascending
/// row index.
struct RowRanking {
  std::string hypothesis_id;
  std::vector<RankEntry> entries;
};

/// Scores every row sentence of `paragraph` (CATEGORY and KG_DEF sentences
/// are not scored).
inline RowRanking rank_rows(std::string_view hypothesis,
                            const PremiseParagraph& paragraph,
                            const EmbeddingTable& emb, const StopWordSet& stops,
                            std::string hypothesis_id = {}) {
  auto hyp = content_words(tokenize(hypothesis), stops);
  if (hyp.empty()) throw EmptyHypothesis("hypothesis has no content words");
  RowRanking ranking{std::move(hypothesis_id), {}};
  for (const auto& s : paragraph.sentences) {
    if (!s.is_row()) continue;
    auto rs = row_score(hyp, tokenize(s.sentence), emb);
    ranking.entries.push_back(
        RankEntry{static_cast<std::size_t>(s.source_index), rs.score, 0, rs.no_coverage});
  }
  std::sort(ranking.entries.begin(), ranking.entries.end(),
            [](const RankEntry& a, const RankEntry& b) {
              const auto qa = detail::tie_bucket(a.score), qb = detail::tie_bucket(b.score);
              if (qa != qb) return qa > qb;
              return a.row_index < b.row_index;
            });
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) ranking.entries[i].rank = i + 1;
  return ranking;
}

struct SelectionConfig {
  std::size_t k = 4;
};

/// Category sentence (if any) first, then the top-k row sentences in ranking
/// order.
inline PremiseParagraph select_top_k(const RowRanking& ranking,
                                     const PremiseParagraph& paragraph,
                                     const SelectionConfig& cfg) {
  if (cfg.k == 0) throw ConfigError("k must be at least 1");
  PremiseParagraph out;
  out.table_id = paragraph.table_id;
  std::unordered_map<std::size_t, const RenderedRow*> by_row;
  for (const auto& s : paragraph.sentences) {
    if (s.stage_tag == StageTag::Category && out.sentences.empty())
      out.sentences.push_back(s);
    if (s.is_row()) by_row.emplace(static_cast<std::size_t>(s.source_index), &s);
  }
  std::size_t taken = 0;
  for (const auto& e : ranking.entries) {
    if (taken == cfg.k) break;
    auto it = by_row.find(e.row_index);
    if (it == by_row.end()) continue;
    out.sentences.push_back(*it->second);
    ++taken;
  }
  return out;
}

}  // namespace tabprem

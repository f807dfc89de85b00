#pragma once

// Explicit key knowledge: for each retained row, look the key up in a sense
// inventory, pick the sense whose contextual key embedding is closest to the
// key's embedding inside the row sentence, and append
//   "KEY: <key> is defined as <definition> ."

#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tabprem/embedding.hpp"
#include "tabprem/error.hpp"
#include "tabprem/gateway.hpp"
#include "tabprem/relevance.hpp"
#include "tabprem/renderer.hpp"
#include "tabprem/table.hpp"
#include "tabprem/text.hpp"

namespace tabprem {

enum class SenseSource { WordNet, Wikipedia };

inline std::string_view to_string(SenseSource s) {
  return s == SenseSource::WordNet ? "WORDNET" : "WIKIPEDIA";
}

struct SenseEntry {
  NormalizedKey lemma;
  std::string definition;
  std::vector<std::string> example_sentences;
  SenseSource source = SenseSource::WordNet;
};

class SenseInventory {
public:
  void add(SenseEntry e) {
    auto lemma = e.lemma.text;
    by_lemma_[lemma].push_back(std::move(e));
  }

  const std::vector<SenseEntry>* find(const NormalizedKey& lemma) const {
    auto it = by_lemma_.find(lemma.text);
    return it == by_lemma_.end() ? nullptr : &it->second;
  }

  std::size_t lemma_count() const { return by_lemma_.size(); }

private:
  std::map<std::string, std::vector<SenseEntry>> by_lemma_;
};

/// JSON-lines {"lemma", "definition", "examples": [str], "source"}.
inline SenseInventory parse_inventory(std::istream& in, std::string_view source) {
  SenseInventory inv;
  detail::for_each_record(in, source, [&](const std::string& line, const std::string& where) {
    auto obj = detail::parse_object(line, where);
    SenseEntry e;
    e.lemma = normalize_key(detail::required_string(obj, "lemma", where));
    if (e.lemma.empty()) throw MalformedInput(where + "empty lemma");
    e.definition = std::string(text::trim(detail::required_string(obj, "definition", where)));
    if (e.definition.empty()) throw MalformedInput(where + "empty definition");
    if (auto ex = obj.find("examples"); ex != obj.end() && !ex->is_null()) {
      if (!ex->is_array()) throw MalformedInput(where + "\"examples\" must be an array");
      for (const auto& s : *ex) {
        if (!s.is_string()) throw MalformedInput(where + "non-string example");
        e.example_sentences.push_back(s.get<std::string>());
      }
    }
    auto src = detail::required_string(obj, "source", where);
    if (src == "WORDNET") e.source = SenseSource::WordNet;
    else if (src == "WIKIPEDIA") e.source = SenseSource::Wikipedia;
    else throw MalformedInput(where + "unknown source \"" + src + "\"");
    inv.add(std::move(e));
  });
  return inv;
}

inline SenseInventory load_inventory(const std::string& path) {
  auto in = text::open_input(path);
  return parse_inventory(in, path);
}

/// Surface form of a key as used for lookup and in the KEY sentence: trimmed,
/// with an infobox plural marker "(s)" dropped ("Spouse(s)" -> "Spouse").
inline std::string key_surface(std::string_view key) {
  auto k = text::trim(key);
  constexpr std::string_view marker = "(s)";
  if (k.size() > marker.size() && k.substr(k.size() - marker.size()) == marker)
    k = text::trim(k.substr(0, k.size() - marker.size()));
  return std::string(k);
}

/// (1) the whole key; (2) for multi-word keys, one merged pseudo-sense built
/// from each word's first sense ("; "-joined); (3) nothing.
inline std::vector<SenseEntry> lookup_senses(const SenseInventory& inv, std::string_view key) {
  const auto lemma = normalize_key(key_surface(key));
  if (lemma.empty()) return {};
  if (const auto* hit = inv.find(lemma)) return *hit;
  const auto words = text::split_ws(lemma.text);
  if (words.size() < 2) return {};
  std::vector<std::string> defs;
  for (const auto& w : words)
    if (const auto* hit = inv.find(normalize_key(w))) defs.push_back(hit->front().definition);
  if (defs.empty()) return {};
  return {SenseEntry{lemma, text::join(defs, "; "), {}, SenseSource::WordNet}};
}

struct DisambiguationOptions {
  /// When set, a GatewayUnavailable is answered with mean static word vectors
  /// over the whole sentences instead of propagating.
  const EmbeddingTable* static_fallback = nullptr;
};

struct SenseChoice {
  SenseEntry sense;
  double similarity = 0.0;
  bool used_fallback = false;
};

namespace detail {

inline EmbedRequest span_request(std::string_view sentence, std::string_view key) {
  auto pos = text::ifind(sentence, key);
  if (pos == std::string_view::npos) return EmbedRequest{std::string(sentence), -1, -1};
  return EmbedRequest{std::string(sentence), static_cast<long>(pos),
                      static_cast<long>(pos + key.size())};
}

inline EmbedRequest candidate_request(const SenseEntry& sense, std::string_view key) {
  for (const auto& ex : sense.example_sentences)
    if (text::ifind(ex, key) != std::string_view::npos) return span_request(ex, key);
  return EmbedRequest{sense.definition, -1, -1};
}

inline std::optional<EmbeddingVector> static_sentence_vector(const EmbeddingTable& table,
                                                             std::string_view sentence) {
  std::vector<EmbeddingVector> vs;
  for (const auto& tok : tokenize(sentence))
    if (const auto* v = detail::usable(table, tok)) vs.push_back(*v);
  if (vs.empty()) return std::nullopt;
  return mean_of(vs);
}

inline double safe_cosine(const std::optional<EmbeddingVector>& a,
                          const std::optional<EmbeddingVector>& b) {
  if (!a || !b) return -std::numeric_limits<double>::infinity();
  try {
    return cosine(*a, *b);
  } catch (const ZeroVector&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

/// Argmax-cosine sense between the key's embedding in the row sentence and
/// the key's embedding in each sense's first example containing it (else the
/// pooled definition). Ties go to WORDNET, then inventory order. A single
/// candidate is returned without consulting the gateway (similarity 1).
inline SenseChoice disambiguate_sense(std::string_view key, std::string_view premise_row_sentence,
                                      const std::vector<SenseEntry>& senses,
                                      EmbeddingGateway& gateway,
                                      const DisambiguationOptions& opts = {}) {
  if (senses.empty()) throw MalformedInput("disambiguate_sense: no candidate senses");
  if (senses.size() == 1) return SenseChoice{senses.front(), 1.0, false};

  const auto surface = key_surface(key);
  std::vector<double> sims(senses.size());
  bool fallback = false;
  try {
    const auto anchor = gateway.embed(detail::span_request(premise_row_sentence, surface));
    for (std::size_t i = 0; i < senses.size(); ++i)
      sims[i] = cosine(anchor, gateway.embed(detail::candidate_request(senses[i], surface)));
  } catch (const GatewayUnavailable&) {
    if (!opts.static_fallback) throw;
    fallback = true;
    const auto anchor = detail::static_sentence_vector(*opts.static_fallback, premise_row_sentence);
    for (std::size_t i = 0; i < senses.size(); ++i) {
      const auto req = detail::candidate_request(senses[i], surface);
      sims[i] = detail::safe_cosine(
          anchor, detail::static_sentence_vector(*opts.static_fallback, req.sentence));
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < senses.size(); ++i) {
    if (sims[i] > sims[best] ||
        (sims[i] == sims[best] && senses[i].source == SenseSource::WordNet &&
         senses[best].source == SenseSource::Wikipedia))
      best = i;
  }
  double sim = std::isfinite(sims[best]) ? sims[best] : 0.0;
  return SenseChoice{senses[best], sim, fallback};
}

struct KeyAugmentation {
  std::string key;
  SenseEntry chosen;
  double similarity = 0.0;
  RenderedRow rendered;
};

/// "KEY: <key> is defined as <definition> ." with the definition's own final
/// period removed. `tidy_punct` drops the space before the closing period.
inline std::string render_definition(std::string_view key, std::string_view definition,
                                     bool tidy_punct = false) {
  std::string def(text::trim(definition));
  while (!def.empty() && (def.back() == '.' || text::is_space(def.back()))) def.pop_back();
  return "KEY: " + key_surface(key) + " is defined as " + def + (tidy_punct ? "." : " .");
}

struct AugmentOptions {
  DisambiguationOptions disambiguation;
  bool tidy_punct = false;
};

struct AugmentResult {
  PremiseParagraph paragraph;
  std::vector<KeyAugmentation> augmentations;
  std::size_t fallbacks = 0;
};

/// Appends one KG_DEF sentence per row sentence whose key has senses, in row
/// sentence order, after all existing sentences.
inline AugmentResult augment_premise(const PremiseParagraph& paragraph,
                                     const SenseInventory& inv, EmbeddingGateway& gateway,
                                     const AugmentOptions& opts = {}) {
  AugmentResult out{paragraph, {}, 0};
  for (const auto& s : paragraph.sentences) {
    if (!s.is_row() || s.key.empty()) continue;
    auto senses = lookup_senses(inv, s.key);
    if (senses.empty()) continue;
    auto choice = disambiguate_sense(s.key, s.sentence, senses, gateway, opts.disambiguation);
    out.fallbacks += choice.used_fallback;
    RenderedRow rendered{render_definition(s.key, choice.sense.definition, opts.tidy_punct), -1,
                         StageTag::KgDef, {}};
    out.augmentations.push_back(
        KeyAugmentation{s.key, std::move(choice.sense), choice.similarity, rendered});
    out.paragraph.sentences.push_back(std::move(rendered));
  }
  return out;
}

}  // namespace tabprem

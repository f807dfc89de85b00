#pragma once

// Row-to-sentence rendering: the universal "The {k} of {t} are {v}."
// template, type-specific templates selected from a registry, the leading
// category sentence, and the "key k : value v ; ..." linearization.

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tabprem/error.hpp"
#include "tabprem/table.hpp"
#include "tabprem/text.hpp"

namespace tabprem {

enum class EntityType { Money, Date, Cardinal, Bool, Sequence, String };

inline std::string_view to_string(EntityType t) {
  switch (t) {
    case EntityType::Money: return "MONEY";
    case EntityType::Date: return "DATE";
    case EntityType::Cardinal: return "CARDINAL";
    case EntityType::Bool: return "BOOL";
    case EntityType::Sequence: return "SEQUENCE";
    case EntityType::String: return "STRING";
  }
  return "STRING";
}

inline std::optional<EntityType> parse_entity_type(std::string_view s) {
  for (auto t : {EntityType::Money, EntityType::Date, EntityType::Cardinal,
                 EntityType::Bool, EntityType::Sequence, EntityType::String})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

enum class StageTag { Universal, Bpr, Category, Struc, KgDef };

inline std::string_view to_string(StageTag t) {
  switch (t) {
    case StageTag::Universal: return "UNIVERSAL";
    case StageTag::Bpr: return "BPR";
    case StageTag::Category: return "CATEGORY";
    case StageTag::Struc: return "STRUC";
    case StageTag::KgDef: return "KG_DEF";
  }
  return "UNIVERSAL";
}

struct RenderedRow {
  std::string sentence;
  /// Index of the source row, -1 for CATEGORY and KG_DEF sentences.
  int source_index = -1;
  StageTag stage_tag = StageTag::Universal;
  /// Key of the source row (empty when source_index is -1).
  std::string key;

  bool is_row() const { return source_index >= 0; }
};

struct PremiseParagraph {
  std::string table_id;
  std::vector<RenderedRow> sentences;

  std::string text() const {
    std::string out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      if (i) out += ' ';
      out += sentences[i].sentence;
    }
    return out;
  }

  std::size_t row_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.is_row();
    return n;
  }
};

// ---------------------------------------------------------------------------
// Entity typing

namespace detail {

inline bool contains_currency(std::string_view v) {
  static constexpr std::array<std::string_view, 4> symbols = {
      "$", "\xC2\xA3" /* £ */, "\xE2\x82\xAC" /* € */, "\xC2\xA5" /* ¥ */};
  for (auto s : symbols)
    if (v.find(s) != std::string_view::npos) return true;
  static const std::regex iso(
      R"((^|[^A-Za-z])(USD|US\$|EUR|GBP|JPY|CNY|RMB|INR|AUD|CAD|CHF|HKD|NZD|SEK|NOK|DKK|RUB|BRL|KRW|MXN|ZAR|SGD)([^A-Za-z]|$))");
  return std::regex_search(v.begin(), v.end(), iso);
}

inline bool looks_like_date(std::string_view v) {
  static const std::string months =
      "(January|February|March|April|May|June|July|August|September|October|"
      "November|December|Jan|Feb|Mar|Apr|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec)";
  static const std::array<std::regex, 4> patterns = {
      // May 17, 1792 / March 1999 / July 100 BC
      std::regex("\\b" + months + "\\.?\\s+(\\d{1,2},?\\s+)?\\d{3,4}\\b"),
      // 5 November 1800
      std::regex("\\b\\d{1,2}\\s+" + months + "\\.?,?\\s+\\d{3,4}\\b"),
      // 1800-11-05
      std::regex(R"(\b\d{4}-\d{2}-\d{2}\b)"),
      // (aged 65) / (age 44)
      std::regex(R"(\bage[d]?\s+\d{1,3}\b)", std::regex::icase),
  };
  for (const auto& re : patterns)
    if (std::regex_search(v.begin(), v.end(), re)) return true;
  return false;
}

inline bool is_cardinal(std::string_view v) {
  bool any_digit = false;
  for (char c : v) {
    if (c == ',' || c == '.' || text::is_space(c)) continue;
    if (c < '0' || c > '9') return false;
    any_digit = true;
  }
  return any_digit;
}

inline std::size_t comma_items(std::string_view v) {
  std::size_t n = 0;
  std::size_t start = 0;
  while (start <= v.size()) {
    auto end = v.find(',', start);
    if (end == std::string_view::npos) end = v.size();
    if (!text::trim(v.substr(start, end - start)).empty()) ++n;
    start = end + 1;
  }
  return n;
}

}  // namespace detail

/// Rule cascade, first match wins: BOOL, MONEY, DATE, CARDINAL, SEQUENCE,
/// STRING.
inline EntityType infer_entity_type(const RowEntry& row) {
  const std::string value = row.joined_values();
  const auto folded = text::lower(text::trim(value));
  if (folded == "yes" || folded == "no" || folded == "true" || folded == "false")
    return EntityType::Bool;
  if (detail::contains_currency(value)) return EntityType::Money;
  if (detail::looks_like_date(value)) return EntityType::Date;
  if (detail::is_cardinal(value)) return EntityType::Cardinal;
  if (detail::comma_items(value) >= 3) return EntityType::Sequence;
  return EntityType::String;
}

// ---------------------------------------------------------------------------
// Templates

inline constexpr std::string_view kUniversalPattern = "The {k} of {t} are {v}.";

struct Template {
  /// Empty optional means wildcard ("*" in the registry file).
  std::optional<std::string> category;
  std::optional<std::string> key;
  std::optional<EntityType> etype;
  std::string pattern;
  int priority = 0;

  bool is_universal() const { return pattern == kUniversalPattern && !etype && !key && !category; }
};

namespace detail {

inline void validate_pattern(std::string_view pattern, const std::string& where) {
  bool has_slot = false;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != '{') continue;
    auto close = pattern.find('}', i);
    if (close == std::string_view::npos)
      throw MalformedInput(where + "unterminated placeholder in pattern");
    auto name = pattern.substr(i + 1, close - i - 1);
    if (name != "t" && name != "k" && name != "v")
      throw MalformedInput(where + "unknown placeholder {" + std::string(name) + "}");
    if (name != "t") has_slot = true;
    i = close;
  }
  // {k} alone is allowed, e.g. "{t} has {k}." for BOOL rows
  if (!has_slot)
    throw MalformedInput(where + "pattern needs a {k} or {v} placeholder");
}

inline bool selector_equal(const Template& a, const Template& b) {
  auto norm = [](const std::optional<std::string>& s) {
    return s ? std::optional<std::string>(normalize_key(*s).text) : std::nullopt;
  };
  return norm(a.category) == norm(b.category) && norm(a.key) == norm(b.key) &&
         a.etype == b.etype;
}

}  // namespace detail

/// Ordered template list with a fixed universal fallback. Resolution tiers,
/// most specific first:
///   1. category + key   (entity type wildcard or equal)
///   2. key only         (entity type wildcard or equal)
///   3. category + entity type
///   4. entity type only
///   5. universal
/// Within a tier the highest priority wins, then file order.
class TemplateRegistry {
public:
  TemplateRegistry() = default;

  void add(Template t, const std::string& where = "") {
    detail::validate_pattern(t.pattern, where);
    if (!t.key && !t.etype)
      throw MalformedInput(where + "selector must name a key or an entity type");
    for (const auto& existing : templates_)
      if (existing.priority == t.priority && detail::selector_equal(existing, t))
        throw MalformedInput(where + "duplicate (selector, priority)");
    templates_.push_back(std::move(t));
  }

  const std::vector<Template>& templates() const { return templates_; }
  bool empty() const { return templates_.empty(); }

  const Template& universal() const { return universal_; }

  const Template& resolve(std::string_view category, std::string_view key,
                          EntityType etype) const {
    const auto cat = normalize_key(category).text;
    const auto k = normalize_key(key).text;
    const Template* best = nullptr;
    int best_tier = 5;
    for (const auto& t : templates_) {
      int tier = tier_of(t, cat, k, etype);
      if (tier > 4) continue;
      if (!best || tier < best_tier ||
          (tier == best_tier && t.priority > best->priority)) {
        best = &t;
        best_tier = tier;
      }
    }
    return best ? *best : universal_;
  }

private:
  static int tier_of(const Template& t, const std::string& cat,
                     const std::string& key, EntityType etype) {
    if (t.etype && *t.etype != etype) return 99;
    if (t.category && normalize_key(*t.category).text != cat) return 99;
    if (t.key && normalize_key(*t.key).text != key) return 99;
    if (t.category && t.key) return 1;
    if (t.key) return 2;
    if (t.category) return 3;  // etype is set (validated in add)
    return 4;
  }

  std::vector<Template> templates_;
  Template universal_{std::nullopt, std::nullopt, std::nullopt,
                      std::string(kUniversalPattern), 0};
};

/// Registry file: JSON-lines {"category", "key", "etype", "pattern",
/// "priority"}; "*" is a wildcard. Lines starting with '#' are comments.
inline TemplateRegistry parse_registry(std::istream& in, std::string_view source) {
  TemplateRegistry reg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    auto where = detail::locate(source, lineno);
    auto obj = detail::parse_object(line, where);
    auto wildcard = [&](const char* field) -> std::optional<std::string> {
      auto s = detail::required_string(obj, field, where);
      if (s == "*") return std::nullopt;
      return s;
    };
    Template t;
    t.category = wildcard("category");
    t.key = wildcard("key");
    if (auto e = wildcard("etype")) {
      t.etype = parse_entity_type(*e);
      if (!t.etype) throw MalformedInput(where + "unknown etype \"" + *e + "\"");
    }
    t.pattern = detail::required_string(obj, "pattern", where);
    if (auto p = obj.find("priority"); p != obj.end()) {
      if (!p->is_number_integer())
        throw MalformedInput(where + "\"priority\" must be an integer");
      t.priority = p->get<int>();
    }
    reg.add(std::move(t), where);
  }
  return reg;
}

inline TemplateRegistry load_registry(const std::string& path) {
  auto in = text::open_input(path);
  return parse_registry(in, path);
}

inline const Template& resolve_template(const TemplateRegistry& registry,
                                        std::string_view category,
                                        std::string_view key, EntityType etype) {
  return registry.resolve(category, key, etype);
}

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

inline std::string substitute(std::string_view pattern, std::string_view title,
                              std::string_view key, std::string_view value) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{' && i + 2 < pattern.size() && pattern[i + 2] == '}') {
      char slot = pattern[i + 1];
      if (slot == 't' || slot == 'k' || slot == 'v') {
        out += slot == 't' ? title : slot == 'k' ? key : value;
        i += 2;
        continue;
      }
    }
    out += pattern[i];
  }
  return out;
}

/// Trims and leaves exactly one terminal period.
inline std::string terminate_sentence(std::string s) {
  s = std::string(text::trim(s));
  while (!s.empty() && (s.back() == '.' || text::is_space(s.back()))) s.pop_back();
  s += '.';
  return s;
}

}  // namespace detail

inline RenderedRow render_with(const Template& tmpl, const RowEntry& row,
                               const TableDocument& table, StageTag tag) {
  return RenderedRow{
      detail::terminate_sentence(detail::substitute(tmpl.pattern, table.title,
                                                    row.key, row.joined_values())),
      static_cast<int>(row.index), tag, row.key};
}

inline RenderedRow render_row(const RowEntry& row, const TableDocument& table,
                              const TemplateRegistry& registry) {
  const auto& tmpl = registry.resolve(table.category, row.key, infer_entity_type(row));
  const bool universal = &tmpl == &registry.universal();
  return render_with(tmpl, row, table, universal ? StageTag::Universal : StageTag::Bpr);
}

inline RenderedRow render_universal_row(const RowEntry& row, const TableDocument& table) {
  static const Template universal{std::nullopt, std::nullopt, std::nullopt,
                                  std::string(kUniversalPattern), 0};
  return render_with(universal, row, table, StageTag::Universal);
}

inline RenderedRow render_category_sentence(const TableDocument& table) {
  const auto category = text::trim(table.category);
  if (category.empty())
    throw MissingCategory("table \"" + table.id + "\" has no category");
  const char first = text::fold(category.front());
  const bool vowel = first == 'a' || first == 'e' || first == 'i' ||
                     first == 'o' || first == 'u';
  return RenderedRow{table.title + " is " + (vowel ? "an " : "a ") +
                         std::string(category) + ".",
                     -1, StageTag::Category, {}};
}

enum class RenderMode { Universal, Bpr };

inline PremiseParagraph render_paragraph(const TableDocument& table,
                                         const TemplateRegistry& registry,
                                         RenderMode mode) {
  PremiseParagraph para;
  para.table_id = table.id;
  if (mode == RenderMode::Bpr) para.sentences.push_back(render_category_sentence(table));
  for (const auto& row : table.rows)
    para.sentences.push_back(mode == RenderMode::Bpr ? render_row(row, table, registry)
                                                     : render_universal_row(row, table));
  return para;
}

/// "key <k> : value <v>" per row, joined by " ; ".
inline std::string render_struc(const TableDocument& table,
                                const std::vector<std::size_t>* order = nullptr) {
  std::string out;
  auto emit = [&](const RowEntry& row) {
    if (!out.empty()) out += " ; ";
    out += "key " + row.key + " : value " + row.joined_values();
  };
  if (order) {
    for (auto i : *order) emit(table.rows.at(i));
  } else {
    for (const auto& row : table.rows) emit(row);
  }
  return out;
}

}  // namespace tabprem

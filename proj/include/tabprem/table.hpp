#pragma once

// Table documents and hypothesis pairs, read from the canonical JSON-lines
// files:
//
//   tables: {"id": str, "title": str, "category": str,
//            "rows": [{"key": str, "values": [str, ...]}, ...]}
//   pairs:  {"pair_id": str, "table_id": str, "hypothesis": str,
//            "label": "E" | "C" | "N"}          (label optional)

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tabprem/error.hpp"
#include "tabprem/text.hpp"

namespace tabprem {

/// Lowercased, whitespace-collapsed key with trailing ".,:;" removed.
/// Internal punctuation is kept ("No. of listings" -> "no. of listings").
struct NormalizedKey {
  std::string text;

  bool empty() const { return text.empty(); }
  friend bool operator==(const NormalizedKey&, const NormalizedKey&) = default;
  friend auto operator<=>(const NormalizedKey&, const NormalizedKey&) = default;
};

inline NormalizedKey normalize_key(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (text::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += text::fold(c);
  }
  // trailing spaces and sentence punctuation, e.g. "abc ." -> "abc"
  while (!out.empty() && (out.back() == ' ' || out.back() == '.' ||
                          out.back() == ',' || out.back() == ':' ||
                          out.back() == ';'))
    out.pop_back();
  return NormalizedKey{std::move(out)};
}

struct RowEntry {
  std::string key;
  std::vector<std::string> values;
  std::size_t index = 0;

  std::string joined_values() const { return text::join(values, ", "); }
};

struct TableDocument {
  std::string id;
  std::string title;
  std::string category;
  std::vector<RowEntry> rows;
};

enum class Label { Entailed, Contradiction, Neutral, Unknown };

inline std::string_view label_code(Label l) {
  switch (l) {
    case Label::Entailed: return "E";
    case Label::Contradiction: return "C";
    case Label::Neutral: return "N";
    case Label::Unknown: return "";
  }
  return "";
}

inline std::optional<Label> parse_label(std::string_view code) {
  if (code == "E") return Label::Entailed;
  if (code == "C") return Label::Contradiction;
  if (code == "N") return Label::Neutral;
  return std::nullopt;
}

struct HypothesisPair {
  std::string pair_id;
  std::string table_id;
  std::string hypothesis;
  Label label = Label::Unknown;
};

namespace detail {

inline std::string locate(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line) + ": ";
}

inline nlohmann::json parse_object(const std::string& line,
                                   const std::string& where) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedInput(where + "invalid JSON (" + e.what() + ")");
  }
  if (!obj.is_object()) throw MalformedInput(where + "record is not an object");
  return obj;
}

inline std::string required_string(const nlohmann::json& obj,
                                   const char* field,
                                   const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end() || !it->is_string())
    throw MalformedInput(where + "missing or non-string \"" + field + "\"");
  return it->get<std::string>();
}

template <typename Fn>
void for_each_record(std::istream& in, std::string_view source, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    fn(line, locate(source, lineno));
  }
}

}  // namespace detail

/// Parses one table record. Duplicate keys (after normalization) are merged
/// into the first occurrence; indices are then renumbered so that
/// rows[i].index == i.
inline TableDocument parse_table_record(const std::string& line,
                                        const std::string& where) {
  auto obj = detail::parse_object(line, where);
  TableDocument doc;
  doc.id = detail::required_string(obj, "id", where);
  doc.title = std::string(text::trim(detail::required_string(obj, "title", where)));
  if (auto it = obj.find("category"); it != obj.end() && !it->is_null()) {
    if (!it->is_string())
      throw MalformedInput(where + "\"category\" must be a string");
    doc.category = std::string(text::trim(it->get<std::string>()));
  }
  if (text::trim(doc.id).empty()) throw MalformedInput(where + "empty \"id\"");
  if (doc.title.empty()) throw MalformedInput(where + "empty \"title\"");

  auto rows = obj.find("rows");
  if (rows == obj.end() || !rows->is_array())
    throw MalformedInput(where + "missing \"rows\" array");
  if (rows->empty()) throw EmptyTable(where + "table \"" + doc.id + "\" has no rows");

  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t r = 0; r < rows->size(); ++r) {
    const auto& row = (*rows)[r];
    std::string rwhere = where + "rows[" + std::to_string(r) + "]: ";
    if (!row.is_object()) throw MalformedInput(rwhere + "row is not an object");
    std::string key(text::trim(detail::required_string(row, "key", rwhere)));
    if (key.empty()) throw MalformedInput(rwhere + "empty key");
    auto vals = row.find("values");
    if (vals == row.end() || !vals->is_array() || vals->empty())
      throw MalformedInput(rwhere + "\"values\" must be a non-empty array");
    std::vector<std::string> values;
    for (const auto& v : *vals) {
      if (!v.is_string()) throw MalformedInput(rwhere + "non-string value");
      auto s = v.get<std::string>();
      if (text::trim(s).empty()) throw MalformedInput(rwhere + "empty value");
      values.push_back(std::move(s));
    }
    auto norm = normalize_key(key).text;
    if (norm.empty()) throw MalformedInput(rwhere + "key normalizes to empty");
    if (auto hit = seen.find(norm); hit != seen.end()) {
      auto& target = doc.rows[hit->second].values;
      target.insert(target.end(), values.begin(), values.end());
      continue;
    }
    seen.emplace(std::move(norm), doc.rows.size());
    doc.rows.push_back(RowEntry{std::move(key), std::move(values), doc.rows.size()});
  }
  return doc;
}

inline std::vector<TableDocument> parse_tables(std::istream& in,
                                               std::string_view source) {
  std::vector<TableDocument> out;
  detail::for_each_record(in, source, [&](const std::string& line,
                                          const std::string& where) {
    out.push_back(parse_table_record(line, where));
  });
  return out;
}

inline std::vector<TableDocument> parse_table_file(const std::string& path) {
  auto in = text::open_input(path);
  return parse_tables(in, path);
}

inline HypothesisPair parse_pair_record(const std::string& line,
                                        const std::string& where) {
  auto obj = detail::parse_object(line, where);
  HypothesisPair p;
  p.pair_id = detail::required_string(obj, "pair_id", where);
  p.table_id = detail::required_string(obj, "table_id", where);
  p.hypothesis = detail::required_string(obj, "hypothesis", where);
  if (text::trim(p.pair_id).empty()) throw MalformedInput(where + "empty \"pair_id\"");
  if (text::trim(p.hypothesis).empty())
    throw MalformedInput(where + "empty \"hypothesis\"");
  if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw MalformedInput(where + "\"label\" must be a string");
    auto code = it->get<std::string>();
    auto label = parse_label(code);
    if (!label) throw MalformedInput(where + "unknown label \"" + code + "\"");
    p.label = *label;
  }
  return p;
}

inline std::vector<HypothesisPair> parse_pairs(std::istream& in,
                                               std::string_view source) {
  std::vector<HypothesisPair> out;
  detail::for_each_record(in, source, [&](const std::string& line,
                                          const std::string& where) {
    out.push_back(parse_pair_record(line, where));
  });
  return out;
}

inline std::vector<HypothesisPair> parse_pairs_file(const std::string& path) {
  auto in = text::open_input(path);
  return parse_pairs(in, path);
}

/// Canonical single-line form; parse_table_record(serialize_table(t)) == t.
inline std::string serialize_table(const TableDocument& doc) {
  nlohmann::ordered_json obj;
  obj["id"] = doc.id;
  obj["title"] = doc.title;
  obj["category"] = doc.category;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : doc.rows) {
    nlohmann::ordered_json row;
    row["key"] = r.key;
    row["values"] = r.values;
    rows.push_back(std::move(row));
  }
  obj["rows"] = std::move(rows);
  return obj.dump();
}

}  // namespace tabprem

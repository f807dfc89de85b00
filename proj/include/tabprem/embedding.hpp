#pragma once

// Static word vectors and the cosine similarity used throughout.
//
// Vector file: optional "<count> <dim>" header, then "word v1 ... vD" per
// line, space separated. Components are kept in double precision.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tabprem/error.hpp"
#include "tabprem/text.hpp"

namespace tabprem {

class EmbeddingVector {
public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> components)
      : components_(std::move(components)) {
    for (double c : components_)
      if (!std::isfinite(c)) throw MalformedInput("non-finite vector component");
  }

  std::size_t dim() const { return components_.size(); }
  std::span<const double> components() const { return components_; }
  double operator[](std::size_t i) const { return components_[i]; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

private:
  std::vector<double> components_;
};

namespace detail {

inline double cosine_span(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionMismatch("cosine of " + std::to_string(a.size()) + "-dim and " +
                            std::to_string(b.size()) + "-dim vectors");
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) throw ZeroVector("cosine of an all-zero vector");
  auto c = static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace detail

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  return detail::cosine_span(a.components(), b.components());
}

/// Component-wise mean; empty input yields an empty vector.
inline EmbeddingVector mean_of(std::span<const EmbeddingVector> vs) {
  if (vs.empty()) return {};
  std::vector<double> acc(vs.front().dim(), 0.0);
  for (const auto& v : vs) {
    if (v.dim() != acc.size()) throw DimensionMismatch("mean of mixed dimensions");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  for (auto& x : acc) x /= static_cast<double>(vs.size());
  return EmbeddingVector(std::move(acc));
}

/// Immutable after load. Lookup lowercases the query and matches exactly;
/// the vocabulary itself is stored as written in the file.
class EmbeddingTable {
public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  /// Returns false (and keeps the first entry) for a repeated word.
  bool insert(std::string word, EmbeddingVector v) {
    if (dim_ == 0) dim_ = v.dim();
    if (v.dim() != dim_)
      throw DimensionMismatch("vector for \"" + word + "\" has dim " +
                              std::to_string(v.dim()) + ", expected " +
                              std::to_string(dim_));
    if (index_.count(word)) return false;
    index_.emplace(word, vectors_.size());
    words_.push_back(std::move(word));
    vectors_.push_back(std::move(v));
    return true;
  }

  const EmbeddingVector* find(std::string_view word) const {
    auto it = index_.find(text::lower(word));
    return it == index_.end() ? nullptr : &vectors_[it->second];
  }

  std::optional<EmbeddingVector> lookup(std::string_view word) const {
    if (const auto* v = find(word)) return *v;
    return std::nullopt;
  }

private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::vector<EmbeddingVector> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline bool parse_double(std::string_view tok, double& out) {
  auto* first = tok.data();
  auto* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

inline bool is_header_line(const std::vector<std::string>& toks) {
  if (toks.size() != 2) return false;
  for (const auto& t : toks)
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) return false;
  return true;
}

}  // namespace detail

inline EmbeddingTable parse_vectors(std::istream& in, std::string_view source) {
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  std::size_t declared_dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto toks = text::split_ws(line);
    if (toks.empty()) continue;
    if (lineno == 1 && detail::is_header_line(toks)) {
      declared_dim = std::stoul(toks[1]);
      table = EmbeddingTable(declared_dim);
      continue;
    }
    auto where = std::string(source) + ":" + std::to_string(lineno) + ": ";
    if (toks.size() < 2) throw MalformedInput(where + "vector line without components");
    std::vector<double> comps(toks.size() - 1);
    for (std::size_t i = 1; i < toks.size(); ++i)
      if (!detail::parse_double(toks[i], comps[i - 1]))
        throw MalformedInput(where + "bad component \"" + toks[i] + "\"");
    if (declared_dim && comps.size() != declared_dim)
      throw MalformedInput(where + "expected " + std::to_string(declared_dim) +
                           " components, got " + std::to_string(comps.size()));
    try {
      table.insert(std::move(toks[0]), EmbeddingVector(std::move(comps)));
    } catch (const Error& e) {
      throw MalformedInput(where + e.what());
    }
  }
  return table;
}

inline EmbeddingTable load_vectors(const std::string& path) {
  auto in = text::open_input(path);
  return parse_vectors(in, path);
}

inline std::optional<EmbeddingVector> static_lookup(const EmbeddingTable& table,
                                                    std::string_view word) {
  return table.lookup(word);
}

/// Copies the header and every vector line whose word (lowercased) is in
/// `vocab`, byte for byte. Returns the number of vectors kept.
inline std::size_t trim_vectors(std::istream& in,
                                const std::unordered_set<std::string>& vocab,
                                std::ostream& out) {
  std::vector<std::string> kept;
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto space = line.find(' ');
    if (lineno == 1) {
      auto toks = text::split_ws(line);
      if (detail::is_header_line(toks)) {
        dim = std::stoul(toks[1]);
        continue;
      }
    }
    if (space == std::string::npos) continue;
    if (!dim) dim = text::split_ws(line).size() - 1;
    if (vocab.count(text::lower(std::string_view(line).substr(0, space))))
      kept.push_back(line);
  }
  out << kept.size() << ' ' << dim << '\n';
  for (const auto& k : kept) out << k << '\n';
  return kept.size();
}

}  // namespace tabprem

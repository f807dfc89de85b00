#pragma once

// Stage orchestration (render -> row removal -> key definitions), premise
// records, token budgeting, dataset statistics, prediction diffs and the
// two-stage training manifest.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tabprem/embedding.hpp"
#include "tabprem/error.hpp"
#include "tabprem/gateway.hpp"
#include "tabprem/knowledge.hpp"
#include "tabprem/relevance.hpp"
#include "tabprem/renderer.hpp"
#include "tabprem/table.hpp"
#include "tabprem/text.hpp"

namespace tabprem {

/// ceil(1.4 * whitespace tokens) + 2, in integer arithmetic.
inline std::size_t estimate_tokens(std::string_view premise) {
  const std::size_t n = text::split_ws(premise).size();
  return (14 * n + 9) / 10 + 2;
}

enum class OutputFormat { Para, Struc };

struct StageSet {
  bool bpr = false;
  bool drr = false;
  bool kg_explicit = false;

  /// Comma-separated subset of {bpr, drr, kg}; empty string is the empty set.
  static StageSet parse(std::string_view spec) {
    StageSet s;
    std::size_t start = 0;
    while (start <= spec.size()) {
      auto end = spec.find(',', start);
      if (end == std::string_view::npos) end = spec.size();
      auto name = text::lower(text::trim(spec.substr(start, end - start)));
      if (name == "bpr") s.bpr = true;
      else if (name == "drr") s.drr = true;
      else if (name == "kg" || name == "kg_explicit") s.kg_explicit = true;
      else if (!name.empty()) throw ConfigError("unknown stage \"" + name + "\"");
      start = end + 1;
    }
    return s;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    if (bpr) out.emplace_back("BPR");
    if (drr) out.emplace_back("DRR");
    if (kg_explicit) out.emplace_back("KG_EXPLICIT");
    return out;
  }
};

struct PipelineConfig {
  StageSet stages;
  /// Only recorded in the training manifest; no preprocessing effect.
  bool kg_implicit = true;
  std::size_t k = 4;
  std::size_t token_budget = 512;
  OutputFormat format = OutputFormat::Para;
  std::string vectors_path;
  std::string stopwords_path;
  std::string registry_path;
  std::string inventory_path;
  std::string gateway_url;
  std::string gateway_cache_path;
  bool static_fallback = false;
  bool tidy_punct = false;
  std::size_t workers = 1;

  void validate() const {
    if (k == 0) throw ConfigError("k must be at least 1");
    if (token_budget == 0) throw ConfigError("token budget must be positive");
    if (stages.kg_explicit && inventory_path.empty())
      throw ConfigError("the kg stage requires --inventory");
    if (stages.drr && vectors_path.empty()) throw ConfigError("the drr stage requires --vectors");
    if (static_fallback && vectors_path.empty())
      throw ConfigError("static fallback requires --vectors");
    if (format == OutputFormat::Struc && (stages.bpr || stages.kg_explicit))
      throw ConfigError("struc output excludes the bpr and kg stages");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["stages"] = stages.names();
    j["kg_implicit"] = kg_implicit;
    j["k"] = k;
    j["token_budget"] = token_budget;
    j["format"] = format == OutputFormat::Para ? "PARA" : "STRUC";
    j["vectors"] = vectors_path;
    j["stopwords"] = stopwords_path;
    j["registry"] = registry_path;
    j["inventory"] = inventory_path;
    j["gateway"] = gateway_url;
    j["gateway_cache"] = gateway_cache_path;
    j["static_fallback"] = static_fallback;
    j["tidy_punct"] = tidy_punct;
    return j;
  }
};

struct PremiseRecord {
  std::string pair_id;
  std::string table_id;
  std::string hypothesis;
  Label label = Label::Unknown;
  std::string premise;
  std::vector<std::string> retained_keys;
  /// DRR scores aligned with retained_keys; empty when DRR did not run.
  std::vector<double> scores;
  std::size_t token_estimate = 0;
  std::size_t definition_tokens = 0;
  bool over_budget = false;
  std::vector<std::string> stages_applied;
  std::size_t sentence_count = 0;
  std::size_t fallbacks = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["pair_id"] = pair_id;
    j["table_id"] = table_id;
    j["hypothesis"] = hypothesis;
    if (label != Label::Unknown) j["label"] = std::string(label_code(label));
    j["premise"] = premise;
    j["retained_keys"] = retained_keys;
    j["scores"] = scores;
    j["token_estimate"] = token_estimate;
    j["over_budget"] = over_budget;
    j["stages_applied"] = stages_applied;
    return j;
  }
};

/// Everything loaded once and shared read-only by the workers (the gateway's
/// cache is internally synchronized).
struct PipelineResources {
  TemplateRegistry registry;
  StopWordSet stopwords = default_stopwords();
  std::optional<EmbeddingTable> vectors;
  std::optional<SenseInventory> inventory;
  std::unique_ptr<EmbeddingGateway> gateway;

  static PipelineResources load(const PipelineConfig& cfg) {
    PipelineResources r;
    if (!cfg.registry_path.empty()) r.registry = load_registry(cfg.registry_path);
    if (!cfg.stopwords_path.empty()) r.stopwords = load_stopwords(cfg.stopwords_path);
    if (!cfg.vectors_path.empty()) r.vectors = load_vectors(cfg.vectors_path);
    if (!cfg.inventory_path.empty()) r.inventory = load_inventory(cfg.inventory_path);
    std::unique_ptr<ContextualEmbedder> remote;
    if (!cfg.gateway_url.empty()) remote = std::make_unique<HttpEmbedClient>(cfg.gateway_url);
    r.gateway = std::make_unique<EmbeddingGateway>(std::move(remote));
    if (!cfg.gateway_cache_path.empty()) {
      std::ifstream probe(cfg.gateway_cache_path);
      if (probe) r.gateway->cache().load(probe, cfg.gateway_cache_path);
    }
    return r;
  }
};

/// Builds one premise record. Throws on per-pair failures (missing category,
/// empty hypothesis, unavailable gateway without fallback).
inline PremiseRecord process_pair(const PipelineConfig& cfg, const PipelineResources& res,
                                  const TableDocument& table, const HypothesisPair& pair) {
  PremiseRecord rec;
  rec.pair_id = pair.pair_id;
  rec.table_id = table.id;
  rec.hypothesis = pair.hypothesis;
  rec.label = pair.label;
  rec.stages_applied = cfg.stages.names();
  if (cfg.stages.drr && !res.vectors) throw ConfigError("the drr stage needs loaded vectors");
  if (cfg.stages.kg_explicit && !res.inventory)
    throw ConfigError("the kg stage needs a loaded inventory");

  const auto mode = cfg.stages.bpr ? RenderMode::Bpr : RenderMode::Universal;
  PremiseParagraph para = render_paragraph(table, res.registry, mode);

  if (cfg.stages.drr) {
    auto ranking = rank_rows(pair.hypothesis, para, *res.vectors, res.stopwords, pair.pair_id);
    para = select_top_k(ranking, para, SelectionConfig{cfg.k});
    std::size_t taken = 0;
    for (const auto& e : ranking.entries) {
      if (taken++ == cfg.k) break;
      rec.retained_keys.push_back(table.rows.at(e.row_index).key);
      rec.scores.push_back(e.score);
    }
  } else {
    for (const auto& row : table.rows) rec.retained_keys.push_back(row.key);
  }

  if (cfg.format == OutputFormat::Struc) {
    std::vector<std::size_t> order;
    for (const auto& s : para.sentences)
      if (s.is_row()) order.push_back(static_cast<std::size_t>(s.source_index));
    rec.premise = render_struc(table, &order);
    rec.sentence_count = order.size();
  } else {
    if (cfg.stages.kg_explicit) {
      AugmentOptions opts;
      opts.tidy_punct = cfg.tidy_punct;
      if (cfg.static_fallback && res.vectors) opts.disambiguation.static_fallback = &*res.vectors;
      auto aug = augment_premise(para, *res.inventory, *res.gateway, opts);
      rec.fallbacks = aug.fallbacks;
      for (const auto& a : aug.augmentations)
        rec.definition_tokens += estimate_tokens(a.rendered.sentence);
      para = std::move(aug.paragraph);
    }
    rec.premise = para.text();
    rec.sentence_count = para.sentences.size();
  }
  rec.token_estimate = estimate_tokens(rec.premise);
  rec.over_budget = rec.token_estimate > cfg.token_budget;
  return rec;
}

struct PipelineSummary {
  std::size_t pairs_total = 0;
  std::size_t pairs_written = 0;
  std::size_t pairs_failed = 0;
  std::size_t over_budget = 0;
  std::size_t gateway_fallbacks = 0;
  /// Estimated tokens contributed by appended key definitions.
  std::size_t definition_tokens = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["pairs_total"] = pairs_total;
    j["pairs_written"] = pairs_written;
    j["pairs_failed"] = pairs_failed;
    j["over_budget"] = over_budget;
    j["gateway_fallbacks"] = gateway_fallbacks;
    j["definition_tokens"] = definition_tokens;
    return j;
  }
};

inline std::string errors_path_for(const std::string& out_path) {
  return out_path + ".errors.jsonl";
}

/// One record per pair in input order. Per-pair failures go to
/// `<out>.errors.jsonl` and processing continues.
inline PipelineSummary run_pipeline(const PipelineConfig& cfg, const std::string& tables_path,
                                    const std::string& pairs_path, const std::string& out_path) {
  cfg.validate();
  const auto tables = parse_table_file(tables_path);
  const auto pairs = parse_pairs_file(pairs_path);
  std::unordered_map<std::string, const TableDocument*> by_id;
  for (const auto& t : tables)
    if (!by_id.emplace(t.id, &t).second)
      throw MalformedInput(tables_path + ": duplicate table id \"" + t.id + "\"");
  auto res = PipelineResources::load(cfg);

  struct Outcome {
    std::optional<PremiseRecord> record;
    std::string error_kind;
    std::string error_message;
  };
  std::vector<Outcome> outcomes(pairs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < pairs.size(); i = next++) {
      const auto& pair = pairs[i];
      try {
        auto it = by_id.find(pair.table_id);
        if (it == by_id.end())
          throw DanglingTableRef("pair \"" + pair.pair_id + "\" references unknown table \"" +
                                 pair.table_id + "\"");
        outcomes[i].record = process_pair(cfg, res, *it->second, pair);
      } catch (const Error& e) {
        outcomes[i].error_kind = e.kind();
        outcomes[i].error_message = e.what();
      } catch (const std::exception& e) {
        outcomes[i].error_kind = "InternalError";
        outcomes[i].error_message = e.what();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n = std::max<std::size_t>(1, std::min(cfg.workers, pairs.size()));
    for (std::size_t w = 1; w < n; ++w) pool.emplace_back(work);
    work();
  }

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw MalformedInput(out_path + ": cannot write output");
  std::ofstream errs(errors_path_for(out_path), std::ios::binary);
  if (!errs) throw MalformedInput(errors_path_for(out_path) + ": cannot write error file");

  PipelineSummary sum;
  sum.pairs_total = pairs.size();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& o = outcomes[i];
    if (o.record) {
      out << o.record->to_json().dump() << '\n';
      ++sum.pairs_written;
      sum.over_budget += o.record->over_budget;
      sum.gateway_fallbacks += o.record->fallbacks;
      sum.definition_tokens += o.record->definition_tokens;
    } else {
      nlohmann::ordered_json e;
      e["pair_id"] = pairs[i].pair_id;
      e["kind"] = o.error_kind;
      e["message"] = o.error_message;
      errs << e.dump() << '\n';
      ++sum.pairs_failed;
    }
  }
  if (res.gateway && res.gateway->has_remote() && !cfg.gateway_cache_path.empty())
    res.gateway->cache().save_file(cfg.gateway_cache_path);
  return sum;
}

// ---------------------------------------------------------------------------
// Dataset statistics

struct SplitStats {
  std::string name;
  std::size_t tables = 0;
  std::size_t rows = 0;
  double mean_keys = 0.0;
  std::size_t distinct_keys = 0;
  std::size_t overlap_with_train = 0;
};

struct StatsReport {
  std::string train_split;
  std::vector<SplitStats> splits;

  const SplitStats* find(std::string_view name) const {
    for (const auto& s : splits)
      if (s.name == name) return &s;
    return nullptr;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["train_split"] = train_split;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : splits) {
      nlohmann::ordered_json o;
      o["split"] = s.name;
      o["tables"] = s.tables;
      o["mean_keys_per_table"] = std::round(s.mean_keys * 10.0) / 10.0;
      o["distinct_keys"] = s.distinct_keys;
      o["overlap_with_train"] = s.overlap_with_train;
      arr.push_back(std::move(o));
    }
    j["splits"] = std::move(arr);
    return j;
  }
};

inline std::set<std::string> key_set(const std::vector<TableDocument>& tables) {
  std::set<std::string> keys;
  for (const auto& t : tables)
    for (const auto& r : t.rows) keys.insert(normalize_key(r.key).text);
  return keys;
}

inline StatsReport compute_stats(const std::vector<std::pair<std::string, std::vector<TableDocument>>>& splits,
                                 const std::string& train_split) {
  const std::vector<TableDocument>* train = nullptr;
  for (const auto& [name, tables] : splits)
    if (name == train_split) train = &tables;
  if (!train) throw ConfigError("train split \"" + train_split + "\" not among the splits");
  const auto train_keys = key_set(*train);

  StatsReport report{train_split, {}};
  for (const auto& [name, tables] : splits) {
    SplitStats s;
    s.name = name;
    s.tables = tables.size();
    for (const auto& t : tables) s.rows += t.rows.size();
    s.mean_keys = s.tables ? static_cast<double>(s.rows) / static_cast<double>(s.tables) : 0.0;
    const auto keys = key_set(tables);
    s.distinct_keys = keys.size();
    for (const auto& k : keys) s.overlap_with_train += train_keys.count(k);
    report.splits.push_back(std::move(s));
  }
  return report;
}

inline StatsReport compute_stats(const std::vector<std::pair<std::string, std::string>>& split_paths,
                                 const std::string& train_split) {
  std::vector<std::pair<std::string, std::vector<TableDocument>>> loaded;
  for (const auto& [name, path] : split_paths) loaded.emplace_back(name, parse_table_file(path));
  return compute_stats(loaded, train_split);
}

// ---------------------------------------------------------------------------
// Prediction comparison

/// Shares of pairs by correctness of prediction files A and B (percent of
/// all pairs).
struct CrossTable {
  std::size_t total = 0;
  double a_only = 0, b_only = 0, both = 0, neither = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["pairs"] = total;
    j["a_correct_b_wrong"] = a_only;
    j["a_wrong_b_correct"] = b_only;
    j["both_correct"] = both;
    j["both_wrong"] = neither;
    return j;
  }
};

/// JSON-lines {"pair_id", "label"}; pairs files work as gold files.
inline std::map<std::string, std::string> load_labels(const std::string& path) {
  std::map<std::string, std::string> out;
  auto in = text::open_input(path);
  detail::for_each_record(in, path, [&](const std::string& line, const std::string& where) {
    auto obj = detail::parse_object(line, where);
    auto id = detail::required_string(obj, "pair_id", where);
    auto label = detail::required_string(obj, "label", where);
    if (!out.emplace(id, label).second)
      throw MalformedInput(where + "duplicate pair_id \"" + id + "\"");
  });
  return out;
}

inline CrossTable compare_predictions(const std::map<std::string, std::string>& gold,
                                      const std::map<std::string, std::string>& a,
                                      const std::map<std::string, std::string>& b) {
  std::vector<std::string> problems;
  auto check = [&](const std::map<std::string, std::string>& preds, const char* name) {
    for (const auto& [id, _] : gold)
      if (!preds.count(id)) problems.push_back(std::string(name) + " missing " + id);
    for (const auto& [id, _] : preds)
      if (!gold.count(id)) problems.push_back(std::string(name) + " extra " + id);
  };
  check(a, "A");
  check(b, "B");
  if (!problems.empty()) throw PairMismatch(text::join(problems, ", "));

  std::size_t n[4] = {0, 0, 0, 0};
  for (const auto& [id, label] : gold) {
    const bool ca = a.at(id) == label;
    const bool cb = b.at(id) == label;
    ++n[(ca ? 0 : 2) + (cb ? 1 : 0)];
  }
  CrossTable t;
  t.total = gold.size();
  if (t.total) {
    const double scale = 100.0 / static_cast<double>(t.total);
    t.both = n[1] * scale;
    t.a_only = n[0] * scale;
    t.neither = n[2] * scale;
    t.b_only = n[3] * scale;
  }
  return t;
}

inline CrossTable compare_predictions(const std::string& gold_path, const std::string& a_path,
                                      const std::string& b_path) {
  return compare_predictions(load_labels(gold_path), load_labels(a_path), load_labels(b_path));
}

// ---------------------------------------------------------------------------
// Training manifest

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_fingerprint(const PipelineConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.to_json().dump())));
  return buf;
}

/// Stage 1 pre-trains on MultiNLI (when kg_implicit is on), the next stage
/// fine-tunes on the emitted premise file. Consumed by external trainers.
inline nlohmann::ordered_json emit_training_manifest(const PipelineConfig& cfg,
                                                     const std::string& premises_path) {
  nlohmann::ordered_json m;
  m["fingerprint"] = config_fingerprint(cfg);
  auto stages = nlohmann::ordered_json::array();
  if (cfg.kg_implicit) {
    nlohmann::ordered_json s;
    s["stage"] = 1;
    s["name"] = "multinli";
    s["source"] = "multinli_1.0";
    s["purpose"] = "pre-train on sentence-level NLI";
    stages.push_back(std::move(s));
  }
  nlohmann::ordered_json s;
  s["stage"] = stages.size() + 1;
  s["name"] = "infotabs-processed";
  s["source"] = premises_path;
  s["purpose"] = "fine-tune on table premises";
  stages.push_back(std::move(s));
  m["stages"] = std::move(stages);
  m["config"] = cfg.to_json();
  return m;
}

}  // namespace tabprem

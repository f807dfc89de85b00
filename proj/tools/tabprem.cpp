// tabprem: table premise preprocessing.
//
//   tabprem run --tables F --pairs F --out F --stages bpr,drr,kg --k 4 \
//       --budget 512 --vectors F --stopwords F --registry F --inventory F \
//       --gateway URL --gateway-cache F
//   tabprem stats --train F --split dev=F --split alpha3=F
//   tabprem diff-preds --gold F --a F --b F
//   tabprem manifest --premises F --out F [run flags]
//   tabprem trim-vectors --vectors F --corpus F [--corpus F ...] --out F
//
// Exit codes: 0 success, 1 fatal input error, 2 configuration error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tabprem/tabprem.hpp"

namespace {

constexpr int kExitInput = 1;
constexpr int kExitConfig = 2;

std::string default_data_file(const char* name) {
  std::filesystem::path p = std::filesystem::path(TABPREM_DATA_DIR) / name;
  return std::filesystem::exists(p) ? p.string() : std::string();
}

struct RunFlags {
  std::string stages;
  std::string format = "para";
  bool no_kg_implicit = false;
  tabprem::PipelineConfig cfg;

  void attach(CLI::App* app) {
    cfg.registry_path = default_data_file("templates.jsonl");
    app->add_option("--stages", stages, "comma-separated subset of bpr,drr,kg (empty: universal)");
    app->add_option("--k", cfg.k, "rows kept by drr")->capture_default_str();
    app->add_option("--budget", cfg.token_budget, "token budget")->capture_default_str();
    app->add_option("--vectors", cfg.vectors_path, "static word vectors (text format)");
    app->add_option("--stopwords", cfg.stopwords_path, "stop-word list (default: built in)");
    app->add_option("--registry", cfg.registry_path, "template registry")->capture_default_str();
    app->add_option("--inventory", cfg.inventory_path, "sense inventory");
    app->add_option("--gateway", cfg.gateway_url, "contextual embedding sidecar URL");
    app->add_option("--gateway-cache", cfg.gateway_cache_path,
                    "embedding cache to replay (and update when --gateway is set)");
    app->add_option("--format", format, "para or struc")->capture_default_str();
    app->add_flag("--static-fallback", cfg.static_fallback,
                  "disambiguate with static vectors when the gateway is unavailable");
    app->add_flag("--tidy-punct", cfg.tidy_punct, "no space before the period of KEY sentences");
    app->add_flag("--no-kg-implicit", no_kg_implicit, "manifest without MultiNLI pre-training");
    app->add_option("--workers", cfg.workers, "worker threads")->capture_default_str();
  }

  const tabprem::PipelineConfig& finish() {
    cfg.stages = tabprem::StageSet::parse(stages);
    cfg.kg_implicit = !no_kg_implicit;
    if (format == "para") cfg.format = tabprem::OutputFormat::Para;
    else if (format == "struc") cfg.format = tabprem::OutputFormat::Struc;
    else throw tabprem::ConfigError("unknown --format \"" + format + "\"");
    cfg.validate();
    return cfg;
  }
};

void collect_strings(const nlohmann::json& j, std::unordered_set<std::string>& vocab) {
  if (j.is_string()) {
    for (auto& t : tabprem::tokenize(j.get<std::string>())) vocab.insert(std::move(t));
  } else if (j.is_structured()) {
    for (const auto& v : j) collect_strings(v, vocab);
  }
}

int run_trim(const std::string& vectors, const std::vector<std::string>& corpora,
             const std::string& out_path) {
  std::unordered_set<std::string> vocab;
  for (auto& t : tabprem::tokenize(tabprem::kUniversalPattern)) vocab.insert(t);
  for (const char* w : {"is", "a", "an"}) vocab.insert(w);
  for (const auto& path : corpora) {
    auto in = tabprem::text::open_input(path);
    std::string line;
    while (std::getline(in, line)) {
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.is_structured()) {
        collect_strings(j, vocab);
      } else {
        for (auto& t : tabprem::tokenize(line)) vocab.insert(std::move(t));
      }
    }
  }
  auto in = tabprem::text::open_input(vectors);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw tabprem::MalformedInput(out_path + ": cannot write");
  auto kept = tabprem::trim_vectors(in, vocab, out);
  std::cerr << "kept " << kept << " vectors for " << vocab.size() << " corpus tokens\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table premise preprocessing for tabular NLI"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "render premises for hypothesis pairs");
  std::string tables, pairs, out;
  RunFlags run_flags;
  run->add_option("--tables", tables, "tables JSON-lines")->required();
  run->add_option("--pairs", pairs, "pairs JSON-lines")->required();
  run->add_option("--out", out, "output premise records")->required();
  run_flags.attach(run);

  auto* stats = app.add_subcommand("stats", "dataset statistics against a train split");
  std::string train;
  std::vector<std::string> split_args;
  stats->add_option("--train", train, "train split tables")->required();
  stats->add_option("--split", split_args, "name=tables file (repeatable)");

  auto* diff = app.add_subcommand("diff-preds", "cross-tabulate two prediction files");
  std::string gold, pred_a, pred_b;
  diff->add_option("--gold", gold)->required();
  diff->add_option("--a", pred_a)->required();
  diff->add_option("--b", pred_b)->required();

  auto* manifest = app.add_subcommand("manifest", "emit the two-stage training manifest");
  std::string premises, manifest_out;
  RunFlags manifest_flags;
  manifest->add_option("--premises", premises, "premise records file")->required();
  manifest->add_option("--out", manifest_out, "manifest path")->required();
  manifest_flags.attach(manifest);

  auto* trim = app.add_subcommand("trim-vectors", "keep only vectors for corpus tokens");
  std::string vectors, trim_out;
  std::vector<std::string> corpora;
  trim->add_option("--vectors", vectors)->required();
  trim->add_option("--corpus", corpora, "text or JSON-lines files")->required();
  trim->add_option("--out", trim_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      const auto& cfg = run_flags.finish();
      auto summary = tabprem::run_pipeline(cfg, tables, pairs, out);
      if (summary.over_budget)
        std::cerr << "warning: " << summary.over_budget << " premise(s) exceed the budget of "
                  << cfg.token_budget << " tokens\n";
      if (summary.pairs_failed)
        std::cerr << "warning: " << summary.pairs_failed << " pair(s) failed, see "
                  << tabprem::errors_path_for(out) << "\n";
      std::cout << summary.to_json().dump(2) << "\n";
    } else if (*stats) {
      std::vector<std::pair<std::string, std::string>> splits{{"train", train}};
      for (const auto& arg : split_args) {
        auto eq = arg.find('=');
        if (eq == std::string::npos || eq == 0)
          throw tabprem::ConfigError("--split expects name=file, got \"" + arg + "\"");
        splits.emplace_back(arg.substr(0, eq), arg.substr(eq + 1));
      }
      std::cout << tabprem::compute_stats(splits, "train").to_json().dump(2) << "\n";
    } else if (*diff) {
      std::cout << tabprem::compare_predictions(gold, pred_a, pred_b).to_json().dump(2) << "\n";
    } else if (*manifest) {
      const auto& cfg = manifest_flags.finish();
      std::ofstream os(manifest_out, std::ios::binary);
      if (!os) throw tabprem::MalformedInput(manifest_out + ": cannot write");
      os << tabprem::emit_training_manifest(cfg, premises).dump(2) << "\n";
    } else if (*trim) {
      return run_trim(vectors, corpora, trim_out);
    }
  } catch (const tabprem::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const tabprem::Error& e) {
    std::cerr << e.kind() << ": " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}

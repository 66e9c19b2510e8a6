#pragma once

#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefkit/core.hpp"
#include "prefkit/decontam.hpp"
#include "prefkit/ingest.hpp"
#include "prefkit/safety.hpp"
#include "prefkit/select.hpp"
#include "prefkit/stats.hpp"
#include "prefkit/trainer.hpp"

namespace prefkit {

// Process exit codes shared by every CLI subcommand.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitIngest = 3, kExitStage = 4 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const IngestError*>(&e)) return kExitIngest;
  return kExitStage;
}

enum class InputKind { helpsteer2, magpie, safety, passthrough };

inline std::optional<InputKind> parse_input_kind(std::string_view s) {
  if (s == "helpsteer2") return InputKind::helpsteer2;
  if (s == "magpie") return InputKind::magpie;
  if (s == "safety") return InputKind::safety;
  if (s == "passthrough") return InputKind::passthrough;
  return std::nullopt;
}

struct PipelineInput {
  InputKind kind = InputKind::passthrough;
  std::filesystem::path path;
  RecordSchema schema;                              // pair-shaped inputs
  SafetyOptions safety;                             // safety input
  std::optional<std::filesystem::path> judgments;   // safety stage 2; skipped when absent
};

struct PipelineConfig {
  std::vector<PipelineInput> inputs;
  SelectionConfig selection;
  std::optional<std::filesystem::path> eval_prompts;  // decontamination reference; skipped when absent
  int n_min = kDefaultNgramMin;
  int n_max = kDefaultNgramMax;
  std::optional<std::filesystem::path> vocabulary;    // whitespace tokenizer when absent
  TrainConfig train;
  std::filesystem::path output_dir = "out";

  // Relative paths resolve against `base`, normally the config file's directory.
  static PipelineConfig from_json(const json& j, const std::filesystem::path& base = ".") {
    const auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() ? path : base / path;
    };
    PipelineConfig c;
    try {
      if (auto it = j.find("inputs"); it != j.end()) {
        for (const auto& in : *it) {
          PipelineInput pi;
          const auto kind_name = in.at("kind").get<std::string>();
          auto kind = parse_input_kind(kind_name);
          if (!kind) throw ConfigError("unknown input kind: " + kind_name);
          pi.kind = *kind;
          pi.path = resolve(in.at("path").get<std::string>());
          if (in.contains("schema")) pi.schema = RecordSchema::from_json(in.at("schema"));
          if (pi.kind == InputKind::safety) {
            pi.safety.source = in.value("source", pi.safety.source);
            if (in.contains("max_pairs_per_prompt") && !in.at("max_pairs_per_prompt").is_null()) {
              pi.safety.max_pairs_per_prompt = in.at("max_pairs_per_prompt").get<std::size_t>();
            }
            if (in.contains("judgments")) pi.judgments = resolve(in.at("judgments").get<std::string>());
          }
          c.inputs.push_back(std::move(pi));
        }
      }
      if (auto it = j.find("selection"); it != j.end()) c.selection = SelectionConfig::from_json(*it);
      if (auto it = j.find("decontam"); it != j.end()) {
        if (it->contains("eval")) c.eval_prompts = resolve(it->at("eval").get<std::string>());
        c.n_min = it->value("n_min", c.n_min);
        c.n_max = it->value("n_max", c.n_max);
      }
      if (auto it = j.find("tokenizer"); it != j.end() && it->contains("vocabulary")) {
        c.vocabulary = resolve(it->at("vocabulary").get<std::string>());
      }
      if (auto it = j.find("train"); it != j.end()) c.train = train_config_from_json(*it);
      if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
    } catch (const json::exception& e) {
      throw ConfigError(std::string("pipeline config: ") + e.what());
    }
    NgramIndex probe(c.n_min, c.n_max);  // validates the range
    (void)probe;
    return c;
  }

  static PipelineConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError("config " + path.string() + " is not a JSON object");
    return from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  }

  // Every referenced file, so missing ones fail before any output is written.
  std::vector<std::filesystem::path> referenced_files() const {
    std::vector<std::filesystem::path> files;
    for (const auto& in : inputs) {
      files.push_back(in.path);
      if (in.judgments) files.push_back(*in.judgments);
    }
    if (eval_prompts) files.push_back(*eval_prompts);
    if (vocabulary) files.push_back(*vocabulary);
    return files;
  }
};

struct StageCount {
  std::string stage;
  std::string input;
  std::size_t in = 0;
  std::size_t out = 0;
};

struct PipelineSummary {
  std::vector<StageCount> stages;
  std::size_t selected_total = 0;  // pairs entering decontamination
  std::size_t removed = 0;
  std::size_t curated = 0;
  DatasetStats before;
  DatasetStats after;
};

inline nlohmann::ordered_json summary_json(const PipelineSummary& s) {
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& st : s.stages) {
    stages.push_back({{"stage", st.stage}, {"input", st.input}, {"in", st.in}, {"out", st.out}});
  }
  return {{"stages", stages}, {"selected_total", s.selected_total}, {"removed", s.removed}, {"curated", s.curated}};
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IngestError("write failure on " + path.string());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

}  // namespace detail

/// Runs ingest, helpfulness filtering, Magpie selection, safety pair construction and
/// filtering, concatenation, decontamination and statistics, then writes every artifact
/// into cfg.output_dir. Output depends only on the inputs and the config.
inline PipelineSummary run_pipeline(const PipelineConfig& cfg, std::ostream* log = nullptr) {
  for (const auto& f : cfg.referenced_files()) {
    if (!std::filesystem::is_regular_file(f)) throw ConfigError("referenced file not found: " + f.string());
  }
  const Tokenizer tok = cfg.vocabulary ? Tokenizer::from_vocabulary_file(*cfg.vocabulary) : Tokenizer::whitespace();

  PipelineSummary sum;
  const auto note = [&](std::string stage, const std::string& input, std::size_t in, std::size_t out) {
    if (log) *log << "[" << stage << "] " << input << ": " << in << " -> " << out << '\n';
    sum.stages.push_back({std::move(stage), input, in, out});
  };
  const auto report_skips = [&](const std::string& input, const std::vector<Skip>& skips) {
    if (!log) return;
    for (const auto& s : skips) *log << "[ingest] " << input << ":" << s.line << " skipped: " << s.reason << '\n';
  };

  std::vector<PreferencePair> raw;        // every pair before selection and filtering
  std::vector<PreferencePair> helpsteer, passthrough, safety_kept;
  std::vector<ScoredPair> magpie;

  for (const auto& in : cfg.inputs) {
    const std::string name = in.path.filename().string();
    switch (in.kind) {
      case InputKind::helpsteer2: {
        auto r = read_helpfulness_records(in.path, in.schema);
        report_skips(name, r.skips);
        note("ingest", name, r.lines, r.records.size());
        for (const auto& h : r.records) raw.push_back(h.pair);
        auto kept = helpsteer_filter(r.records);
        note("helpsteer_filter", name, r.records.size(), kept.size());
        helpsteer.insert(helpsteer.end(), kept.begin(), kept.end());
        break;
      }
      case InputKind::magpie: {
        auto r = read_pairs(in.path, in.schema);
        report_skips(name, r.skips);
        note("ingest", name, r.lines, r.records.size());
        for (const auto& p : r.records) {
          raw.push_back(p);
          magpie.push_back(score_pair(p, cfg.selection));
        }
        break;
      }
      case InputKind::safety: {
        auto r = read_safety_records(in.path, in.schema.max_skip_ratio);
        report_skips(name, r.skips);
        note("ingest", name, r.lines, r.records.size());
        auto built = build_safety_pairs(r.records, in.safety);
        note("build_safety_pairs", name, r.records.size(), built.size());
        for (const auto& sp : built) raw.push_back(sp.pair);
        auto s1 = stage1_filter(built);
        note("stage1_filter", name, built.size(), s1.size());
        if (in.judgments) {
          auto s2 = stage2_filter(s1, read_judgments(*in.judgments));
          note("stage2_filter", name, s1.size(), s2.size());
          s1 = std::move(s2);
        } else if (log) {
          *log << "[stage2_filter] " << name << ": no judgments configured, skipped\n";
        }
        auto pairs = strip_flags(s1);
        safety_kept.insert(safety_kept.end(), pairs.begin(), pairs.end());
        break;
      }
      case InputKind::passthrough: {
        auto r = read_pairs(in.path, in.schema);
        report_skips(name, r.skips);
        note("ingest", name, r.lines, r.records.size());
        raw.insert(raw.end(), r.records.begin(), r.records.end());
        passthrough.insert(passthrough.end(), r.records.begin(), r.records.end());
        break;
      }
    }
  }

  auto selection = select_top(magpie, cfg.selection);
  note("select_top", "magpie", magpie.size(), selection.selected.size());

  std::vector<PreferencePair> combined;
  combined.insert(combined.end(), helpsteer.begin(), helpsteer.end());
  combined.insert(combined.end(), passthrough.begin(), passthrough.end());
  for (const auto& sp : selection.selected) combined.push_back(sp.pair);
  combined.insert(combined.end(), safety_kept.begin(), safety_kept.end());
  note("concatenate", "all", combined.size(), combined.size());
  sum.selected_total = combined.size();

  const NgramIndex index =
      cfg.eval_prompts ? build_index(read_prompts(*cfg.eval_prompts), cfg.n_min, cfg.n_max) : NgramIndex(cfg.n_min, cfg.n_max);
  auto dec = decontaminate(combined, index);
  note("decontaminate", cfg.eval_prompts ? cfg.eval_prompts->filename().string() : "(no eval set)", combined.size(),
       dec.clean.size());
  sum.removed = dec.removed.size();
  sum.curated = dec.clean.size();

  sum.before = compute_stats(raw, tok);
  sum.after = compute_stats(dec.clean, tok);

  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw IngestError("cannot create " + cfg.output_dir.string() + ": " + ec.message());
  const auto& dir = cfg.output_dir;
  write_pairs(dec.clean, dir / "curated.jsonl");
  write_pairs(dec.removed, dir / "removed.jsonl");
  detail::write_json(dir / "contamination.json", contamination_json(dec.report));
  detail::write_text(dir / "contamination.txt", contamination_table(dec.report));
  detail::write_json(dir / "selection.json", selection_report_json(selection.report));
  detail::write_json(dir / "stats_before.json", stats_json(sum.before));
  detail::write_text(dir / "stats_before.txt", stats_table(sum.before));
  detail::write_json(dir / "stats_after.json", stats_json(sum.after));
  detail::write_text(dir / "stats_after.txt", stats_table(sum.after));
  detail::write_json(dir / "pipeline_log.json", summary_json(sum));
  return sum;
}

}  // namespace prefkit

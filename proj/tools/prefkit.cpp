// Command-line entry point: every stage runs on its own, and `pipeline` runs them all.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "prefkit/prefkit.hpp"

namespace fs = std::filesystem;
using namespace prefkit;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config " + path + " is not a JSON object");
  return j;
}

// A stage config file may hold the section itself or a full pipeline config.
json section(const std::string& path, const char* key) {
  if (path.empty()) return json::object();
  json j = load_json_file(path);
  return j.contains(key) ? j.at(key) : j;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestError("cannot open " + path + " for writing");
  out << text;
}

void report_skips(const std::string& file, const std::vector<Skip>& skips) {
  for (const auto& s : skips) std::cerr << file << ":" << s.line << ": skipped: " << s.reason << '\n';
}

RecordSchema schema_from(const std::string& path, const std::string& source) {
  RecordSchema s = path.empty() ? RecordSchema{} : RecordSchema::from_json(load_json_file(path));
  if (!source.empty()) s.source = source;
  return s;
}

LossSpec loss_from_flags(const std::string& kind, std::optional<double> gamma, std::optional<double> margin,
                         std::optional<double> t, std::optional<double> temperature, LossSpec base = {}) {
  if (!kind.empty()) {
    auto k = parse_loss_kind(kind);
    if (!k) throw ConfigError("unknown loss kind: " + kind);
    base.kind = *k;
  }
  if (gamma) base.gamma = *gamma;
  if (margin) base.margin = *margin;
  if (t) base.tempered_t = *t;
  if (temperature) base.temperature = *temperature;
  validate(base);
  return base;
}

std::string format_double(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prefkit: preference dataset curation and reward-model loss toolkit"};
  app.require_subcommand(1);
  std::function<void()> run;

  // ingest
  {
    auto* cmd = app.add_subcommand("ingest", "Parse a JSONL source into the internal pair format");
    static std::string in, out, schema, source;
    static double max_skip = kDefaultMaxSkipRatio;
    cmd->add_option("--in", in, "Input JSON Lines file")->required();
    cmd->add_option("--out", out, "Output file (stdout when omitted)");
    cmd->add_option("--schema", schema, "Field mapping JSON");
    cmd->add_option("--source", source, "Stamp every pair with this source");
    cmd->add_option("--max-skip-ratio", max_skip, "Fail when more lines than this are skipped");
    cmd->callback([&run, cmd] {
      run = [cmd] {
        auto schema_v = schema_from(schema, source);
        if (cmd->count("--max-skip-ratio")) schema_v.max_skip_ratio = max_skip;
        auto r = read_pairs(in, schema_v);
        report_skips(in, r.skips);
        if (out.empty()) {
          for (const auto& p : r.records) std::cout << pair_to_json(p).dump() << '\n';
        } else {
          write_pairs(r.records, out);
        }
        std::cerr << "ingest: " << r.records.size() << " pairs, " << r.skips.size() << " skipped\n";
      };
    });
  }

  // stats
  {
    auto* cmd = app.add_subcommand("stats", "Per-source dataset statistics");
    static std::string in, vocab, format = "text", out;
    cmd->add_option("--in", in, "Pair file")->required();
    cmd->add_option("--vocab", vocab, "Vocabulary file, one token per line");
    cmd->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));
    cmd->add_option("--out", out, "Report file (stdout when omitted)");
    cmd->callback([&run] {
      run = [] {
        const Tokenizer tok = vocab.empty() ? Tokenizer::whitespace() : Tokenizer::from_vocabulary_file(vocab);
        auto r = read_pairs(in);
        report_skips(in, r.skips);
        const auto s = compute_stats(r.records, tok);
        write_text(out, format == "json" ? stats_json(s).dump(2) + "\n" : stats_table(s));
      };
    });
  }

  // select
  {
    auto* cmd = app.add_subcommand("select", "Score and keep the top fraction of each category bucket");
    static std::vector<std::string> in;
    static std::string config, out, report;
    cmd->add_option("--in", in, "Magpie-style pair files with scores")->required();
    cmd->add_option("--config", config, "Selection config JSON");
    cmd->add_option("--out", out, "Selected pairs")->required();
    cmd->add_option("--report", report, "Selection report JSON (stdout when omitted)");
    cmd->callback([&run] {
      run = [] {
        const auto cfg = SelectionConfig::from_json(section(config, "selection"));
        std::vector<ScoredPair> scored;
        for (const auto& f : in) {
          auto r = read_pairs(f);
          report_skips(f, r.skips);
          for (const auto& p : r.records) scored.push_back(score_pair(p, cfg));
        }
        const auto res = select_top(scored, cfg);
        std::vector<PreferencePair> pairs;
        for (const auto& sp : res.selected) pairs.push_back(sp.pair);
        write_pairs(pairs, out);
        write_text(report, selection_report_json(res.report).dump(2) + "\n");
      };
    });
  }

  // safety
  {
    auto* cmd = app.add_subcommand("safety", "Build and filter refusal/compliance pairs");
    static std::string in, judgments, out, all, source = "wildguardmix";
    static std::size_t cap = 0;
    cmd->add_option("--in", in, "Safety records JSONL")->required();
    cmd->add_option("--judgments", judgments, "Reward-model judgments for stage two");
    cmd->add_option("--max-pairs-per-prompt", cap, "Cap on pairs emitted per prompt");
    cmd->add_option("--source", source, "Source name for the built pairs");
    cmd->add_option("--out", out, "Filtered pairs")->required();
    cmd->add_option("--all-pairs", all, "Also write every built pair before filtering");
    cmd->callback([&run, cmd] {
      run = [cmd] {
        auto r = read_safety_records(in);
        report_skips(in, r.skips);
        SafetyOptions opts;
        opts.source = source;
        if (cmd->count("--max-pairs-per-prompt")) opts.max_pairs_per_prompt = cap;
        const auto built = build_safety_pairs(r.records, opts);
        if (!all.empty()) write_pairs(strip_flags(built), all);
        auto kept = stage1_filter(built);
        std::cerr << "safety: built " << built.size() << ", stage1 kept " << kept.size();
        if (!judgments.empty()) {
          kept = stage2_filter(kept, read_judgments(judgments));
          std::cerr << ", stage2 kept " << kept.size();
        }
        std::cerr << '\n';
        write_pairs(strip_flags(kept), out);
      };
    });
  }

  // decontam
  {
    auto* cmd = app.add_subcommand("decontam", "N-gram contamination scan against evaluation prompts");
    cmd->require_subcommand(1);
    static std::string eval, data, json_out, clean, removed;
    static int nmin = kDefaultNgramMin, nmax = kDefaultNgramMax;
    for (const char* name : {"scan", "remove"}) {
      auto* sub = cmd->add_subcommand(name, std::string(name) == "scan" ? "Report matches" : "Split into clean and removed");
      sub->add_option("--eval", eval, "Evaluation prompts JSONL (field `prompt`)")->required();
      sub->add_option("--data", data, "Pair file")->required();
      sub->add_option("--nmin", nmin, "Smallest n-gram length");
      sub->add_option("--nmax", nmax, "Largest n-gram length");
      sub->add_option("--json", json_out, "Contamination report JSON");
      if (std::string(name) == "remove") {
        sub->add_option("--out-clean", clean, "Pairs without a match")->required();
        sub->add_option("--out-removed", removed, "Pairs with a match")->required();
      }
      const bool remove = std::string(name) == "remove";
      sub->callback([&run, remove] {
        run = [remove] {
          const auto index = build_index(read_prompts(eval), nmin, nmax);
          auto r = read_pairs(data);
          report_skips(data, r.skips);
          const auto d = decontaminate(r.records, index);
          if (remove) {
            write_pairs(d.clean, clean);
            write_pairs(d.removed, removed);
          }
          if (!json_out.empty()) write_text(json_out, contamination_json(d.report).dump(2) + "\n");
          std::cout << contamination_table(d.report);
        };
      });
    }
  }

  // losses
  {
    auto* cmd = app.add_subcommand("losses", "Evaluate or gradient-check a pairwise loss");
    cmd->require_subcommand(1);
    static std::string kind = "bt";
    static std::optional<double> gamma, margin, t, temperature;
    static double rc = 0.0, rr = 0.0, h = 1e-5;
    static std::size_t n = 100;
    static std::uint64_t seed = 0;
    const auto add_params = [](CLI::App* sub) {
      sub->add_option("--kind", kind, "Loss kind");
      sub->add_option("--gamma", gamma, "Focal exponent");
      sub->add_option("--m", margin, "Margin");
      sub->add_option("--t", t, "Tempered-log t");
      sub->add_option("--T", temperature, "Temperature");
    };
    auto* ev = cmd->add_subcommand("eval", "Value and gradients at one point");
    add_params(ev);
    ev->add_option("--rc", rc, "Chosen reward")->required();
    ev->add_option("--rr", rr, "Rejected reward")->required();
    ev->callback([&run] {
      run = [] {
        const auto spec = loss_from_flags(kind, gamma, margin, t, temperature);
        const auto e = loss_eval(spec, rc, rr);
        nlohmann::ordered_json j = {{"loss", std::string(to_string(spec.kind))},
                                    {"value", e.value},
                                    {"grad_chosen", e.grad_chosen},
                                    {"grad_rejected", e.grad_rejected}};
        std::cout << j.dump() << '\n';
      };
    });
    auto* gc = cmd->add_subcommand("grad-check", "Analytic vs central-difference gradients");
    add_params(gc);
    gc->add_option("--n", n, "Number of sampled points");
    gc->add_option("--seed", seed, "Sampling seed");
    gc->add_option("--step", h, "Finite-difference step");
    gc->callback([&run] {
      run = [] {
        const auto spec = loss_from_flags(kind, gamma, margin, t, temperature);
        const auto pts = sample_points(spec, n, seed);
        const double err = grad_check(spec, pts, h);
        std::cout << to_string(spec.kind) << " max relative error " << format_double(err) << " over " << pts.size()
                  << " points\n";
        if (!(err <= 1e-6)) throw StageError("losses", "gradient check exceeded 1e-6");
      };
    });
  }

  // train
  {
    auto* cmd = app.add_subcommand("train", "Train a linear reward model on feature pairs");
    static std::string data, loss, config, out_model, log_out;
    static std::optional<double> lr, wd, gamma, margin, t, temperature;
    static std::optional<std::size_t> epochs, batch;
    static std::optional<std::uint64_t> seed;
    cmd->add_option("--data", data, "Feature pair JSONL")->required();
    cmd->add_option("--loss", loss, "Loss kind");
    cmd->add_option("--config", config, "Train config JSON");
    cmd->add_option("--out-model", out_model, "Model JSON")->required();
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--weight-decay", wd, "Decoupled weight decay");
    cmd->add_option("--epochs", epochs, "Epochs");
    cmd->add_option("--batch-size", batch, "Batch size");
    cmd->add_option("--seed", seed, "Seed");
    cmd->add_option("--gamma", gamma, "Focal exponent");
    cmd->add_option("--m", margin, "Margin");
    cmd->add_option("--t", t, "Tempered-log t");
    cmd->add_option("--T", temperature, "Temperature");
    cmd->add_option("--log", log_out, "Per-epoch log JSON");
    cmd->callback([&run] {
      run = [] {
        TrainConfig cfg = train_config_from_json(section(config, "train"));
        cfg.loss = loss_from_flags(loss, gamma, margin, t, temperature, cfg.loss);
        if (lr) cfg.learning_rate = *lr;
        if (wd) cfg.weight_decay = *wd;
        if (epochs) cfg.epochs = *epochs;
        if (batch) cfg.batch_size = *batch;
        if (seed) cfg.seed = *seed;
        auto r = read_feature_pairs(data);
        report_skips(data, r.skips);
        const auto res = train(r.records, cfg);
        for (const auto& w : res.warnings) std::cerr << "train: warning: " << w << '\n';
        write_model(res.model, out_model);
        nlohmann::ordered_json log = nlohmann::ordered_json::array();
        for (const auto& e : res.log) {
          log.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"accuracy", e.accuracy}});
          std::cerr << "epoch " << e.epoch << ": loss " << e.mean_loss << ", train acc " << e.accuracy << '\n';
        }
        if (!log_out.empty()) write_text(log_out, log.dump(2) + "\n");
      };
    });
  }

  // judge
  {
    auto* cmd = app.add_subcommand("judge", "Score feature pairs with a model, producing judgments");
    static std::string model, data, out;
    cmd->add_option("--model", model, "Model JSON")->required();
    cmd->add_option("--data", data, "Feature pair JSONL")->required();
    cmd->add_option("--out", out, "Judgments JSONL")->required();
    cmd->callback([&run] {
      run = [] {
        const auto m = read_model(model);
        auto r = read_feature_pairs(data);
        report_skips(data, r.skips);
        write_judgments(judge(m, r.records), out);
      };
    });
  }

  // synth
  {
    auto* cmd = app.add_subcommand("synth", "Generate synthetic feature pairs from a random linear truth");
    static std::uint64_t seed = 0;
    static std::size_t d = 16, n = 5000;
    static double noise = 0.05;
    static std::string out, truth, eval_out;
    static std::size_t n_eval = 0;
    cmd->add_option("--seed", seed, "Seed");
    cmd->add_option("--d", d, "Feature dimension");
    cmd->add_option("--n", n, "Number of pairs");
    cmd->add_option("--noise", noise, "Label swap probability");
    cmd->add_option("--out", out, "Feature pair JSONL")->required();
    cmd->add_option("--truth", truth, "Ground-truth model JSON");
    cmd->add_option("--eval-out", eval_out, "Noise-free held-out pairs from the same truth");
    cmd->add_option("--n-eval", n_eval, "Held-out pair count (default: --n)");
    cmd->callback([&run] {
      run = [] {
        const auto s = synth_generate(seed, d, n, noise);
        write_feature_pairs(s.pairs, out);
        if (!truth.empty()) write_model(s.truth, truth);
        if (!eval_out.empty()) write_feature_pairs(synth_pairs(s.truth, seed + 1, n_eval ? n_eval : n, 0.0, "eval"), eval_out);
      };
    });
  }

  // eval
  {
    auto* cmd = app.add_subcommand("eval", "Per-category accuracy on prompt/chosen/rejected trios");
    static std::string trios, model, scores, format = "text", name = "model", out;
    cmd->add_option("--trios", trios, "Trio JSONL")->required();
    auto* m = cmd->add_option("--model", model, "Model JSON (feature trios)");
    auto* s = cmd->add_option("--scores", scores, "External scores JSONL (text trios)");
    m->excludes(s);
    cmd->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));
    cmd->add_option("--name", name, "Model name for the table");
    cmd->add_option("--out", out, "Report file (stdout when omitted)");
    cmd->callback([&run] {
      run = [] {
        if (model.empty() == scores.empty()) throw ConfigError("exactly one of --model or --scores is required");
        auto r = read_trios(trios);
        report_skips(trios, r.skips);
        const BenchReport rep = model.empty() ? evaluate(read_external_scores(scores), r.records)
                                              : evaluate(ModelScorer(read_model(model)), r.records);
        write_text(out, format == "json" ? bench_json(rep).dump(2) + "\n" : bench_table(rep, name));
      };
    });
  }

  // ablate
  {
    auto* cmd = app.add_subcommand("ablate", "Train one model per loss and compare held-out accuracy");
    static std::string data, eval, config, losses = "all", json_out;
    cmd->add_option("--data", data, "Training feature pairs")->required();
    cmd->add_option("--eval", eval, "Held-out feature pairs")->required();
    cmd->add_option("--losses", losses, "Comma-separated kinds, or `all`");
    cmd->add_option("--config", config, "Train config JSON");
    cmd->add_option("--json", json_out, "Report JSON");
    cmd->callback([&run] {
      run = [] {
        const TrainConfig cfg = train_config_from_json(section(config, "train"));
        std::vector<LossSpec> specs;
        if (losses == "all") {
          for (LossKind k : kAllLossKinds) specs.push_back(loss_from_flags(std::string(to_string(k)), {}, {}, {}, {}, cfg.loss));
        } else {
          std::stringstream ss(losses);
          for (std::string k; std::getline(ss, k, ',');) specs.push_back(loss_from_flags(k, {}, {}, {}, {}, cfg.loss));
        }
        auto tr = read_feature_pairs(data);
        auto ev = read_feature_pairs(eval);
        report_skips(data, tr.skips);
        report_skips(eval, ev.skips);
        const auto rows = ablate(tr.records, ev.records, specs, cfg);
        std::cout << ablation_table(rows);
        if (!json_out.empty()) write_text(json_out, ablation_json(rows).dump(2) + "\n");
      };
    });
  }

  // pipeline
  {
    auto* cmd = app.add_subcommand("pipeline", "Run every curation stage from one config");
    static std::string config, output_dir;
    cmd->add_option("--config", config, "Pipeline config JSON")->required();
    cmd->add_option("--output-dir", output_dir, "Overrides output_dir from the config");
    cmd->callback([&run] {
      run = [] {
        auto cfg = PipelineConfig::from_file(config);
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        const auto s = run_pipeline(cfg, &std::cerr);
        std::cout << "curated " << s.curated << " pairs (" << s.selected_total << " selected, " << s.removed
                  << " removed by decontamination) in " << cfg.output_dir.string() << '\n';
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    run();
  } catch (const StageError& e) {
    std::cerr << "prefkit: stage error: " << e.what() << '\n';
    return kExitStage;
  } catch (const ConfigError& e) {
    std::cerr << "prefkit: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IngestError& e) {
    std::cerr << "prefkit: ingest error: " << e.what() << '\n';
    return kExitIngest;
  } catch (const json::exception& e) {
    std::cerr << "prefkit: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "prefkit: stage error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}

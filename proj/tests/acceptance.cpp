// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pipeline_fixture.hpp"
#include "prefkit/prefkit.hpp"

using namespace prefkit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failed conditions for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

double max_abs_diff(const LossEval& a, const LossEval& b) {
  return std::max({std::abs(a.value - b.value), std::abs(a.grad_chosen - b.grad_chosen),
                   std::abs(a.grad_rejected - b.grad_rejected)});
}

void loss_identities(Check& c) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  LossSpec bt, focal{.kind = LossKind::Focal, .gamma = 0.0}, tbt{.kind = LossKind::TemperatureBT, .temperature = 1.0};
  double worst_focal = 0.0, worst_tbt = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double rc = u(rng), rr = u(rng);
    const auto ref = loss_eval(bt, rc, rr);
    worst_focal = std::max(worst_focal, max_abs_diff(loss_eval(focal, rc, rr), ref));
    worst_tbt = std::max(worst_tbt, max_abs_diff(loss_eval(tbt, rc, rr), ref));
  }
  const double secs = seconds_since(t0);
  c.expect(worst_focal <= 1e-12, "Focal(gamma=0) differs from BT");
  c.expect(worst_tbt <= 1e-12, "TemperatureBT(T=1) differs from BT");
  c.expect(secs < 1.0, "runtime >= 1 s");
  c.detail << "max |focal-bt| " << worst_focal << ", max |tbt-bt| " << worst_tbt << ", " << secs << " s";
}

void gradient_verification(Check& c) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (LossKind k : kAllLossKinds) {
    const LossSpec spec{.kind = k};
    const auto pts = sample_points(spec, 100, 77 + static_cast<int>(k), -10.0, 10.0, 1e-3);
    for (const auto& p : pts) {
      if (k == LossKind::Hinge) c.expect(std::abs(p.chosen - p.rejected - spec.margin) > 1e-3, "hinge point too close to kink");
    }
    const double err = grad_check(spec, pts, 1e-5);
    c.expect(err <= 1e-6, std::string(to_string(k)) + " gradient error " + std::to_string(err));
    worst = std::max(worst, err);
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 1.0, "runtime >= 1 s");
  c.detail << "worst relative error " << worst << " over 8 kinds x 100 points, " << secs << " s";
}

void shift_invariance(Check& c) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> shift(-100.0, 100.0);
  double worst = 0.0;
  for (LossKind k : kAllLossKinds) {
    if (!is_difference_only(k)) continue;
    const LossSpec spec{.kind = k};
    const auto pts = sample_points(spec, 100, 5 + static_cast<int>(k), -10.0, 10.0, 1e-3);
    for (const auto& p : pts) {
      const double s = shift(rng);
      const double d = max_abs_diff(loss_eval(spec, p.chosen + s, p.rejected + s), loss_eval(spec, p.chosen, p.rejected));
      worst = std::max(worst, d);
    }
  }
  c.expect(worst <= 1e-12, "a difference-only loss moved under a shift");
  const LossSpec ce{.kind = LossKind::CE};
  const double witness = std::abs(loss_eval(ce, 6.0, 5.0).value - loss_eval(ce, 1.0, 0.0).value);
  c.expect(witness > 0.1, "CE did not respond to the shift");
  c.detail << "max shift deviation " << worst << " (100 shifts per kind), CE witness |dL| = " << witness;
}

void bt_anchors(Check& c) {
  const auto bt = loss_eval(LossSpec{}, 0.3, 0.3);
  c.expect(std::abs(bt.value - std::log(2.0)) <= 1e-12, "BT(0) != ln 2");
  c.expect(std::abs(bt.grad_chosen + 0.5) <= 1e-12 && std::abs(bt.grad_rejected - 0.5) <= 1e-12, "BT(0) gradients");
  const auto hinge = loss_eval(LossSpec{.kind = LossKind::Hinge, .margin = 1.0}, 2.0, 0.0);
  c.expect(hinge.value == 0.0, "Hinge(m=1, d=2) != 0");
  const auto mse = loss_eval(LossSpec{.kind = LossKind::MarginMSE, .margin = 1.0}, 1.0, 0.0);
  c.expect(mse.value == 0.0, "MarginMSE(m=1, d=1) != 0");
  c.detail << "BT(0) = " << bt.value << " grads (" << bt.grad_chosen << ", " << bt.grad_rejected << "), Hinge "
           << hinge.value << ", MarginMSE " << mse.value;
}

struct SynthSet {
  SynthData train;
  std::vector<FeaturePair> held_out;
};

SynthSet synth_set() {
  SynthSet s{synth_generate(0, 16, 5000, 0.05), {}};
  s.held_out = synth_pairs(s.train.truth, 1, 5000, 0.0, "eval");
  return s;
}

void trainer_recovery(Check& c) {
  const auto t0 = Clock::now();
  const auto data = synth_set();
  TrainConfig cfg;  // BT, batch 128, weight decay 1e-3, 2 epochs, cosine
  c.expect(cfg.batch_size == 128 && cfg.weight_decay == 1e-3 && cfg.epochs == 2 && cfg.schedule == Schedule::cosine &&
               cfg.loss.kind == LossKind::BT,
           "defaults differ from batch 128 / decay 1e-3 / 2 epochs / cosine / BT");
  const auto a = train(data.train.pairs, cfg);
  const auto b = train(data.train.pairs, cfg);
  const double acc = pairwise_accuracy(a.model, data.held_out);
  const double secs = seconds_since(t0);
  c.expect(acc >= 0.95, "held-out accuracy below 0.95");
  c.expect(a.model.weights == b.model.weights && a.model.bias == b.model.bias, "re-run not bit-identical");
  c.expect(secs < 10.0, "runtime >= 10 s");
  c.detail << "held-out accuracy " << acc << ", bit-identical re-run, " << secs << " s (two trainings)";
}

void ablation_harness(Check& c) {
  const auto data = synth_set();
  std::vector<LossSpec> specs;
  for (LossKind k : kAllLossKinds) specs.push_back(LossSpec{.kind = k});
  const auto rows = ablate(data.train.pairs, data.held_out, specs, TrainConfig{});
  c.expect(rows.size() == 8, "expected 8 rows");
  double bt = 0.0, lowest = 1.0;
  for (const auto& r : rows) {
    c.expect(r.accuracy >= 0.90, std::string(to_string(r.loss.kind)) + " below 0.90");
    lowest = std::min(lowest, r.accuracy);
    if (r.loss.kind == LossKind::BT) bt = r.accuracy;
  }
  std::size_t rank = 1;
  for (const auto& r : rows) rank += r.accuracy > bt ? 1 : 0;
  c.expect(rank <= 3, "BT ranks " + std::to_string(rank));
  const std::string table = ablation_table(rows);
  std::istringstream lines(table);
  std::string header, rule, line;
  std::getline(lines, header);
  std::getline(lines, rule);
  c.expect(header.find("Loss Function") == 0, "table header");
  std::size_t i = 0;
  while (std::getline(lines, line)) {
    if (i < rows.size()) c.expect(line.find(display_name(rows[i].loss.kind)) == 0, "row order");
    ++i;
  }
  c.expect(i == rows.size(), "one table row per loss");
  std::printf("%s", table.c_str());
  c.detail << "lowest accuracy " << lowest << ", BT competition rank " << rank;
}

std::vector<PreferencePair> bucket_fixture(std::mt19937_64& rng, std::size_t per_bucket) {
  static const char* cats[] = {"Math", "Coding & Debugging", "Planning"};
  static const char* srcs[] = {"magpie-air", "magpie-pro-llama3", "magpie-pro"};
  std::uniform_int_distribution<int> sc(0, 50), src(0, 2);
  std::vector<PreferencePair> out;
  for (int b = 0; b < 3; ++b) {
    for (std::size_t i = 0; i < per_bucket; ++i) {
      PreferencePair p;
      p.id = std::string("b") + std::to_string(b) + "-" + std::to_string(i);
      p.prompt = {{Role::user, "q"}};
      p.chosen = "a";
      p.rejected = "b";
      p.source = srcs[src(rng)];
      p.task_category = cats[b];
      p.chosen_score = sc(rng) / 50.0;
      p.rejected_score = sc(rng) / 50.0;
      out.push_back(std::move(p));
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

void selection_oracle(Check& c) {
  const SelectionConfig cfg;
  std::mt19937_64 rng(31);
  std::size_t fixtures = 0;
  for (std::size_t per : {0u, 1u, 3u, 10u, 57u, 250u, 1000u}) {
    const auto pairs = bucket_fixture(rng, per);
    std::vector<ScoredPair> scored;
    for (const auto& p : pairs) scored.push_back(score_pair(p, cfg));
    std::set<std::string> got;
    for (const auto& sp : select_top(scored, cfg).selected) got.insert(sp.pair.id);
    c.expect(got == oracle::selected_ids(pairs), "mismatch at " + std::to_string(per) + " pairs per bucket");
    ++fixtures;
  }
  std::vector<ScoredPair> math;
  for (int i = 0; i < 100; ++i) {
    PreferencePair p{"m" + std::to_string(i), {{Role::user, "q"}}, "a", "b", "magpie-pro", "Math", i / 100.0, 0.0};
    math.push_back(score_pair(p, cfg));
  }
  const auto sel = select_top(math, cfg);
  c.expect(sel.selected.size() == 30, "100 math pairs did not select 30");
  PreferencePair air{"x", {{Role::user, "q"}}, "a", "b", "magpie-air", "Math", 0.9, 0.7};
  PreferencePair pro = air;
  pro.source = "magpie-pro-llama3";
  c.expect(cfg.offset("magpie-air") == -0.1 && cfg.offset("magpie-pro-llama3") == -0.05, "offset table");
  c.expect(score_pair(air, cfg).pair_score == (0.9 + 0.7) / 2.0 - 0.1, "Air offset arithmetic");
  c.expect(score_pair(pro, cfg).pair_score == (0.9 + 0.7) / 2.0 - 0.05, "Pro Llama 3 offset arithmetic");
  c.detail << fixtures << " fixtures up to 1000 pairs per bucket match the oracle; 100 math -> "
           << sel.selected.size();
}

void safety_orientation(Check& c) {
  std::size_t cells = 0;
  for (bool harmful : {false, true}) {
    for (bool refusal : {false, true}) {
      const SafetyRecord subject{"prompt", "subject", harmful, refusal, true};
      const SafetyRecord other{"prompt", "other", harmful, !refusal, true};
      const auto pairs = build_safety_pairs({subject, other});
      const bool expect_chosen = harmful == refusal;  // refuse harmful, comply with benign
      c.expect(pairs.size() == 1 && (pairs[0].pair.chosen == "subject") == expect_chosen,
               "truth table cell harmful=" + std::to_string(harmful) + " refusal=" + std::to_string(refusal));
      ++cells;
    }
  }
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> sz(0, 7), coin(0, 1);
  std::size_t groups = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<SafetyRecord> records;
    std::size_t expected = 0;
    for (int g = 0; g < 1 + trial % 4; ++g, ++groups) {
      const bool harmful = coin(rng);
      const int nr = sz(rng), nc = sz(rng);
      for (int i = 0; i < nr; ++i) records.push_back({"p" + std::to_string(g), "r" + std::to_string(i), harmful, true, bool(coin(rng))});
      for (int i = 0; i < nc; ++i) records.push_back({"p" + std::to_string(g), "c" + std::to_string(i), harmful, false, bool(coin(rng))});
      expected += static_cast<std::size_t>(nr * nc);
    }
    std::shuffle(records.begin(), records.end(), rng);
    const auto built = build_safety_pairs(records);
    c.expect(built.size() == expected, "count law violated");
    const auto s1 = stage1_filter(built);
    c.expect(strip_flags(stage1_filter(s1)) == strip_flags(s1), "stage1 not idempotent");
    JudgmentMap j;
    for (const auto& p : built) j[p.pair.id] = {p.pair.id, double(coin(rng)), double(coin(rng))};
    const auto s2 = stage2_filter(s1, j);
    c.expect(strip_flags(stage2_filter(s2, j)) == strip_flags(s2), "stage2 not idempotent");
  }
  c.detail << cells << " truth-table cells, count law on " << groups << " random groups, both stages idempotent";
}

void decontam_oracle(Check& c) {
  const auto t0 = Clock::now();
  std::size_t contaminated = 0, planted6 = 0, planted7 = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto corpus = oracle::planted_corpus(1000 + seed, 200, 200, 5, 15);
    std::vector<PreferencePair> pairs;
    for (std::size_t i = 0; i < corpus.data.size(); ++i) {
      pairs.push_back({"d" + std::to_string(i), {{Role::user, corpus.data[i]}}, "a", "b", "s", {}, {}, {}});
    }
    const auto r = scan(pairs, build_index(corpus.eval, 7, 13));
    const auto truth = oracle::scan(corpus.eval, corpus.data, 7);
    c.expect(r.dataset_prompts_contaminated == truth.contaminated, "contaminated count, seed " + std::to_string(seed));
    c.expect(r.eval_prompts_matched == truth.eval_matched, "eval matched count, seed " + std::to_string(seed));
    std::vector<std::set<std::uint32_t>> hits(pairs.size());
    for (const auto& m : r.matches) hits[m.pair_index] = {m.eval_indices.begin(), m.eval_indices.end()};
    c.expect(hits == truth.hits, "per-prompt hits, seed " + std::to_string(seed));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const std::size_t L = corpus.planted_len[i];
      if (L == 0) continue;
      if (L == 6) ++planted6;
      if (L >= 7) ++planted7;
      if (L <= 6) c.expect(hits[i].empty(), "a planted run of length " + std::to_string(L) + " was flagged");
      if (L >= 7) c.expect(!hits[i].empty(), "a planted run of length " + std::to_string(L) + " was missed");
    }
    contaminated += r.dataset_prompts_contaminated;
  }
  const double secs = seconds_since(t0);
  c.expect(planted6 > 0 && planted7 > 0, "fixtures lack length-6 or length-7 plants");
  c.expect(secs < 5.0, "runtime >= 5 s");
  c.detail << "20 corpora of 200x200, " << contaminated << " contaminated prompts, " << planted6
           << " length-6 plants unflagged, " << planted7 << " length>=7 plants flagged, " << secs
           << " s including the oracle";
}

void bench_arithmetic(Check& c) {
  std::vector<EvalTrio> trios;
  std::unordered_map<std::string, ScorePair> raw;
  const auto add = [&](Category cat, double ch, double rj) {
    const std::string id = std::to_string(trios.size());
    trios.push_back({id, "p", TextResponses{"a", "b"}, cat});
    raw[id] = {ch, rj};
  };
  add(Category::Chat, 1, 0);
  add(Category::Chat, 2, 1);
  add(Category::Chat, 3, -1);
  add(Category::Chat, 0, 0.5);
  add(Category::ChatHard, 1, 0);
  add(Category::ChatHard, 1, 1);
  add(Category::Safety, 4, 3);
  add(Category::Reasoning, 2, -2);
  const auto r = evaluate(ExternalScores(raw), trios);
  const auto score = [&](Category cat) { return round1(r.categories.at(cat).accuracy()); };
  c.expect(score(Category::Chat) == 75.0 && score(Category::ChatHard) == 50.0 && score(Category::Safety) == 100.0 &&
               score(Category::Reasoning) == 100.0,
           "category scores");
  c.expect(r.avg_score() && round1(*r.avg_score()) == 81.3, "average");
  c.expect(bench_table(r).find("81.3") != std::string::npos, "table shows 81.3");
  std::size_t transforms = 0;
  for (auto f : {+[](double x) { return std::exp(x); }, +[](double x) { return x * x * x; },
                 +[](double x) { return std::tanh(x / 3.0); }, +[](double x) { return 1e6 * x + 17; }}) {
    auto mapped = raw;
    for (auto& [_, s] : mapped) s = {f(s.chosen), f(s.rejected)};
    c.expect(evaluate(ExternalScores(mapped), trios) == r, "report changed under a monotone transform");
    ++transforms;
  }
  c.detail << "{" << score(Category::Chat) << ", " << score(Category::ChatHard) << ", " << score(Category::Safety)
           << ", " << score(Category::Reasoning) << "} avg " << round1(*r.avg_score()) << ", invariant under "
           << transforms << " increasing transforms";
}

void pipeline_determinism(Check& c) {
  testing::TempDir dir;
  const auto fx = testing::make_pipeline_fixture(dir.path(), 2025);
  const auto cfg = PipelineConfig::from_file(fx.config);
  const auto s1 = run_pipeline(cfg);
  const auto first = testing::read_outputs(fx.output_dir);
  std::filesystem::remove_all(fx.output_dir);
  const auto s2 = run_pipeline(cfg);
  const auto second = testing::read_outputs(fx.output_dir);
  c.expect(first == second, "outputs differ between runs");
  c.expect(first.count("curated.jsonl") && first.count("removed.jsonl") && first.count("contamination.json") &&
               first.count("stats_after.json"),
           "missing artifacts");
  const auto& ex = fx.expect;
  const auto out_of = [&](const char* stage, const char* input) {
    const auto st = testing::find_stage(s1, stage, input);
    return st ? st->out : static_cast<std::size_t>(-1);
  };
  c.expect(out_of("helpsteer_filter", "helpsteer2.jsonl") == ex.helpsteer_kept, "helpsteer count");
  c.expect(out_of("select_top", "magpie") == ex.magpie_selected, "selection count");
  c.expect(out_of("stage2_filter", "safety.jsonl") == ex.safety_stage2, "safety count");
  const std::size_t selected = out_of("helpsteer_filter", "helpsteer2.jsonl") + out_of("ingest", "extra.jsonl") +
                               out_of("select_top", "magpie") + out_of("stage2_filter", "safety.jsonl");
  c.expect(s1.removed == ex.removed, "decontamination count");
  c.expect(s1.curated == selected - s1.removed, "composition law on the stage log");
  c.expect(s1.curated == ex.curated(), "curated count");
  c.detail << first.size() << " artifacts byte-identical; curated " << s1.curated << " = " << selected
           << " selected - " << s1.removed << " removed";
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<void(Check&)> run;
  };
  const std::vector<Criterion> criteria = {
      {"loss identities", loss_identities},
      {"gradient verification", gradient_verification},
      {"shift invariance", shift_invariance},
      {"BT anchor values", bt_anchors},
      {"trainer recovery", trainer_recovery},
      {"ablation harness", ablation_harness},
      {"selection oracle", selection_oracle},
      {"safety orientation", safety_orientation},
      {"decontamination oracle", decontam_oracle},
      {"bench arithmetic", bench_arithmetic},
      {"pipeline determinism", pipeline_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      criteria[i].run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = c.failures.empty();
    failed += ok ? 0 : 1;
    std::printf("%s [%zu] %s: %s\n", ok ? "PASS" : "FAIL", i + 1, criteria[i].name, c.detail.str().c_str());
    for (const auto& f : c.failures) std::printf("       - %s\n", f.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

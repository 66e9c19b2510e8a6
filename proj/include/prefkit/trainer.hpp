#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefkit/core.hpp"
#include "prefkit/ingest.hpp"
#include "prefkit/losses.hpp"
#include "prefkit/safety.hpp"

namespace prefkit {

// Feature vectors standing in for (prompt, response) encodings.
struct FeaturePair {
  std::string id;
  std::vector<double> chosen;
  std::vector<double> rejected;

  friend bool operator==(const FeaturePair&, const FeaturePair&) = default;
};

struct RewardModel {
  std::vector<double> weights;
  double bias = 0.0;

  std::size_t dim() const noexcept { return weights.size(); }

  double reward(std::span<const double> features) const {
    if (features.size() != weights.size()) {
      throw StageError("train", "feature dimension " + std::to_string(features.size()) +
                                    " does not match model dimension " + std::to_string(weights.size()));
    }
    return std::inner_product(weights.begin(), weights.end(), features.begin(), bias);
  }

  friend bool operator==(const RewardModel&, const RewardModel&) = default;
};

enum class Schedule { constant, cosine };

struct TrainConfig {
  LossSpec loss;
  double learning_rate = 5e-2;
  double weight_decay = 1e-3;
  std::size_t batch_size = 128;
  std::size_t epochs = 2;
  Schedule schedule = Schedule::cosine;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool train_bias = true;

  void validate() const {
    prefkit::validate(loss);
    if (!(std::isfinite(learning_rate) && learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(std::isfinite(weight_decay) && weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
    if (!(std::isfinite(epsilon) && epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  }
};

// Learning rate at step `step` of `total`; cosine decays from lr0 to 0 at step == total.
inline double scheduled_lr(double lr0, Schedule schedule, std::size_t step, std::size_t total) {
  if (schedule == Schedule::constant || total == 0) return lr0;
  const double frac = static_cast<double>(std::min(step, total)) / static_cast<double>(total);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;  // training pairs ranked correctly before each update
};

struct TrainResult {
  RewardModel model;
  std::vector<EpochLog> log;
  std::vector<std::string> warnings;
};

inline std::size_t check_dimension(std::span<const FeaturePair> pairs) {
  if (pairs.empty()) throw StageError("train", "no training pairs");
  const std::size_t d = pairs.front().chosen.size();
  if (d == 0) throw StageError("train", "feature dimension must be >= 1");
  for (const auto& p : pairs) {
    if (p.chosen.size() != d || p.rejected.size() != d) {
      throw StageError("train", "pair " + p.id + " has mismatched feature dimension");
    }
  }
  return d;
}

/// Minibatch training of a linear reward model under `cfg.loss`.
///
/// Weights start from a seeded N(0, 1/d) draw with bias 0; pairs are reshuffled each
/// epoch from the same generator. Each step averages the per-pair reward gradients
/// through the linear map, then applies an AdamW update with decoupled weight decay.
/// Identical inputs yield a bit-identical model.
inline TrainResult train(std::span<const FeaturePair> pairs, const TrainConfig& cfg,
                         const RewardModel* init = nullptr) {
  cfg.validate();
  const std::size_t d = check_dimension(pairs);
  std::mt19937_64 rng(cfg.seed);

  TrainResult res;
  RewardModel& model = res.model;
  if (init) {
    if (init->dim() != d) throw StageError("train", "initial model dimension mismatch");
    model = *init;
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    model.weights.resize(d);
    for (auto& w : model.weights) w = normal(rng) * scale;
    model.bias = 0.0;
  }

  std::vector<double> m(d + 1, 0.0), v(d + 1, 0.0), grad(d + 1, 0.0);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batches = (pairs.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches * cfg.epochs;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(lo + cfg.batch_size, pairs.size());
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = lo; k < hi; ++k) {
        const FeaturePair& p = pairs[order[k]];
        const double rc = model.reward(p.chosen);
        const double rr = model.reward(p.rejected);
        const LossEval e = loss_eval(cfg.loss, rc, rr);
        if (!std::isfinite(e.value) || !std::isfinite(e.grad_chosen) || !std::isfinite(e.grad_rejected)) {
          throw StageError("train", "non-finite loss at step " + std::to_string(step));
        }
        loss_sum += e.value;
        if (rc > rr) ++correct;
        for (std::size_t i = 0; i < d; ++i) grad[i] += e.grad_chosen * p.chosen[i] + e.grad_rejected * p.rejected[i];
        grad[d] += e.grad_chosen + e.grad_rejected;
      }
      const double inv = 1.0 / static_cast<double>(hi - lo);
      const double lr = scheduled_lr(cfg.learning_rate, cfg.schedule, step, total_steps);
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      const std::size_t n_params = cfg.train_bias ? d + 1 : d;
      for (std::size_t i = 0; i < n_params; ++i) {
        double& param = i < d ? model.weights[i] : model.bias;
        const double g = grad[i] * inv;
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        param -= lr * cfg.weight_decay * param;
        param -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
      }
    }
    const auto n = static_cast<double>(pairs.size());
    res.log.push_back({epoch + 1, loss_sum / n, static_cast<double>(correct) / n});
  }

  for (std::size_t i = 1; i < res.log.size(); ++i) {
    if (res.log[i].mean_loss > res.log[i - 1].mean_loss) {
      std::ostringstream w;
      w << "mean loss rose from epoch " << i << " to " << i + 1 << " (" << res.log[i - 1].mean_loss << " -> "
        << res.log[i].mean_loss << "); learning rate may be too high";
      res.warnings.push_back(w.str());
    }
  }
  return res;
}

// Fraction of pairs whose chosen features score strictly higher.
inline double pairwise_accuracy(const RewardModel& model, std::span<const FeaturePair> pairs) {
  if (pairs.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& p : pairs) ok += model.reward(p.chosen) > model.reward(p.rejected) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(pairs.size());
}

struct SynthData {
  std::vector<FeaturePair> pairs;
  RewardModel truth;
};

/// Draws `n` pairs of i.i.d. N(0, I) feature vectors ordered by `truth`, then swaps
/// each pair with probability `noise_rate`.
inline std::vector<FeaturePair> synth_pairs(const RewardModel& truth, std::uint64_t seed, std::size_t n,
                                            double noise_rate, const std::string& id_prefix = "synth") {
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ConfigError("noise_rate must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t d = truth.dim();
  std::vector<FeaturePair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FeaturePair p;
    p.id = id_prefix + ":" + std::to_string(i);
    p.chosen.resize(d);
    p.rejected.resize(d);
    for (auto& x : p.chosen) x = normal(rng);
    for (auto& x : p.rejected) x = normal(rng);
    if (truth.reward(p.chosen) < truth.reward(p.rejected)) std::swap(p.chosen, p.rejected);
    if (unit(rng) < noise_rate) std::swap(p.chosen, p.rejected);
    out.push_back(std::move(p));
  }
  return out;
}

inline RewardModel synth_truth(std::uint64_t seed, std::size_t d) {
  if (d < 1) throw ConfigError("dimension must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RewardModel truth;
  truth.weights.resize(d);
  for (auto& w : truth.weights) w = normal(rng);
  return truth;
}

inline SynthData synth_generate(std::uint64_t seed, std::size_t d, std::size_t n, double noise_rate) {
  if (n < 1) throw ConfigError("n must be >= 1");
  SynthData s;
  s.truth = synth_truth(seed, d);
  // Distinct stream for the pairs so the truth draw does not shift with n.
  s.pairs = synth_pairs(s.truth, seed ^ 0x5eed5eed5eed5eedULL, n, noise_rate);
  return s;
}

inline std::vector<RmJudgment> judge(const RewardModel& model, std::span<const FeaturePair> pairs) {
  std::vector<RmJudgment> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.id, model.reward(p.chosen), model.reward(p.rejected)});
  return out;
}

struct AblationRow {
  LossSpec loss;
  double accuracy = 0.0;  // held-out, in [0, 1]
  double final_train_loss = 0.0;
};

// One model per loss, all from cfg.seed; the runs are independent and execute concurrently.
inline std::vector<AblationRow> ablate(std::span<const FeaturePair> pairs, std::span<const FeaturePair> eval_pairs,
                                       std::span<const LossSpec> losses, const TrainConfig& cfg) {
  std::vector<std::future<AblationRow>> jobs;
  for (const LossSpec& spec : losses) {
    TrainConfig c = cfg;
    c.loss = spec;
    c.validate();
    jobs.push_back(std::async(std::launch::async, [pairs, eval_pairs, c] {
      TrainResult r = train(pairs, c);
      return AblationRow{c.loss, pairwise_accuracy(r.model, eval_pairs), r.log.back().mean_loss};
    }));
  }
  std::vector<AblationRow> rows;
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t name_w = std::string_view("Loss Function").size();
  for (const auto& r : rows) name_w = std::max(name_w, display_name(r.loss.kind).size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_w)) << "Loss Function" << "  " << std::right
      << "Held-out Acc." << '\n';
  out << std::string(name_w + 15, '-') << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(name_w)) << display_name(r.loss.kind) << "  " << std::right
        << std::setw(13) << std::fixed << std::setprecision(1) << 100.0 * r.accuracy << '\n';
  }
  return out.str();
}

inline nlohmann::ordered_json loss_spec_json(const LossSpec& s) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(s.kind));
  j["gamma"] = s.gamma;
  j["margin"] = s.margin;
  j["tempered_t"] = s.tempered_t;
  j["temperature"] = s.temperature;
  return j;
}

inline LossSpec loss_spec_from_json(const json& j, LossSpec base = {}) {
  if (auto it = j.find("kind"); it != j.end()) {
    auto k = parse_loss_kind(it->get<std::string>());
    if (!k) throw ConfigError("unknown loss kind: " + it->get<std::string>());
    base.kind = *k;
  }
  base.gamma = j.value("gamma", base.gamma);
  base.margin = j.value("margin", base.margin);
  base.tempered_t = j.value("tempered_t", base.tempered_t);
  base.temperature = j.value("temperature", base.temperature);
  validate(base);
  return base;
}

inline nlohmann::ordered_json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"loss", std::string(to_string(r.loss.kind))},
                   {"name", std::string(display_name(r.loss.kind))},
                   {"params", loss_spec_json(r.loss)},
                   {"accuracy", 100.0 * r.accuracy},
                   {"final_train_loss", r.final_train_loss}});
  }
  return arr;
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig c = {}) {
  if (auto it = j.find("loss"); it != j.end()) c.loss = loss_spec_from_json(*it, c.loss);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.train_bias = j.value("train_bias", c.train_bias);
  if (auto it = j.find("schedule"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "cosine") c.schedule = Schedule::cosine;
    else if (s == "constant") c.schedule = Schedule::constant;
    else throw ConfigError("unknown schedule: " + s);
  }
  c.validate();
  return c;
}

inline ordered_json model_to_json(const RewardModel& m) {
  ordered_json j;
  j["d"] = m.dim();
  j["weights"] = m.weights;
  j["bias"] = m.bias;
  return j;
}

inline RewardModel model_from_json(const json& j) {
  RewardModel m;
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  if (j.at("d").get<std::size_t>() != m.weights.size()) throw ConfigError("model d disagrees with weights");
  return m;
}

inline void write_model(const RewardModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  out << model_to_json(m).dump() << '\n';
  if (!out) throw IngestError("write failure on " + path.string());
}

inline RewardModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  try {
    return model_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw IngestError(path.string() + ": " + e.what());
  }
}

inline FeaturePair feature_pair_from_json(const json& doc, std::size_t line) {
  FeaturePair p;
  p.id = fields::optional_string(doc, "id").value_or("line:" + std::to_string(line));
  const auto vec = [&](const char* key) {
    const json& v = fields::require(doc, key);
    if (!v.is_array()) throw RecordError(std::string("field ") + key + " is not an array");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw RecordError(std::string("field ") + key + " holds a non-number");
      out.push_back(x.get<double>());
      if (!std::isfinite(out.back())) throw RecordError(std::string("field ") + key + " holds a non-finite value");
    }
    return out;
  };
  p.chosen = vec("features_chosen");
  p.rejected = vec("features_rejected");
  if (p.chosen.empty() || p.chosen.size() != p.rejected.size()) throw RecordError("feature dimensions differ or are empty");
  return p;
}

inline ordered_json feature_pair_to_json(const FeaturePair& p) {
  ordered_json j;
  j["id"] = p.id;
  j["features_chosen"] = p.chosen;
  j["features_rejected"] = p.rejected;
  return j;
}

inline ReadResult<FeaturePair> read_feature_pairs(const std::filesystem::path& path,
                                                  double max_skip_ratio = kDefaultMaxSkipRatio) {
  return read_jsonl(path, feature_pair_from_json, max_skip_ratio);
}

inline std::size_t write_feature_pairs(const std::vector<FeaturePair>& pairs, const std::filesystem::path& path) {
  return write_jsonl(path, pairs, feature_pair_to_json);
}

}  // namespace prefkit

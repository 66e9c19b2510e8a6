#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefkit/core.hpp"
#include "prefkit/ingest.hpp"
#include "prefkit/trainer.hpp"

namespace prefkit {

enum class Category { Chat, ChatHard, Safety, Reasoning };

inline constexpr std::array<Category, 4> kCategories = {Category::Chat, Category::ChatHard, Category::Safety,
                                                        Category::Reasoning};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::Chat: return "Chat";
    case Category::ChatHard: return "Chat Hard";
    case Category::Safety: return "Safety";
    case Category::Reasoning: return "Reasoning";
  }
  return "?";
}

// Accepts "Chat Hard", "chat_hard", "ChatHard", ...
inline std::optional<Category> parse_category(std::string_view s) {
  std::string key;
  for (unsigned char c : s) {
    if (c != ' ' && c != '_' && c != '-') key.push_back(static_cast<char>(std::tolower(c)));
  }
  if (key == "chat") return Category::Chat;
  if (key == "chathard") return Category::ChatHard;
  if (key == "safety") return Category::Safety;
  if (key == "reasoning") return Category::Reasoning;
  return std::nullopt;
}

struct TextResponses {
  std::string chosen;
  std::string rejected;
};

struct FeatureResponses {
  std::vector<double> chosen;
  std::vector<double> rejected;
};

struct EvalTrio {
  std::string id;
  std::string prompt;
  std::variant<TextResponses, FeatureResponses> responses;
  Category category = Category::Chat;
};

struct ScorePair {
  double chosen = 0.0;
  double rejected = 0.0;
};

template <class S>
concept TrioScorer = requires(const S& s, const EvalTrio& t) {
  { s(t) } -> std::convertible_to<ScorePair>;
};

// Scores feature-mode trios with a linear reward model.
class ModelScorer {
 public:
  explicit ModelScorer(RewardModel model) : model_(std::move(model)) {}

  ScorePair operator()(const EvalTrio& t) const {
    const auto* f = std::get_if<FeatureResponses>(&t.responses);
    if (!f) throw StageError("eval", "trio " + t.id + " has text responses; model scoring needs features");
    return {model_.reward(f->chosen), model_.reward(f->rejected)};
  }

 private:
  RewardModel model_;
};

// Scores looked up by trio id, as produced by any outside model.
class ExternalScores {
 public:
  ExternalScores() = default;
  explicit ExternalScores(std::unordered_map<std::string, ScorePair> scores) : scores_(std::move(scores)) {}

  ScorePair operator()(const EvalTrio& t) const {
    auto it = scores_.find(t.id);
    if (it == scores_.end()) throw StageError("eval", "no external score for trio " + t.id);
    return it->second;
  }

  void set(const std::string& id, ScorePair s) { scores_[id] = s; }

 private:
  std::unordered_map<std::string, ScorePair> scores_;
};

struct CategoryScore {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const { return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total); }
};

inline double round1(double x) { return std::round(x * 10.0) / 10.0; }

struct BenchReport {
  std::map<Category, CategoryScore> categories;  // only categories with at least one trio

  // Unweighted mean over the present categories; absent when there are none.
  std::optional<double> avg_score() const {
    if (categories.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& [_, s] : categories) sum += s.accuracy();
    return sum / static_cast<double>(categories.size());
  }

  friend bool operator==(const BenchReport& a, const BenchReport& b) {
    if (a.categories.size() != b.categories.size()) return false;
    for (const auto& [c, s] : a.categories) {
      auto it = b.categories.find(c);
      if (it == b.categories.end() || it->second.correct != s.correct || it->second.total != s.total) return false;
    }
    return true;
  }
};

// A trio is correct only if the chosen response scores strictly higher.
template <TrioScorer S>
BenchReport evaluate(const S& scorer, const std::vector<EvalTrio>& trios) {
  BenchReport r;
  for (const auto& t : trios) {
    const ScorePair s = scorer(t);
    auto& cat = r.categories[t.category];
    cat.total += 1;
    if (s.chosen > s.rejected) cat.correct += 1;
  }
  return r;
}

inline nlohmann::ordered_json bench_json(const BenchReport& r) {
  using oj = nlohmann::ordered_json;
  oj j;
  const auto avg = r.avg_score();
  j["avg_score"] = avg ? oj(round1(*avg)) : oj(nullptr);
  oj cats = oj::object();
  for (Category c : kCategories) {
    auto it = r.categories.find(c);
    if (it == r.categories.end()) continue;
    cats[std::string(to_string(c))] = {
        {"score", round1(it->second.accuracy())}, {"correct", it->second.correct}, {"total", it->second.total}};
  }
  j["categories"] = std::move(cats);
  return j;
}

// One-row table: Avg. Score, Chat, Chat Hard, Safety, Reasoning.
inline std::string bench_table(const BenchReport& r, const std::string& model_name = "model") {
  const auto fmt = [](std::optional<double> v) {
    if (!v) return std::string("-");
    std::ostringstream o;
    o << std::fixed << std::setprecision(1) << round1(*v);
    return o.str();
  };
  const std::size_t name_w = std::max<std::size_t>(5, model_name.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_w)) << "Model" << std::right << "  " << std::setw(10)
      << "Avg. Score";
  for (Category c : kCategories) out << "  " << std::setw(9) << to_string(c);
  out << '\n' << std::string(name_w + 12 + 4 * 11, '-') << '\n';
  out << std::left << std::setw(static_cast<int>(name_w)) << model_name << std::right << "  " << std::setw(10)
      << fmt(r.avg_score());
  for (Category c : kCategories) {
    auto it = r.categories.find(c);
    out << "  " << std::setw(9) << fmt(it == r.categories.end() ? std::nullopt : std::optional(it->second.accuracy()));
  }
  out << '\n';
  return out.str();
}

inline EvalTrio trio_from_json(const json& doc, std::size_t line) {
  EvalTrio t;
  t.id = fields::optional_string(doc, "id").value_or(std::to_string(line));
  if (auto it = doc.find("prompt"); it != doc.end() && !it->is_null()) {
    t.prompt = prompt_text(fields::parse_turns(*it, "prompt"));
  }
  const std::string cat = fields::require_string(doc, "category");
  auto c = parse_category(cat);
  if (!c) throw RecordError("unknown category: " + cat);
  t.category = *c;
  const json& chosen = fields::require(doc, "chosen");
  const json& rejected = fields::require(doc, "rejected");
  if (chosen.is_string() && rejected.is_string()) {
    t.responses = TextResponses{chosen.get<std::string>(), rejected.get<std::string>()};
  } else if (chosen.is_array() && rejected.is_array()) {
    FeatureResponses f;
    try {
      f.chosen = chosen.get<std::vector<double>>();
      f.rejected = rejected.get<std::vector<double>>();
    } catch (const json::exception&) {
      throw RecordError("feature arrays must hold numbers");
    }
    if (f.chosen.size() != f.rejected.size()) throw RecordError("feature dimensions differ");
    t.responses = std::move(f);
  } else {
    throw RecordError("chosen and rejected must both be strings or both be arrays");
  }
  return t;
}

inline ordered_json trio_to_json(const EvalTrio& t) {
  ordered_json j;
  j["id"] = t.id;
  j["prompt"] = t.prompt;
  std::visit(
      [&](const auto& r) {
        j["chosen"] = r.chosen;
        j["rejected"] = r.rejected;
      },
      t.responses);
  j["category"] = std::string(to_string(t.category));
  return j;
}

inline ReadResult<EvalTrio> read_trios(const std::filesystem::path& path,
                                       double max_skip_ratio = kDefaultMaxSkipRatio) {
  return read_jsonl(path, trio_from_json, max_skip_ratio);
}

inline std::size_t write_trios(const std::vector<EvalTrio>& trios, const std::filesystem::path& path) {
  return write_jsonl(path, trios, trio_to_json);
}

inline ExternalScores read_external_scores(const std::filesystem::path& path,
                                           double max_skip_ratio = kDefaultMaxSkipRatio) {
  auto r = read_jsonl(
      path,
      [](const json& doc, std::size_t) {
        return std::pair{fields::require_string(doc, "trio_id"),
                         ScorePair{fields::require_number(doc, "chosen_score"),
                                   fields::require_number(doc, "rejected_score")}};
      },
      max_skip_ratio);
  ExternalScores s;
  for (const auto& [id, sc] : r.records) s.set(id, sc);
  return s;
}

}  // namespace prefkit

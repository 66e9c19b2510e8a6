#pragma once

#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefkit/core.hpp"

namespace prefkit {

/// Token counter behind the dataset statistics.
///
/// `whitespace` counts maximal runs of non-whitespace bytes. `vocabulary` splits on
/// whitespace, then segments each word greedily into the longest vocabulary entry
/// at each position, falling back to a single byte when nothing matches.
class Tokenizer {
 public:
  enum class Kind { whitespace, vocabulary };

  Tokenizer() = default;

  static Tokenizer whitespace() { return {}; }

  // One token per line; blank lines are ignored.
  static Tokenizer from_vocabulary_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open vocabulary " + path.string());
    std::vector<std::string> entries;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) entries.push_back(line);
    }
    return from_vocabulary(entries);
  }

  static Tokenizer from_vocabulary(const std::vector<std::string>& entries) {
    Tokenizer t;
    t.kind_ = Kind::vocabulary;
    for (const auto& e : entries) {
      t.max_len_ = std::max(t.max_len_, e.size());
      t.vocab_.insert(e);
    }
    return t;
  }

  Kind kind() const noexcept { return kind_; }

  std::vector<std::string> tokenize(std::string_view text) const {
    std::vector<std::string> out;
    for_each_word(text, [&](std::string_view w) {
      if (kind_ == Kind::whitespace) {
        out.emplace_back(w);
        return;
      }
      std::size_t i = 0;
      while (i < w.size()) {
        std::size_t len = std::min(max_len_, w.size() - i);
        while (len > 1 && !vocab_.count(std::string(w.substr(i, len)))) --len;
        out.emplace_back(w.substr(i, std::max<std::size_t>(len, 1)));
        i += std::max<std::size_t>(len, 1);
      }
    });
    return out;
  }

  std::size_t count(std::string_view text) const {
    if (kind_ == Kind::whitespace) {
      std::size_t n = 0;
      for_each_word(text, [&](std::string_view) { ++n; });
      return n;
    }
    return tokenize(text).size();
  }

 private:
  template <class F>
  static void for_each_word(std::string_view text, F&& f) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      const std::size_t start = i;
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      if (i > start) f(text.substr(start, i - start));
    }
  }

  Kind kind_ = Kind::whitespace;
  std::unordered_set<std::string> vocab_;
  std::size_t max_len_ = 1;
};

namespace detail {

// Integer sums, so the result does not depend on input order.
struct StatsAccumulator {
  std::size_t pairs = 0;
  std::size_t turns = 0;
  std::size_t prompt_tokens = 0;
  std::size_t response_tokens = 0;

  StatsRow finish() const {
    StatsRow row;
    row.num_pairs = pairs;
    if (pairs == 0) return row;
    const auto n = static_cast<double>(pairs);
    row.avg_turns = static_cast<double>(turns) / n;
    row.avg_prompt_tokens = static_cast<double>(prompt_tokens) / n;
    row.avg_response_tokens = static_cast<double>(response_tokens) / (2.0 * n);
    return row;
  }
};

}  // namespace detail

// avg_turns counts individual messages. Response tokens average chosen and
// rejected together, each response counted once.
inline DatasetStats compute_stats(const std::vector<PreferencePair>& pairs,
                                  const Tokenizer& tok = Tokenizer::whitespace()) {
  detail::StatsAccumulator total;
  std::map<std::string, detail::StatsAccumulator> by_source;
  for (const auto& p : pairs) {
    std::size_t prompt_tokens = 0;
    for (const auto& t : p.prompt) prompt_tokens += tok.count(t.content);
    const std::size_t response_tokens = tok.count(p.chosen) + tok.count(p.rejected);
    for (auto* acc : {&total, &by_source[p.source]}) {
      acc->pairs += 1;
      acc->turns += p.prompt.size();
      acc->prompt_tokens += prompt_tokens;
      acc->response_tokens += response_tokens;
    }
  }
  DatasetStats s;
  s.total = total.finish();
  for (const auto& [src, acc] : by_source) s.per_source[src] = acc.finish();
  return s;
}

inline nlohmann::ordered_json stats_row_json(const StatsRow& r) {
  nlohmann::ordered_json j;
  const auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  j["num_pairs"] = r.num_pairs;
  j["avg_turns"] = opt(r.avg_turns);
  j["avg_prompt_tokens"] = opt(r.avg_prompt_tokens);
  j["avg_response_tokens"] = opt(r.avg_response_tokens);
  return j;
}

inline nlohmann::ordered_json stats_json(const DatasetStats& s) {
  nlohmann::ordered_json j;
  j["total"] = stats_row_json(s.total);
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [src, row] : s.per_source) per[src] = stats_row_json(row);
  j["per_source"] = std::move(per);
  return j;
}

// Aligned table: one row per source, then the total.
inline std::string stats_table(const DatasetStats& s) {
  const auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream o;
    o << std::fixed << std::setprecision(1) << *v;
    return o.str();
  };
  std::size_t name_w = std::string_view("Dataset").size();
  for (const auto& [src, _] : s.per_source) name_w = std::max(name_w, src.size());
  name_w = std::max(name_w, std::string_view("Total").size());

  std::ostringstream out;
  const auto row = [&](const std::string& name, const std::string& a, const std::string& b,
                       const std::string& c, const std::string& d) {
    out << std::left << std::setw(static_cast<int>(name_w)) << name << std::right << "  "
        << std::setw(9) << a << "  " << std::setw(12) << b << "  " << std::setw(22) << c << "  "
        << std::setw(24) << d << '\n';
  };
  row("Dataset", "# Pairs", "Avg. # Turns", "Avg. # Tokens (Prompt)", "Avg. # Tokens (Response)");
  out << std::string(name_w + 2 + 9 + 2 + 12 + 2 + 22 + 2 + 24, '-') << '\n';
  for (const auto& [src, r] : s.per_source) {
    row(src, std::to_string(r.num_pairs), fmt(r.avg_turns), fmt(r.avg_prompt_tokens),
        fmt(r.avg_response_tokens));
  }
  out << std::string(name_w + 2 + 9 + 2 + 12 + 2 + 22 + 2 + 24, '-') << '\n';
  row("Total", std::to_string(s.total.num_pairs), fmt(s.total.avg_turns),
      fmt(s.total.avg_prompt_tokens), fmt(s.total.avg_response_tokens));
  return out.str();
}

}  // namespace prefkit

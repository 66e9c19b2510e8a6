#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefkit/core.hpp"
#include "prefkit/ingest.hpp"

namespace prefkit {

enum class Bucket { math, coding, other };

inline constexpr std::array<Bucket, 3> kBuckets = {Bucket::math, Bucket::coding, Bucket::other};

inline std::string_view to_string(Bucket b) {
  switch (b) {
    case Bucket::math: return "math";
    case Bucket::coding: return "coding";
    case Bucket::other: return "other";
  }
  return "?";
}

inline std::optional<Bucket> parse_bucket(std::string_view s) {
  for (Bucket b : kBuckets) {
    if (s == to_string(b)) return b;
  }
  return std::nullopt;
}

inline std::string fold_category(std::string_view raw) {
  std::size_t b = 0, e = raw.size();
  while (b < e && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(raw[e - 1]))) --e;
  std::string out(raw.substr(b, e - b));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

struct SelectionConfig {
  // Per-source score corrections aligning generator score distributions.
  std::map<std::string, double> source_offsets = {{"magpie-air", -0.1},
                                                  {"magpie-pro-llama3", -0.05}};
  std::map<Bucket, double> category_fractions = {
      {Bucket::math, 0.30}, {Bucket::coding, 0.30}, {Bucket::other, 0.10}};
  // Keys are matched case-insensitively after trimming. Unlisted categories are `other`.
  std::map<std::string, Bucket> category_aliases = {
      {"math", Bucket::math},
      {"coding & debugging", Bucket::coding},
      {"coding", Bucket::coding},
      {"code", Bucket::coding},
  };

  double offset(const std::string& source) const {
    auto it = source_offsets.find(source);
    return it == source_offsets.end() ? 0.0 : it->second;
  }

  double fraction(Bucket b) const {
    auto it = category_fractions.find(b);
    return it == category_fractions.end() ? 0.0 : it->second;
  }

  Bucket bucket_of(const std::optional<std::string>& category) const {
    if (!category) return Bucket::other;
    auto it = category_aliases.find(fold_category(*category));
    return it == category_aliases.end() ? Bucket::other : it->second;
  }

  void validate() const {
    for (const auto& [src, off] : source_offsets) {
      if (!std::isfinite(off)) throw ConfigError("offset for " + src + " is not finite");
    }
    for (const auto& [b, f] : category_fractions) {
      if (!(f >= 0.0 && f <= 1.0)) {
        throw ConfigError("fraction for " + std::string(to_string(b)) + " must lie in [0, 1]");
      }
    }
  }

  // Entries in `j` extend or override the defaults.
  static SelectionConfig from_json(const json& j) {
    SelectionConfig c;
    if (auto it = j.find("source_offsets"); it != j.end()) {
      for (const auto& [src, v] : it->items()) c.source_offsets[src] = v.get<double>();
    }
    if (auto it = j.find("category_fractions"); it != j.end()) {
      for (const auto& [name, v] : it->items()) {
        auto b = parse_bucket(name);
        if (!b) throw ConfigError("unknown bucket in category_fractions: " + name);
        c.category_fractions[*b] = v.get<double>();
      }
    }
    if (auto it = j.find("category_aliases"); it != j.end()) {
      for (const auto& [raw, v] : it->items()) {
        auto b = parse_bucket(v.get<std::string>());
        if (!b) throw ConfigError("alias " + raw + " targets unknown bucket");
        c.category_aliases[fold_category(raw)] = *b;
      }
    }
    c.validate();
    return c;
  }
};

struct ScoredPair {
  PreferencePair pair;
  double pair_score = 0.0;
};

// Mean of the two response scores plus the source offset.
inline ScoredPair score_pair(const PreferencePair& pair, const SelectionConfig& cfg) {
  if (!pair.chosen_score || !pair.rejected_score) {
    throw StageError("select", "pair " + pair.id + " lacks chosen_score or rejected_score");
  }
  const double score = (*pair.chosen_score + *pair.rejected_score) / 2.0 + cfg.offset(pair.source);
  if (!std::isfinite(score)) throw StageError("select", "pair " + pair.id + " has a non-finite score");
  return {pair, score};
}

struct BucketRow {
  Bucket bucket = Bucket::other;
  std::size_t input_count = 0;
  std::size_t selected_count = 0;
  std::optional<double> threshold;  // lowest selected score
};

struct CategoryRow {
  std::string category;
  std::size_t count = 0;
  double percentage = 0.0;
};

struct SelectionReport {
  std::vector<BucketRow> buckets;        // math, coding, other
  std::vector<CategoryRow> categories;   // raw task categories among the selection, largest first
  std::size_t total_selected = 0;
};

struct SelectionResult {
  std::vector<ScoredPair> selected;
  SelectionReport report;
};

// Higher score first; equal scores fall back to ascending id.
inline bool ranks_before(const ScoredPair& a, const ScoredPair& b) {
  if (a.pair_score != b.pair_score) return a.pair_score > b.pair_score;
  return a.pair.id < b.pair.id;
}

/// Within each bucket keeps the top floor(fraction * size) pairs by score.
/// Output order is math, coding, other, best first inside each bucket.
inline SelectionResult select_top(const std::vector<ScoredPair>& pairs, const SelectionConfig& cfg) {
  cfg.validate();
  std::map<Bucket, std::vector<const ScoredPair*>> buckets;
  for (const auto& sp : pairs) buckets[cfg.bucket_of(sp.pair.task_category)].push_back(&sp);

  SelectionResult res;
  for (Bucket b : kBuckets) {
    auto& members = buckets[b];
    std::sort(members.begin(), members.end(),
              [](const ScoredPair* x, const ScoredPair* y) { return ranks_before(*x, *y); });
    const auto k = static_cast<std::size_t>(
        std::floor(cfg.fraction(b) * static_cast<double>(members.size())));
    BucketRow row{b, members.size(), k, std::nullopt};
    for (std::size_t i = 0; i < k; ++i) res.selected.push_back(*members[i]);
    if (k > 0) row.threshold = members[k - 1]->pair_score;
    res.report.buckets.push_back(row);
  }
  res.report.total_selected = res.selected.size();

  std::map<std::string, std::size_t> counts;
  for (const auto& sp : res.selected) counts[sp.pair.task_category.value_or("(none)")] += 1;
  for (const auto& [cat, n] : counts) {
    const double pct = res.selected.empty()
                           ? 0.0
                           : 100.0 * static_cast<double>(n) / static_cast<double>(res.selected.size());
    res.report.categories.push_back({cat, n, pct});
  }
  std::stable_sort(res.report.categories.begin(), res.report.categories.end(),
                   [](const CategoryRow& a, const CategoryRow& b) { return a.count > b.count; });
  return res;
}

inline nlohmann::ordered_json selection_report_json(const SelectionReport& r) {
  using oj = nlohmann::ordered_json;
  oj j;
  oj buckets = oj::array();
  for (const auto& b : r.buckets) {
    const double pct = r.total_selected == 0 ? 0.0
                                             : 100.0 * static_cast<double>(b.selected_count) /
                                                   static_cast<double>(r.total_selected);
    buckets.push_back({{"category", std::string(to_string(b.bucket))},
                       {"input_count", b.input_count},
                       {"count", b.selected_count},
                       {"percentage", pct},
                       {"threshold", b.threshold ? oj(*b.threshold) : oj(nullptr)}});
  }
  j["buckets"] = std::move(buckets);
  oj cats = oj::array();
  for (const auto& c : r.categories) {
    cats.push_back({{"category", c.category}, {"count", c.count}, {"percentage", c.percentage}});
  }
  j["categories"] = std::move(cats);
  j["total"] = r.total_selected;
  return j;
}

// Keeps records whose chosen response is strictly more helpful than the rejected one.
inline std::vector<PreferencePair> helpsteer_filter(const std::vector<HelpfulnessRecord>& records) {
  std::vector<PreferencePair> out;
  for (const auto& r : records) {
    if (r.chosen_helpfulness > r.rejected_helpfulness) out.push_back(r.pair);
  }
  return out;
}

}  // namespace prefkit

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefkit/core.hpp"

namespace prefkit {

namespace detail {

// Decodes one UTF-8 scalar starting at text[i]; invalid bytes decode as themselves.
inline char32_t next_codepoint(std::string_view text, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  std::size_t extra = 0;
  char32_t cp = b0;
  if (b0 >= 0xC0 && b0 < 0xE0) {
    extra = 1;
    cp = b0 & 0x1F;
  } else if (b0 >= 0xE0 && b0 < 0xF0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if (b0 >= 0xF0 && b0 < 0xF8) {
    extra = 3;
    cp = b0 & 0x07;
  }
  if (extra == 0 || i + extra >= text.size()) {
    ++i;
    return b0;
  }
  for (std::size_t k = 1; k <= extra; ++k) {
    const auto b = static_cast<unsigned char>(text[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += extra + 1;
  return cp;
}

inline bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

inline bool is_punctuation(char32_t c) {
  if (c < 0x80) return std::ispunct(static_cast<int>(c)) != 0;
  return c == 0xA1 || c == 0xA7 || c == 0xAB || c == 0xB6 || c == 0xB7 || c == 0xBB ||
         c == 0xBF || (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
         (c >= 0x3001 && c <= 0x3003) || (c >= 0x3008 && c <= 0x3011) ||
         (c >= 0xFF01 && c <= 0xFF0F);
}

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Lowercases ASCII letters, deletes punctuation and splits on Unicode whitespace.
/// Punctuation is removed in place, so "don't" becomes "dont".
inline std::vector<std::string> normalize_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const char32_t cp = detail::next_codepoint(text, i);
    if (detail::is_unicode_space(cp)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else if (detail::is_punctuation(cp)) {
      continue;
    } else if (cp < 0x80) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<int>(cp))));
    } else {
      cur.append(text.substr(start, i - start));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Hash of tokens[begin, begin + n). The window length seeds the hash.
inline std::uint64_t gram_hash(const std::vector<std::uint64_t>& token_hashes, std::size_t begin,
                               std::size_t n) {
  std::uint64_t h = detail::mix64(n);
  for (std::size_t k = 0; k < n; ++k) h = detail::mix64(h ^ token_hashes[begin + k]);
  return h;
}

inline std::vector<std::uint64_t> hash_tokens(const std::vector<std::string>& tokens) {
  std::vector<std::uint64_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(fnv1a(t));
  return out;
}

inline constexpr int kDefaultNgramMin = 7;
inline constexpr int kDefaultNgramMax = 13;

/// Hashed n-grams (n_min <= n <= n_max) over a set of evaluation prompts.
class NgramIndex {
 public:
  NgramIndex(int n_min = kDefaultNgramMin, int n_max = kDefaultNgramMax) : n_min_(n_min), n_max_(n_max) {
    if (n_min < 1 || n_min > n_max) throw ConfigError("n-gram range requires 1 <= n_min <= n_max");
  }

  int n_min() const noexcept { return n_min_; }
  int n_max() const noexcept { return n_max_; }
  std::size_t eval_count() const noexcept { return eval_grams_.size(); }
  std::size_t gram_count() const noexcept { return postings_.size(); }

  // Sorted, deduplicated gram hashes of eval prompt `i`.
  const std::vector<std::uint64_t>& eval_prompt_grams(std::size_t i) const { return eval_grams_.at(i); }

  void add(std::string_view prompt) {
    const auto idx = static_cast<std::uint32_t>(eval_grams_.size());
    auto grams = windows(hash_tokens(normalize_tokens(prompt)));
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    for (auto g : grams) postings_[g].push_back(idx);
    eval_grams_.push_back(std::move(grams));
  }

  // Eval prompt indices containing gram `h`, ascending; null when absent.
  const std::vector<std::uint32_t>* lookup(std::uint64_t h) const {
    auto it = postings_.find(h);
    return it == postings_.end() ? nullptr : &it->second;
  }

  // Every window hash of the token sequence for n in range.
  std::vector<std::uint64_t> windows(const std::vector<std::uint64_t>& token_hashes) const {
    std::vector<std::uint64_t> out;
    for (int n = n_min_; n <= n_max_; ++n) {
      const auto len = static_cast<std::size_t>(n);
      if (token_hashes.size() < len) break;
      for (std::size_t b = 0; b + len <= token_hashes.size(); ++b) out.push_back(gram_hash(token_hashes, b, len));
    }
    return out;
  }

 private:
  int n_min_;
  int n_max_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> postings_;
  std::vector<std::vector<std::uint64_t>> eval_grams_;
};

inline NgramIndex build_index(const std::vector<std::string>& eval_prompts, int n_min = kDefaultNgramMin,
                              int n_max = kDefaultNgramMax) {
  NgramIndex index(n_min, n_max);
  for (const auto& p : eval_prompts) index.add(p);
  return index;
}

struct PairMatch {
  std::size_t pair_index = 0;
  std::string pair_id;
  std::string source;
  std::vector<std::uint32_t> eval_indices;  // ascending
  int longest_n = 0;
};

struct SourceContamination {
  std::size_t pairs = 0;
  std::size_t eval_prompts_matched = 0;
  std::size_t contaminated = 0;
};

struct ContaminationReport {
  int n_min = kDefaultNgramMin;
  int n_max = kDefaultNgramMax;
  std::size_t eval_prompts = 0;
  std::size_t dataset_pairs = 0;
  std::size_t eval_prompts_matched = 0;
  std::size_t dataset_prompts_contaminated = 0;
  std::vector<PairMatch> matches;  // in input order
  std::map<std::string, SourceContamination> per_source;
};

// Matches of one prompt against the index; eval indices come back sorted.
inline PairMatch match_prompt(const std::vector<ConversationTurn>& prompt, const NgramIndex& index) {
  PairMatch m;
  const auto th = hash_tokens(normalize_tokens(prompt_text(prompt)));
  std::set<std::uint32_t> hits;
  for (int n = index.n_min(); n <= index.n_max(); ++n) {
    const auto len = static_cast<std::size_t>(n);
    if (th.size() < len) break;
    for (std::size_t b = 0; b + len <= th.size(); ++b) {
      if (const auto* post = index.lookup(gram_hash(th, b, len))) {
        hits.insert(post->begin(), post->end());
        m.longest_n = n;
      }
    }
  }
  m.eval_indices.assign(hits.begin(), hits.end());
  return m;
}

/// A pair is contaminated when its prompt shares any indexed n-gram with an eval
/// prompt. Both headline counts come from the same set of matches.
inline ContaminationReport scan(const std::vector<PreferencePair>& pairs, const NgramIndex& index) {
  ContaminationReport r;
  r.n_min = index.n_min();
  r.n_max = index.n_max();
  r.eval_prompts = index.eval_count();
  r.dataset_pairs = pairs.size();
  std::set<std::uint32_t> matched;
  std::map<std::string, std::set<std::uint32_t>> matched_by_source;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& src = r.per_source[pairs[i].source];
    src.pairs += 1;
    PairMatch m = match_prompt(pairs[i].prompt, index);
    if (m.eval_indices.empty()) continue;
    m.pair_index = i;
    m.pair_id = pairs[i].id;
    m.source = pairs[i].source;
    src.contaminated += 1;
    matched.insert(m.eval_indices.begin(), m.eval_indices.end());
    matched_by_source[m.source].insert(m.eval_indices.begin(), m.eval_indices.end());
    r.matches.push_back(std::move(m));
  }
  r.eval_prompts_matched = matched.size();
  r.dataset_prompts_contaminated = r.matches.size();
  for (auto& [name, s] : r.per_source) s.eval_prompts_matched = matched_by_source[name].size();
  return r;
}

struct DecontamResult {
  std::vector<PreferencePair> clean;
  std::vector<PreferencePair> removed;
  ContaminationReport report;
};

inline DecontamResult decontaminate(const std::vector<PreferencePair>& pairs, const NgramIndex& index) {
  DecontamResult out;
  out.report = scan(pairs, index);
  std::vector<bool> flagged(pairs.size(), false);
  for (const auto& m : out.report.matches) flagged[m.pair_index] = true;
  for (std::size_t i = 0; i < pairs.size(); ++i) (flagged[i] ? out.removed : out.clean).push_back(pairs[i]);
  return out;
}

inline nlohmann::ordered_json contamination_json(const ContaminationReport& r) {
  using oj = nlohmann::ordered_json;
  oj j;
  j["n_min"] = r.n_min;
  j["n_max"] = r.n_max;
  j["eval_prompts"] = r.eval_prompts;
  j["dataset_pairs"] = r.dataset_pairs;
  j["eval_prompts_matched"] = r.eval_prompts_matched;
  j["dataset_prompts_contaminated"] = r.dataset_prompts_contaminated;
  oj per = oj::object();
  for (const auto& [name, s] : r.per_source) {
    per[name] = {{"pairs", s.pairs},
                 {"eval_prompts_matched", s.eval_prompts_matched},
                 {"contaminated", s.contaminated}};
  }
  j["per_source"] = std::move(per);
  oj matches = oj::array();
  for (const auto& m : r.matches) {
    matches.push_back({{"pair_id", m.pair_id},
                       {"source", m.source},
                       {"eval_indices", m.eval_indices},
                       {"longest_n", m.longest_n}});
  }
  j["matches"] = std::move(matches);
  return j;
}

// Per-source table: eval prompts with a match, and contaminated dataset prompts.
inline std::string contamination_table(const ContaminationReport& r) {
  const std::string col1 = "# Eval Prompts With >=" + std::to_string(r.n_min) + "-Gram Match";
  const std::string col2 = "# Contaminated Prompts";
  std::size_t name_w = std::string_view("Dataset").size();
  for (const auto& [name, _] : r.per_source) name_w = std::max(name_w, name.size());
  std::ostringstream out;
  const auto row = [&](const std::string& a, const std::string& b, const std::string& c) {
    out << std::left << std::setw(static_cast<int>(name_w)) << a << std::right << "  "
        << std::setw(static_cast<int>(col1.size())) << b << "  " << std::setw(static_cast<int>(col2.size()))
        << c << '\n';
  };
  const std::string rule(name_w + 4 + col1.size() + col2.size(), '-');
  row("Dataset", col1, col2);
  out << rule << '\n';
  for (const auto& [name, s] : r.per_source) {
    row(name, std::to_string(s.eval_prompts_matched), std::to_string(s.contaminated));
  }
  out << rule << '\n';
  row("Total", std::to_string(r.eval_prompts_matched), std::to_string(r.dataset_prompts_contaminated));
  return out.str();
}

}  // namespace prefkit

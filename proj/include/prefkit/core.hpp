#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace prefkit {

// Error hierarchy. The CLI maps each family onto its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

enum class Role { user, assistant };

inline std::string_view to_string(Role r) {
  return r == Role::user ? "user" : "assistant";
}

inline std::optional<Role> parse_role(std::string_view s) {
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  return std::nullopt;
}

struct ConversationTurn {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const ConversationTurn&, const ConversationTurn&) = default;
};

struct PreferencePair {
  std::string id;
  std::vector<ConversationTurn> prompt;
  std::string chosen;
  std::string rejected;
  std::string source;
  std::optional<std::string> task_category;
  std::optional<double> chosen_score;
  std::optional<double> rejected_score;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

/// Names of every violated PreferencePair invariant. Empty means valid.
struct Validation {
  std::vector<std::string> violations;

  bool ok() const noexcept { return violations.empty(); }
  explicit operator bool() const noexcept { return ok(); }
};

inline Validation validate_pair(const PreferencePair& pair) {
  Validation v;
  if (pair.prompt.empty()) {
    v.violations.emplace_back("empty prompt");
  } else {
    bool alternates = true;
    for (std::size_t i = 0; i < pair.prompt.size(); ++i) {
      const Role expected = (i % 2 == 0) ? Role::user : Role::assistant;
      if (pair.prompt[i].role != expected) alternates = false;
    }
    if (!alternates) v.violations.emplace_back("roles do not alternate starting with user");
    if (std::any_of(pair.prompt.begin(), pair.prompt.end(),
                    [](const ConversationTurn& t) { return is_blank(t.content); })) {
      v.violations.emplace_back("blank turn content");
    }
  }
  if (pair.chosen == pair.rejected) v.violations.emplace_back("chosen equals rejected");
  const auto non_finite = [](const std::optional<double>& s) {
    return s.has_value() && !std::isfinite(*s);
  };
  if (non_finite(pair.chosen_score) || non_finite(pair.rejected_score)) {
    v.violations.emplace_back("non-finite score");
  }
  return v;
}

// Averages over an empty set are absent rather than zero.
struct StatsRow {
  std::size_t num_pairs = 0;
  std::optional<double> avg_turns;
  std::optional<double> avg_prompt_tokens;
  std::optional<double> avg_response_tokens;

  friend bool operator==(const StatsRow&, const StatsRow&) = default;
};

struct DatasetStats {
  StatsRow total;
  std::map<std::string, StatsRow> per_source;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

// 64-bit FNV-1a. Used for stable content-derived identifiers and n-gram keys.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// Prompt turns joined with newlines, for scanning and token counting.
inline std::string prompt_text(const std::vector<ConversationTurn>& prompt) {
  std::string out;
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    if (i) out.push_back('\n');
    out += prompt[i].content;
  }
  return out;
}

}  // namespace prefkit

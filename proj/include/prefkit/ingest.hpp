#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefkit/core.hpp"

namespace prefkit {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Thrown by record parsers for a line that should be skipped, not fatal.
class RecordError : public Error {
 public:
  using Error::Error;
};

struct Skip {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

template <class T>
struct ReadResult {
  std::vector<T> records;
  std::vector<Skip> skips;
  std::size_t lines = 0;  // non-blank lines seen
};

inline constexpr double kDefaultMaxSkipRatio = 0.5;

/// Reads a JSON Lines file, one record per non-blank line.
///
/// `parse(const json&, line)` returns a record or throws RecordError; such lines
/// are recorded as skips. The whole read fails once skips exceed
/// `max_skip_ratio` of the lines, since that usually means the wrong schema.
template <class Parse>
auto read_jsonl(const std::filesystem::path& path, Parse&& parse,
                double max_skip_ratio = kDefaultMaxSkipRatio) {
  using T = std::decay_t<decltype(parse(std::declval<const json&>(), std::size_t{}))>;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  ReadResult<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    ++out.lines;
    json doc = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) {
      out.skips.push_back({line_no, "malformed JSON"});
      continue;
    }
    if (!doc.is_object()) {
      out.skips.push_back({line_no, "record is not a JSON object"});
      continue;
    }
    try {
      out.records.push_back(parse(doc, line_no));
    } catch (const RecordError& e) {
      out.skips.push_back({line_no, e.what()});
    }
  }
  if (in.bad()) throw IngestError("read failure on " + path.string());
  if (out.lines > 0) {
    const double ratio = static_cast<double>(out.skips.size()) / static_cast<double>(out.lines);
    if (ratio > max_skip_ratio) {
      std::ostringstream msg;
      msg << path.string() << ": skip ratio " << ratio << " exceeds " << max_skip_ratio;
      throw IngestError(msg.str());
    }
  }
  return out;
}

// Writes one compact JSON object per line. Newlines inside strings are escaped
// by the serializer, so a record never spans lines.
template <class Range, class ToJson>
std::size_t write_jsonl(const std::filesystem::path& path, const Range& records, ToJson&& to_json) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  std::size_t n = 0;
  for (const auto& r : records) {
    out << to_json(r).dump() << '\n';
    ++n;
  }
  out.flush();
  if (!out) throw IngestError("write failure on " + path.string());
  return n;
}

namespace fields {

inline const json& require(const json& doc, const std::string& key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) throw RecordError("missing field: " + key);
  return *it;
}

inline std::string require_string(const json& doc, const std::string& key) {
  const json& v = require(doc, key);
  if (!v.is_string()) throw RecordError("field " + key + " is not a string");
  return v.get<std::string>();
}

inline bool require_bool(const json& doc, const std::string& key) {
  const json& v = require(doc, key);
  if (!v.is_boolean()) throw RecordError("field " + key + " is not a boolean");
  return v.get<bool>();
}

inline double require_number(const json& doc, const std::string& key) {
  const json& v = require(doc, key);
  if (!v.is_number()) throw RecordError("field " + key + " is not a number");
  return v.get<double>();
}

inline std::optional<std::string> optional_string(const json& doc, const std::string& key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw RecordError("field " + key + " is not a string");
  return it->get<std::string>();
}

inline std::optional<double> optional_number(const json& doc, const std::string& key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw RecordError("field " + key + " is not a number");
  return it->get<double>();
}

// A prompt is either a plain string (one user turn) or an array of {role, content}.
inline std::vector<ConversationTurn> parse_turns(const json& v, const std::string& key) {
  std::vector<ConversationTurn> turns;
  if (v.is_string()) {
    turns.push_back({Role::user, v.get<std::string>()});
    return turns;
  }
  if (!v.is_array()) throw RecordError("field " + key + " is neither a string nor an array");
  for (const json& t : v) {
    if (!t.is_object()) throw RecordError("prompt turn is not an object");
    const std::string role_name = require_string(t, "role");
    auto role = parse_role(role_name);
    if (!role) throw RecordError("unknown role: " + role_name);
    turns.push_back({*role, require_string(t, "content")});
  }
  return turns;
}

}  // namespace fields

/// Maps external record keys onto pair fields, and optionally stamps a source label.
struct RecordSchema {
  // external key -> internal field name; unmapped internal fields read their own name.
  std::map<std::string, std::string> mapping;
  std::string source;  // overrides the record's source when non-empty
  double max_skip_ratio = kDefaultMaxSkipRatio;

  static const std::vector<std::string>& internal_fields() {
    static const std::vector<std::string> names = {
        "id",     "prompt",        "chosen",       "rejected",      "source",
        "task_category", "chosen_score", "rejected_score", "chosen_helpfulness",
        "rejected_helpfulness"};
    return names;
  }

  // External key under which `internal` is read.
  std::string key(const std::string& internal) const {
    for (const auto& [ext, in] : mapping) {
      if (in == internal) return ext;
    }
    return internal;
  }

  void validate() const {
    std::map<std::string, int> seen;
    for (const auto& [ext, in] : mapping) {
      const auto& names = internal_fields();
      if (std::find(names.begin(), names.end(), in) == names.end()) {
        throw ConfigError("schema maps '" + ext + "' to unknown field '" + in + "'");
      }
      if (++seen[in] > 1) throw ConfigError("schema maps several keys onto '" + in + "'");
    }
    if (!(max_skip_ratio >= 0.0 && max_skip_ratio <= 1.0)) {
      throw ConfigError("max_skip_ratio must lie in [0, 1]");
    }
  }

  static RecordSchema from_json(const json& j) {
    RecordSchema s;
    if (j.contains("fields")) {
      for (const auto& [ext, in] : j.at("fields").items()) s.mapping[ext] = in.get<std::string>();
    }
    s.source = j.value("source", std::string{});
    s.max_skip_ratio = j.value("max_skip_ratio", kDefaultMaxSkipRatio);
    s.validate();
    return s;
  }
};

// Parses one record. Pairs failing validate_pair are rejected with the violation list.
inline PreferencePair pair_from_json(const json& doc, std::size_t line, const RecordSchema& schema) {
  PreferencePair p;
  p.prompt = fields::parse_turns(fields::require(doc, schema.key("prompt")), schema.key("prompt"));
  p.chosen = fields::require_string(doc, schema.key("chosen"));
  p.rejected = fields::require_string(doc, schema.key("rejected"));
  if (!schema.source.empty()) {
    p.source = schema.source;
  } else {
    p.source = fields::require_string(doc, schema.key("source"));
  }
  p.id = fields::optional_string(doc, schema.key("id"))
             .value_or(p.source + ":" + std::to_string(line));
  p.task_category = fields::optional_string(doc, schema.key("task_category"));
  p.chosen_score = fields::optional_number(doc, schema.key("chosen_score"));
  p.rejected_score = fields::optional_number(doc, schema.key("rejected_score"));
  if (auto v = validate_pair(p); !v) {
    std::string reason = "invalid pair:";
    for (const auto& s : v.violations) reason += " " + s + ";";
    reason.pop_back();
    throw RecordError(reason);
  }
  return p;
}

inline ordered_json pair_to_json(const PreferencePair& p) {
  ordered_json j;
  j["id"] = p.id;
  ordered_json turns = ordered_json::array();
  for (const auto& t : p.prompt) {
    turns.push_back({{"role", std::string(to_string(t.role))}, {"content", t.content}});
  }
  j["prompt"] = std::move(turns);
  j["chosen"] = p.chosen;
  j["rejected"] = p.rejected;
  j["source"] = p.source;
  if (p.task_category) j["task_category"] = *p.task_category;
  if (p.chosen_score) j["chosen_score"] = *p.chosen_score;
  if (p.rejected_score) j["rejected_score"] = *p.rejected_score;
  return j;
}

inline ReadResult<PreferencePair> read_pairs(const std::filesystem::path& path,
                                             const RecordSchema& schema = {}) {
  return read_jsonl(
      path, [&](const json& doc, std::size_t line) { return pair_from_json(doc, line, schema); },
      schema.max_skip_ratio);
}

inline std::size_t write_pairs(const std::vector<PreferencePair>& pairs,
                               const std::filesystem::path& path) {
  return write_jsonl(path, pairs, pair_to_json);
}

/// A pair with the two helpfulness ratings used by the strict helpfulness filter.
struct HelpfulnessRecord {
  PreferencePair pair;
  double chosen_helpfulness = 0.0;
  double rejected_helpfulness = 0.0;
};

inline ReadResult<HelpfulnessRecord> read_helpfulness_records(const std::filesystem::path& path,
                                                              const RecordSchema& schema = {}) {
  return read_jsonl(
      path,
      [&](const json& doc, std::size_t line) {
        HelpfulnessRecord r;
        r.pair = pair_from_json(doc, line, schema);
        r.chosen_helpfulness = fields::require_number(doc, schema.key("chosen_helpfulness"));
        r.rejected_helpfulness = fields::require_number(doc, schema.key("rejected_helpfulness"));
        if (!std::isfinite(r.chosen_helpfulness) || !std::isfinite(r.rejected_helpfulness)) {
          throw RecordError("non-finite helpfulness");
        }
        return r;
      },
      schema.max_skip_ratio);
}

// Prompts of an evaluation set: any JSON Lines file with a `prompt` field.
inline std::vector<std::string> read_prompts(const std::filesystem::path& path,
                                             double max_skip_ratio = kDefaultMaxSkipRatio) {
  auto r = read_jsonl(
      path,
      [](const json& doc, std::size_t) {
        return prompt_text(fields::parse_turns(fields::require(doc, "prompt"), "prompt"));
      },
      max_skip_ratio);
  return std::move(r.records);
}

}  // namespace prefkit

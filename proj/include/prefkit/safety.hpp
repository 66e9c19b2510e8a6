#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "prefkit/core.hpp"
#include "prefkit/ingest.hpp"

namespace prefkit {

struct SafetyRecord {
  std::string prompt;
  std::string response;
  bool prompt_harmful = false;
  bool response_refusal = false;
  bool adversarial = false;

  friend bool operator==(const SafetyRecord&, const SafetyRecord&) = default;
};

// Rewards a previously trained model assigned to one pair.
struct RmJudgment {
  std::string pair_id;
  double chosen_reward = 0.0;
  double rejected_reward = 0.0;

  friend bool operator==(const RmJudgment&, const RmJudgment&) = default;
};

struct SafetyPair {
  PreferencePair pair;
  bool adversarial = false;
};

struct SafetyOptions {
  std::string source = "wildguardmix";
  std::optional<std::size_t> max_pairs_per_prompt;  // unlimited when empty
};

/// Groups records by exact prompt text and pairs every refusal with every compliance.
///
/// Harmful prompts prefer the refusal; benign prompts prefer the compliance.
/// A pair is adversarial only when both of its records are. Groups whose records
/// disagree on prompt_harmful are an annotation error. Responses identical in
/// text across the two sides cannot form a valid pair and are skipped.
inline std::vector<SafetyPair> build_safety_pairs(const std::vector<SafetyRecord>& records,
                                                  const SafetyOptions& opts = {}) {
  std::map<std::string, std::vector<const SafetyRecord*>> groups;
  for (const auto& r : records) {
    if (is_blank(r.prompt) || is_blank(r.response)) {
      throw StageError("safety", "safety record with blank prompt or response");
    }
    groups[r.prompt].push_back(&r);
  }

  const auto canonical = [](const SafetyRecord* a, const SafetyRecord* b) {
    return std::tie(a->response, a->adversarial) < std::tie(b->response, b->adversarial);
  };

  std::vector<SafetyPair> out;
  for (auto& [prompt, members] : groups) {
    const bool harmful = members.front()->prompt_harmful;
    if (std::any_of(members.begin(), members.end(),
                    [&](const SafetyRecord* r) { return r->prompt_harmful != harmful; })) {
      throw StageError("safety", "contradictory prompt_harmful labels for prompt: " + prompt);
    }
    std::vector<const SafetyRecord*> refusals, compliances;
    for (const auto* r : members) (r->response_refusal ? refusals : compliances).push_back(r);
    std::stable_sort(refusals.begin(), refusals.end(), canonical);
    std::stable_sort(compliances.begin(), compliances.end(), canonical);

    const std::string group_key = hex64(fnv1a(prompt));
    std::size_t emitted = 0;
    for (std::size_t i = 0; i < refusals.size(); ++i) {
      for (std::size_t j = 0; j < compliances.size(); ++j) {
        if (opts.max_pairs_per_prompt && emitted >= *opts.max_pairs_per_prompt) break;
        const auto* good = harmful ? refusals[i] : compliances[j];
        const auto* bad = harmful ? compliances[j] : refusals[i];
        if (good->response == bad->response) continue;
        SafetyPair sp;
        sp.pair.id = opts.source + ":" + group_key + ":" + std::to_string(i) + ":" + std::to_string(j);
        sp.pair.prompt = {{Role::user, prompt}};
        sp.pair.chosen = good->response;
        sp.pair.rejected = bad->response;
        sp.pair.source = opts.source;
        sp.adversarial = good->adversarial && bad->adversarial;
        out.push_back(std::move(sp));
        ++emitted;
      }
    }
  }
  return out;
}

// Stage one: only the adversarial pairs move on.
inline std::vector<SafetyPair> stage1_filter(const std::vector<SafetyPair>& pairs) {
  std::vector<SafetyPair> out;
  std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(out),
               [](const SafetyPair& p) { return p.adversarial; });
  return out;
}

inline const PreferencePair& pair_of(const PreferencePair& p) { return p; }
inline const PreferencePair& pair_of(const SafetyPair& p) { return p.pair; }

using JudgmentMap = std::unordered_map<std::string, RmJudgment>;

// Stage two: keep pairs the earlier model already ranked correctly (ties are not correct).
template <class P>
std::vector<P> stage2_filter(const std::vector<P>& pairs, const JudgmentMap& judgments) {
  std::vector<P> out;
  for (const auto& p : pairs) {
    const auto& id = pair_of(p).id;
    auto it = judgments.find(id);
    if (it == judgments.end()) throw StageError("safety", "no judgment for pair " + id);
    if (it->second.chosen_reward > it->second.rejected_reward) out.push_back(p);
  }
  return out;
}

inline std::vector<PreferencePair> strip_flags(const std::vector<SafetyPair>& pairs) {
  std::vector<PreferencePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.pair);
  return out;
}

inline SafetyRecord safety_record_from_json(const json& doc) {
  SafetyRecord r;
  r.prompt = fields::require_string(doc, "prompt");
  r.response = fields::require_string(doc, "response");
  r.prompt_harmful = fields::require_bool(doc, "prompt_harmful");
  r.response_refusal = fields::require_bool(doc, "response_refusal");
  r.adversarial = fields::require_bool(doc, "adversarial");
  if (is_blank(r.prompt)) throw RecordError("blank prompt");
  if (is_blank(r.response)) throw RecordError("blank response");
  return r;
}

inline ordered_json safety_record_to_json(const SafetyRecord& r) {
  ordered_json j;
  j["prompt"] = r.prompt;
  j["response"] = r.response;
  j["prompt_harmful"] = r.prompt_harmful;
  j["response_refusal"] = r.response_refusal;
  j["adversarial"] = r.adversarial;
  return j;
}

inline ReadResult<SafetyRecord> read_safety_records(const std::filesystem::path& path,
                                                    double max_skip_ratio = kDefaultMaxSkipRatio) {
  return read_jsonl(
      path, [](const json& doc, std::size_t) { return safety_record_from_json(doc); },
      max_skip_ratio);
}

inline std::size_t write_safety_records(const std::vector<SafetyRecord>& records,
                                        const std::filesystem::path& path) {
  return write_jsonl(path, records, safety_record_to_json);
}

inline ordered_json judgment_to_json(const RmJudgment& j) {
  ordered_json o;
  o["pair_id"] = j.pair_id;
  o["chosen_reward"] = j.chosen_reward;
  o["rejected_reward"] = j.rejected_reward;
  return o;
}

inline JudgmentMap read_judgments(const std::filesystem::path& path,
                                  double max_skip_ratio = kDefaultMaxSkipRatio) {
  auto r = read_jsonl(
      path,
      [](const json& doc, std::size_t) {
        RmJudgment j;
        j.pair_id = fields::require_string(doc, "pair_id");
        j.chosen_reward = fields::require_number(doc, "chosen_reward");
        j.rejected_reward = fields::require_number(doc, "rejected_reward");
        if (!std::isfinite(j.chosen_reward) || !std::isfinite(j.rejected_reward)) {
          throw RecordError("non-finite reward");
        }
        return j;
      },
      max_skip_ratio);
  JudgmentMap out;
  for (auto& j : r.records) {
    const std::string id = j.pair_id;
    if (!out.emplace(id, std::move(j)).second) {
      throw IngestError(path.string() + ": duplicate judgment for pair " + id);
    }
  }
  return out;
}

inline std::size_t write_judgments(const std::vector<RmJudgment>& judgments,
                                   const std::filesystem::path& path) {
  return write_jsonl(path, judgments, judgment_to_json);
}

}  // namespace prefkit

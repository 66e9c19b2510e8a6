#include <random>

#include <gtest/gtest.h>

#include "prefkit/ingest.hpp"
#include "test_util.hpp"

namespace prefkit {
namespace {

using testing::TempDir;
using testing::write_file;

const char* kLine =
    R"({"id":"p%d","prompt":[{"role":"user","content":"q"}],"chosen":"a","rejected":"b","source":"s"})";

std::string line(int i) {
  char buf[256];
  std::snprintf(buf, sizeof buf, kLine, i);
  return buf;
}

TEST(ReadPairs, WellFormedFile) {
  TempDir dir;
  write_file(dir / "a.jsonl", line(1) + "\n" + line(2) + "\n" + line(3) + "\n");
  const auto r = read_pairs(dir / "a.jsonl");
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_TRUE(r.skips.empty());
  EXPECT_EQ(r.records[0].id, "p1");
  EXPECT_EQ(r.records[2].id, "p3");
}

TEST(ReadPairs, MissingFieldIsSkipped) {
  TempDir dir;
  write_file(dir / "a.jsonl",
             line(1) + "\n" + R"({"prompt":"q","chosen":"a","source":"s"})" + "\n");
  const auto r = read_pairs(dir / "a.jsonl");
  ASSERT_EQ(r.records.size(), 1u);
  ASSERT_EQ(r.skips.size(), 1u);
  EXPECT_EQ(r.skips[0].line, 2u);
  EXPECT_EQ(r.skips[0].reason, "missing field: rejected");
}

TEST(ReadPairs, TooManySkipsFails) {
  TempDir dir;
  std::string text;
  for (int i = 0; i < 4; ++i) text += line(i) + "\n";
  for (int i = 0; i < 6; ++i) text += "{not json\n";
  write_file(dir / "a.jsonl", text);
  try {
    read_pairs(dir / "a.jsonl");
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("skip ratio 0.6 exceeds 0.5"), std::string::npos) << e.what();
  }
  RecordSchema lenient;
  lenient.max_skip_ratio = 0.7;
  EXPECT_EQ(read_pairs(dir / "a.jsonl", lenient).records.size(), 4u);
}

TEST(ReadPairs, ExactlyHalfSkippedIsAccepted) {
  TempDir dir;
  write_file(dir / "a.jsonl", line(1) + "\n[]\n");
  const auto r = read_pairs(dir / "a.jsonl");
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.skips[0].reason, "record is not a JSON object");
}

TEST(ReadPairs, MissingFileIsFatal) {
  EXPECT_THROW(read_pairs("/nonexistent/prefkit/none.jsonl"), IngestError);
}

TEST(ReadPairs, SynthesizesIdAndAcceptsStringPrompt) {
  TempDir dir;
  write_file(dir / "a.jsonl", "\n" + std::string(R"({"prompt":"hello","chosen":"a","rejected":"b","source":"hs2"})") + "\r\n");
  const auto r = read_pairs(dir / "a.jsonl");
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].id, "hs2:2");
  ASSERT_EQ(r.records[0].prompt.size(), 1u);
  EXPECT_EQ(r.records[0].prompt[0].role, Role::user);
  EXPECT_EQ(r.records[0].prompt[0].content, "hello");
}

TEST(ReadPairs, SchemaMappingAndStamp) {
  TempDir dir;
  write_file(dir / "a.jsonl", R"({"instruction":"q","response_a":"good","response_b":"bad","score_a":0.9,"score_b":0.2,"task":"Math"})" "\n");
  const auto schema = RecordSchema::from_json(json::parse(R"({
      "fields": {"instruction": "prompt", "response_a": "chosen", "response_b": "rejected",
                 "score_a": "chosen_score", "score_b": "rejected_score", "task": "task_category"},
      "source": "magpie-air"})"));
  const auto r = read_pairs(dir / "a.jsonl", schema);
  ASSERT_EQ(r.records.size(), 1u);
  const auto& p = r.records[0];
  EXPECT_EQ(p.source, "magpie-air");
  EXPECT_EQ(p.id, "magpie-air:1");
  EXPECT_EQ(p.chosen, "good");
  EXPECT_EQ(p.chosen_score, 0.9);
  EXPECT_EQ(p.task_category, "Math");
}

TEST(RecordSchema, RejectsBadMappings) {
  EXPECT_THROW(RecordSchema::from_json(json::parse(R"({"fields":{"a":"prompt","b":"prompt"}})")), ConfigError);
  EXPECT_THROW(RecordSchema::from_json(json::parse(R"({"fields":{"a":"nonsense"}})")), ConfigError);
}

TEST(ReadPairs, InvalidPairsAndRolesAreSkips) {
  TempDir dir;
  write_file(dir / "a.jsonl",
             line(1) + "\n" +
                 R"({"prompt":"q","chosen":"same","rejected":"same","source":"s"})" "\n" +
                 R"({"prompt":[{"role":"system","content":"x"}],"chosen":"a","rejected":"b","source":"s"})" "\n" +
                 line(2) + "\n" + line(3) + "\n");
  const auto r = read_pairs(dir / "a.jsonl");
  EXPECT_EQ(r.records.size(), 3u);
  ASSERT_EQ(r.skips.size(), 2u);
  EXPECT_EQ(r.skips[0].reason, "invalid pair: chosen equals rejected");
  EXPECT_EQ(r.skips[1].reason, "unknown role: system");
}

TEST(WritePairs, EmptyList) {
  TempDir dir;
  EXPECT_EQ(write_pairs({}, dir / "out.jsonl"), 0u);
  EXPECT_EQ(testing::read_file(dir / "out.jsonl"), "");
}

TEST(WritePairs, FieldOrderIsFixed) {
  TempDir dir;
  PreferencePair p{"id1", {{Role::user, "q"}}, "a", "b", "src", "Math", 0.5, 0.25};
  write_pairs({p}, dir / "out.jsonl");
  EXPECT_EQ(testing::read_file(dir / "out.jsonl"),
            R"({"id":"id1","prompt":[{"role":"user","content":"q"}],"chosen":"a","rejected":"b","source":"src",)"
            R"("task_category":"Math","chosen_score":0.5,"rejected_score":0.25})" "\n");
}

// Strings full of characters that break naive line-oriented formats.
std::string adversarial_string(std::mt19937_64& rng) {
  static const std::vector<std::string> atoms = {
      "a", "Z", " ", "\n", "\r\n", "\t", "\"", "\\", "{", "}", "[", "]", ",", ":", "\xc3\xa9", "\xe4\xb8\xad",
      "\xf0\x9f\x98\x80", "\x01", "\x7f", "null", "\\n", " "};
  std::uniform_int_distribution<std::size_t> len(1, 24), pick(0, atoms.size() - 1);
  std::string s = "x";
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) s += atoms[pick(rng)];
  return s;
}

TEST(WritePairs, RoundTripProperty) {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<int> turns(1, 5), coin(0, 1);
  std::normal_distribution<double> score(0.0, 10.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<PreferencePair> pairs;
    for (int i = 0; i < 40; ++i) {
      PreferencePair p;
      p.id = adversarial_string(rng);
      const int t = turns(rng);
      for (int k = 0; k < t; ++k) p.prompt.push_back({k % 2 ? Role::assistant : Role::user, adversarial_string(rng)});
      p.chosen = adversarial_string(rng);
      do p.rejected = adversarial_string(rng);
      while (p.rejected == p.chosen);
      p.source = adversarial_string(rng);
      if (coin(rng)) p.task_category = adversarial_string(rng);
      if (coin(rng)) p.chosen_score = score(rng);
      if (coin(rng)) p.rejected_score = score(rng) * 1e-300;
      ASSERT_TRUE(validate_pair(p).ok());
      pairs.push_back(std::move(p));
    }
    TempDir dir;
    ASSERT_EQ(write_pairs(pairs, dir / "rt.jsonl"), pairs.size());
    const std::string text = testing::read_file(dir / "rt.jsonl");
    EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), pairs.size());
    const auto back = read_pairs(dir / "rt.jsonl");
    EXPECT_TRUE(back.skips.empty());
    EXPECT_EQ(back.records, pairs);
  }
}

TEST(ReadHelpfulness, ParsesRatings) {
  TempDir dir;
  write_file(dir / "h.jsonl",
             R"({"prompt":"q","chosen":"a","rejected":"b","source":"helpsteer2","chosen_helpfulness":4,"rejected_helpfulness":3})" "\n"
             R"({"prompt":"q","chosen":"a","rejected":"b","source":"helpsteer2","chosen_helpfulness":4})" "\n"
             R"({"prompt":"q","chosen":"c","rejected":"d","source":"helpsteer2","chosen_helpfulness":1,"rejected_helpfulness":2})" "\n");
  const auto r = read_helpfulness_records(dir / "h.jsonl");
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].chosen_helpfulness, 4.0);
  EXPECT_EQ(r.skips[0].reason, "missing field: rejected_helpfulness");
}

TEST(ReadPrompts, AcceptsStringsAndTurns) {
  TempDir dir;
  write_file(dir / "e.jsonl", R"({"prompt":"one two"})" "\n" R"({"prompt":[{"role":"user","content":"a"},{"role":"assistant","content":"b"}]})" "\n");
  const auto prompts = read_prompts(dir / "e.jsonl");
  ASSERT_EQ(prompts.size(), 2u);
  EXPECT_EQ(prompts[0], "one two");
  EXPECT_EQ(prompts[1], "a\nb");
}

}  // namespace
}  // namespace prefkit

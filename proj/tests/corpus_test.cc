#include "privdet/corpus.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "privdet/errors.h"
#include "test_util.h"

namespace privdet {
namespace {

using testing::ReadFile;
using testing::TestDir;

std::string TwoTurnFixture() { return ReadFile(TestDir() + "/fixtures/two_turn_dialogue.jsonl"); }

DialogueRecord MakeRecord(const std::string& id, int n_turns, int leak_every) {
  DialogueRecord r;
  r.id = id;
  for (int t = 0; t < n_turns; ++t) {
    Turn turn;
    turn.user = "user text " + std::to_string(t) + " of " + id;
    turn.assistant = "reply " + std::to_string(t);
    if (leak_every > 0 && t % leak_every == 0) {
      turn.privacy.push_back({"user text", "info " + std::to_string(t), Json::object()});
    }
    r.turns.push_back(turn);
  }
  return r;
}

TEST(ParseDataset, TwoTurnFixture) {
  const auto parsed = ParseDataset(TwoTurnFixture());
  ASSERT_EQ(parsed.records.size(), 1u);
  const auto& r = parsed.records[0];
  EXPECT_EQ(r.id, "ShareGPT-pKNQqpRRE1");
  ASSERT_EQ(r.turns.size(), 2u);
  EXPECT_TRUE(r.turns[0].privacy.empty());
  ASSERT_EQ(r.turns[1].privacy.size(), 3u);
  EXPECT_EQ(r.turns[1].privacy[0].phrase, "David Glijer");
  EXPECT_EQ(r.turns[1].privacy[2].information,
            "The user has plans to strategically engage or interact with David "
            "Glijer, indicating he is a subject of interest.");
  EXPECT_TRUE(parsed.warnings.empty());
}

TEST(ParseDataset, EmptyArrayIsEmptyDataset) {
  EXPECT_TRUE(ParseDataset("[]").records.empty());
  EXPECT_TRUE(ParseDataset("  [ ]\n").records.empty());
  EXPECT_TRUE(ParseDataset("").records.empty());
}

TEST(ParseDataset, ArrayAndLinesAgree) {
  const auto lines = ParseDataset(TwoTurnFixture());
  const auto array = ParseDataset(WriteDatasetArray(lines.records));
  EXPECT_EQ(lines.records, array.records);
}

TEST(ParseDataset, PhraseNotInQueryWarnsOnce) {
  std::string text = TwoTurnFixture();
  const std::string from = "\"phrase\":\"engage him\"";
  text.replace(text.find(from), from.size(), "\"phrase\":\"meet him\"");
  const auto parsed = ParseDataset(text);
  EXPECT_EQ(parsed.records.size(), 1u);
  EXPECT_EQ(parsed.warnings.size(), 1u);
}

TEST(ParseDataset, ErrorsNameRecordOrdinal) {
  const std::string good = TwoTurnFixture();
  const std::string bad = R"({"id":"x","conversation":[]})" "\n";
  try {
    ParseDataset(good + bad);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos)
        << e.what();
  }
}

TEST(ParseDataset, Rejections) {
  EXPECT_THROW(ParseDataset(R"({"conversation":[{"user":"a","assistant":"b","privacy":[]}]})"),
               DataError);
  EXPECT_THROW(ParseDataset(R"({"id":"a","conversation":[{"user":"","assistant":"b"}]})"),
               DataError);
  EXPECT_THROW(
      ParseDataset(R"({"id":"a","conversation":[{"user":"x","assistant":"b","privacy":[{"phrase":"x"}]}]})"),
      DataError);
  EXPECT_THROW(ParseDataset(R"({"id":"a","conversation":[{"user":"x","assistant":"b"}]})"
                            "\n"
                            R"({"id":"a","conversation":[{"user":"y","assistant":"b"}]})"),
               DataError);
  EXPECT_THROW(ParseDataset("{not json"), DataError);
}

TEST(ParseDataset, UnknownFieldsSurviveRoundTrip) {
  const std::string text =
      R"({"id":"a","conversation":[{"user":"I live in Paris","assistant":"ok","privacy":[{"phrase":"Paris","privacy information":"Lives in Paris.","score":0.9}],"lang":"en"}],"source":"test"})"
      "\n";
  const auto parsed = ParseDataset(text);
  EXPECT_EQ(WriteDataset(parsed.records), text);
}

TEST(WriteDataset, FixtureRoundTripIsByteIdentical) {
  const std::string text = TwoTurnFixture();
  const auto parsed = ParseDataset(text);
  EXPECT_EQ(WriteDataset(parsed.records), text);
  EXPECT_EQ(ParseDataset(WriteDataset(parsed.records)).records, parsed.records);
}

TEST(WriteDataset, EmptyDataset) {
  EXPECT_EQ(WriteDatasetArray({}), "[]\n");
  EXPECT_EQ(WriteDataset({}), "");
}

TEST(WriteDataset, RandomRoundTrip) {
  std::mt19937_64 gen(11);
  const std::vector<std::string> words = {"I",  "live", "in",   "Paris", "my",
                                          "\"", "\\",   "é",    "北京",  "\t",
                                          "son", "work", "nurse", "{", "}"};
  auto text = [&](int n) {
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += words[gen() % words.size()];
    }
    return s;
  };
  std::vector<DialogueRecord> records;
  for (int r = 0; r < 100; ++r) {
    DialogueRecord rec;
    rec.id = "rec-" + std::to_string(r);
    const int turns = 1 + static_cast<int>(gen() % 4);
    for (int t = 0; t < turns; ++t) {
      Turn turn;
      turn.user = text(1 + static_cast<int>(gen() % 8));
      turn.assistant = text(static_cast<int>(gen() % 5));
      const int items = static_cast<int>(gen() % 3);
      for (int k = 0; k < items; ++k) {
        // Whole words keep multi-byte characters intact.
        const auto& u = turn.user;
        const std::size_t a = u.find(' ') == std::string::npos ? 0 : u.find(' ') + 1;
        turn.privacy.push_back({u.substr(a), "info " + text(3), Json::object()});
      }
      rec.turns.push_back(turn);
    }
    records.push_back(rec);
  }
  const auto back = ParseDataset(WriteDataset(records));
  EXPECT_EQ(back.records, records);
  EXPECT_EQ(ParseDataset(WriteDatasetArray(records)).records, records);
}

TEST(Flatten, TwoTurnFixture) {
  const auto samples = Flatten(ParseDataset(TwoTurnFixture()).records);
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_TRUE(samples[0].context.empty());
  EXPECT_FALSE(samples[0].gold_leak);
  EXPECT_EQ(samples[1].context.size(), 2u);
  EXPECT_TRUE(samples[1].gold_leak);
  EXPECT_EQ(samples[1].turn_index, 1);
  EXPECT_EQ(samples[1].gold_phrases.size(), samples[1].gold_infos.size());
}

TEST(Flatten, ContextLengthsGrowByTwo) {
  const auto samples = Flatten({MakeRecord("d", 3, 0)});
  ASSERT_EQ(samples.size(), 3u);
  EXPECT_EQ(samples[0].context.size(), 0u);
  EXPECT_EQ(samples[1].context.size(), 2u);
  EXPECT_EQ(samples[2].context.size(), 4u);
  EXPECT_EQ(samples[2].context[0], samples[0].query);
}

TEST(Flatten, PreservesTurnCount) {
  std::vector<DialogueRecord> recs;
  std::size_t turns = 0;
  for (int i = 0; i < 20; ++i) {
    recs.push_back(MakeRecord("d" + std::to_string(i), 1 + i % 4, 2));
    turns += recs.back().turns.size();
  }
  EXPECT_EQ(Flatten(recs).size(), turns);
}

std::vector<DialogueRecord> TenDialogues() {
  std::vector<DialogueRecord> recs;
  for (int i = 0; i < 10; ++i) {
    recs.push_back(MakeRecord("d" + std::to_string(i), 1 + i % 3, 2));
  }
  return recs;
}

TEST(Split, EightTwo) {
  const auto s = SplitRecords(TenDialogues(), 0.8, 42);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, DeterministicAndPartition) {
  const auto recs = TenDialogues();
  const auto a = SplitRecords(recs, 0.8, 42);
  const auto b = SplitRecords(recs, 0.8, 42);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::set<std::string> ids;
  for (const auto& r : a.train) ids.insert(r.id);
  for (const auto& r : a.test) EXPECT_TRUE(ids.insert(r.id).second);
  EXPECT_EQ(ids.size(), recs.size());
}

TEST(Split, SeedsDiffer) {
  const auto recs = TenDialogues();
  bool differs = false;
  const auto base = SplitRecords(recs, 0.5, 1);
  for (std::uint64_t s = 2; s < 10 && !differs; ++s) {
    differs = SplitRecords(recs, 0.5, s).test != base.test;
  }
  EXPECT_TRUE(differs);
}

TEST(Split, WithinOneDialogueOfRatio) {
  for (int n = 1; n <= 40; ++n) {
    std::vector<DialogueRecord> recs;
    for (int i = 0; i < n; ++i) recs.push_back(MakeRecord("r" + std::to_string(i), 1, 0));
    for (double ratio : {0.1, 0.5, 0.8, 0.95}) {
      const auto s = SplitRecords(recs, ratio, 3);
      EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - ratio * n), 1.0);
      EXPECT_EQ(s.train.size() + s.test.size(), static_cast<std::size_t>(n));
    }
  }
}

TEST(Split, SamplesOfADialogueStayTogether) {
  std::vector<DialogueRecord> recs;
  for (int i = 0; i < 30; ++i) recs.push_back(MakeRecord("m" + std::to_string(i), 3, 1));
  const auto s = SplitSamples(Flatten(recs), 0.8, 5);
  std::set<std::string> train_ids;
  for (const auto& q : s.train) train_ids.insert(q.dialogue_id);
  for (const auto& q : s.test) EXPECT_FALSE(train_ids.count(q.dialogue_id));
}

TEST(Split, Errors) {
  EXPECT_THROW(SplitRecords({}, 0.8, 1), DataError);
  EXPECT_THROW(SplitRecords(TenDialogues(), 0.0, 1), DataError);
  EXPECT_THROW(SplitRecords(TenDialogues(), 1.0, 1), DataError);
}

TEST(Split, ByTestIds) {
  const auto s = SplitByTestIds(TenDialogues(), {"d3", "d7"});
  ASSERT_EQ(s.test.size(), 2u);
  EXPECT_EQ(s.test[0].id, "d3");
  EXPECT_EQ(s.train.size(), 8u);
}

std::vector<QuerySample> ClassCounts(int leak, int nonleak) {
  std::vector<QuerySample> out;
  for (int i = 0; i < leak + nonleak; ++i) {
    QuerySample s;
    s.dialogue_id = "s" + std::to_string(i);
    s.query = "q";
    // Interleave so ordering checks are meaningful.
    s.gold_leak = (i % 4 == 0 && leak > 0) ? true : false;
    out.push_back(s);
  }
  int have = 0;
  for (auto& s : out) have += s.gold_leak;
  for (auto& s : out) {
    if (have >= leak) break;
    if (!s.gold_leak) {
      s.gold_leak = true;
      ++have;
    }
  }
  for (auto& s : out) {
    if (have <= leak) break;
    if (s.gold_leak) {
      s.gold_leak = false;
      --have;
    }
  }
  for (auto& s : out) {
    if (s.gold_leak) {
      s.gold_phrases = {"q"};
      s.gold_infos = {"i"};
    }
  }
  return out;
}

TEST(Balance, DownSamplesMajority) {
  const auto out = Balance(ClassCounts(100, 300), 0.5, 9);
  const auto st = ComputeStats(out);
  EXPECT_EQ(st.n_leak, 100u);
  EXPECT_EQ(st.n_nonleak, 100u);
}

TEST(Balance, AlreadyBalancedUnchanged) {
  const auto in = ClassCounts(100, 101);
  EXPECT_EQ(Balance(in, 0.5, 9), in);
}

TEST(Balance, FullScaleArithmetic) {
  const auto out = Balance(ClassCounts(26156, 52053), 0.5, 1);
  const auto st = ComputeStats(out);
  EXPECT_EQ(st.n_leak, 26156u);
  EXPECT_EQ(st.n_nonleak, 26156u);
}

TEST(Balance, PropertyWithinTolerance) {
  std::mt19937 gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int leak = 1 + static_cast<int>(gen() % 200);
    const int non = 1 + static_cast<int>(gen() % 200);
    const double target = 0.2 + 0.6 * (gen() % 100) / 100.0;
    const auto in = ClassCounts(leak, non);
    const auto out = Balance(in, target, trial);
    const auto st = ComputeStats(out);
    const double frac =
        static_cast<double>(st.n_leak) / static_cast<double>(out.size());
    // Rounding of small classes can miss the band by less than one sample.
    const double slack = 0.02 + 1.0 / static_cast<double>(out.size());
    EXPECT_LE(std::abs(frac - target), slack)
        << leak << "/" << non << " target " << target;
    EXPECT_LE(out.size(), in.size());
    // Output is a subsequence of input.
    std::size_t j = 0;
    for (const auto& s : in) {
      if (j < out.size() && s == out[j]) ++j;
    }
    EXPECT_EQ(j, out.size());
    EXPECT_EQ(out, Balance(in, target, trial));
  }
}

TEST(Balance, Errors) {
  EXPECT_THROW(Balance(ClassCounts(0, 10), 0.5, 1), DataError);
  EXPECT_THROW(Balance(ClassCounts(5, 10), 1.0, 1), DataError);
}

TEST(Stats, TwoTurnFixture) {
  const auto st = ComputeStats(Flatten(ParseDataset(TwoTurnFixture()).records));
  EXPECT_EQ(st.n_leak, 1u);
  EXPECT_EQ(st.n_nonleak, 1u);
  EXPECT_EQ(st.n_phrases, 3u);
  ASSERT_TRUE(st.mean_phrases_per_leak.has_value());
  EXPECT_DOUBLE_EQ(*st.mean_phrases_per_leak, 3.0);
}

TEST(Stats, AllNonLeak) {
  const auto st = ComputeStats(Flatten({MakeRecord("n", 4, 0)}));
  EXPECT_EQ(st.n_phrases, 0u);
  EXPECT_EQ(st.n_nonleak, 4u);
  EXPECT_FALSE(st.mean_phrases_per_leak.has_value());
}

TEST(Stats, Invariants) {
  std::vector<DialogueRecord> recs;
  for (int i = 0; i < 25; ++i) recs.push_back(MakeRecord("x" + std::to_string(i), 1 + i % 5, 1 + i % 3));
  const auto samples = Flatten(recs);
  const auto st = ComputeStats(samples);
  EXPECT_GE(st.n_phrases, st.n_leak);
  EXPECT_EQ(st.n_leak + st.n_nonleak, samples.size());
}

}  // namespace
}  // namespace privdet

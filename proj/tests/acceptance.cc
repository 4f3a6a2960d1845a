// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero when any criterion fails. Skipped criteria need external data:
//   PRIVDET_DATASET_EN_TEST, PRIVDET_DATASET_ZH_TEST  annotated test splits
//   PRIVDET_GOLD_STUDY_DIR  gold.jsonl, pred_direct.jsonl,
//                           pred_pipeline_filtered.jsonl
//                           [, pred_pipeline.jsonl]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "oracle.h"
#include "privdet/cli.h"
#include "privdet/corpus.h"
#include "privdet/evaluation.h"
#include "privdet/pipeline.h"
#include "privdet/textmetrics.h"
#include "test_util.h"

namespace privdet {
namespace {

namespace fs = std::filesystem;
namespace t = privdet::testing;

enum class Outcome { kPass, kFail, kSkip };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

Verdict Pass(std::string d) { return {Outcome::kPass, std::move(d)}; }
Verdict Fail(std::string d) { return {Outcome::kFail, std::move(d)}; }
Verdict Skip(std::string d) { return {Outcome::kSkip, std::move(d)}; }

bool Near(std::optional<double> got, double want, double tol) {
  return got && std::fabs(*got - want) <= tol;
}

std::string Fmt(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

Prediction PredOf(const std::string& id, int turn,
                  const std::vector<std::string>& phrases,
                  const std::vector<std::string>& infos) {
  Prediction p;
  p.dialogue_id = id;
  p.turn_index = turn;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    p.items.push_back({phrases[i], i < infos.size() ? infos[i] : "", {}});
  }
  return p;
}

Verdict MetricOracle() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 gen(20240601);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<oracle::Case> cases(1 + gen() % 8);
    std::vector<QuerySample> gold;
    std::vector<Prediction> pred;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      cases[i] = oracle::RandomCase(gen);
      const int turn = static_cast<int>(i);
      gold.push_back(t::MakeSample("a", turn, "q", cases[i].gold_phrases,
                                   cases[i].gold_infos));
      pred.push_back(PredOf("a", turn, cases[i].pred_phrases, cases[i].pred_infos));
    }
    const auto ph = EvalPhrases(pred, gold, {});
    const auto in = EvalInformation(pred, gold, {});
    const auto wp = oracle::Phrases(cases);
    const auto wi = oracle::Infos(cases);
    auto same = [](std::optional<double> a, std::optional<double> b) {
      return a.has_value() == b.has_value() && (!a || std::fabs(*a - *b) <= 1e-9);
    };
    if (!same(ph.recall, wp.r) || !same(ph.precision, wp.p) ||
        !same(ph.f1, wp.f1) || !same(in.recall, wi.r) ||
        !same(in.precision, wi.p) || !same(in.f1, wi.f1)) {
      ++mismatches;
    }
  }
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  std::ostringstream d;
  d << "1000 random sets, " << mismatches << " mismatches, " << secs << " s";
  return mismatches == 0 && secs < 30 ? Pass(d.str()) : Fail(d.str());
}

Verdict RougeOracle() {
  std::mt19937_64 gen(7);
  int lcs_bad = 0, sym_bad = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::string> a(gen() % 13), b(gen() % 13);
    for (auto& s : a) s = std::string(1, static_cast<char>('a' + gen() % 5));
    for (auto& s : b) s = std::string(1, static_cast<char>('a' + gen() % 5));
    if (LcsLength(a, b) != oracle::LcsBySubsets(a, b)) ++lcs_bad;
    std::string x, y;
    for (const auto& s : a) x += s + " ";
    for (const auto& s : b) y += s + " ";
    if (RougeL(x, y, Lang::kEnglish).f1 != RougeL(y, x, Lang::kEnglish).f1) {
      ++sym_bad;
    }
  }
  const double f1 =
      RougeL("play football", "plan to play football", Lang::kEnglish).f1;
  std::ostringstream d;
  d << "10000 sequences, LCS mismatches " << lcs_bad << ", asymmetric F1 "
    << sym_bad << ", example F1 " << Fmt(f1);
  return lcs_bad == 0 && sym_bad == 0 && std::fabs(f1 - 2.0 / 3) <= 1e-12
             ? Pass(d.str())
             : Fail(d.str());
}

Verdict PhraseFixture() {
  const std::vector<QuerySample> gold = {t::MakeSample(
      "f", 0, "q", {"teacher", "computer science", "London"})};
  const std::vector<Prediction> pred = {PredOf("f", 0, {"teacher", "Paris"}, {})};
  const auto s = EvalPhrases(pred, gold, {});
  const std::string d =
      "R " + Fmt(s.recall) + " P " + Fmt(s.precision) + " F1 " + Fmt(s.f1);
  return Near(s.recall, 1.0 / 3, 1e-12) && Near(s.precision, 0.5, 1e-12) &&
                 Near(s.f1, 0.4, 1e-12)
             ? Pass(d)
             : Fail(d);
}

Verdict ToyDeterminism() {
  const char* files[] = {"annotated.jsonl", "categories.json", "run_report.json"};
  std::vector<std::string> dirs;
  for (int p : {1, 1, 8, 8}) {
    const auto dir = t::MakeTempDir("acc_toy");
    std::string err;
    const int code = t::RunTool(
        {"annotate", "--config", t::DataDir() + "/toy/config.json", "--input",
         t::DataDir() + "/toy/corpus.jsonl", "--out", dir, "--parallelism",
         std::to_string(p)},
        nullptr, &err);
    if (code != kExitOk) return Fail("annotate exit " + std::to_string(code) + ": " + err);
    dirs.push_back(dir);
  }
  for (const char* f : files) {
    const auto ref = t::ReadFile(dirs[0] + "/" + f);
    for (std::size_t i = 1; i < dirs.size(); ++i) {
      if (t::ReadFile(dirs[i] + "/" + f) != ref) {
        return Fail(std::string(f) + " differs between runs");
      }
    }
  }
  return Pass("3 artifacts byte-identical over 2 runs x parallelism {1, 8}");
}

std::string Fenced(const Json& j) { return "```json\n" + j.dump(4) + "\n```"; }

Verdict DedupFixedPoint() {
  std::vector<std::string> canonical, all;
  for (int i = 0; i < 15; ++i) {
    canonical.push_back("topic" + std::to_string(i));
    all.push_back(canonical.back());
    all.push_back("another name for topic" + std::to_string(i));
  }
  auto run = [](const std::vector<std::string>& names,
                const std::vector<std::string>& keep) {
    PipelineConfig cfg;
    cfg.dedup_block_size = 4;
    cfg.seed = 5;
    auto client = t::MakeMockClient(t::MockFromJson(
        {{"rules", Json::array({{{"contains", "just keep category A"},
                                 {"response", Fenced(keep)}}})}}));
    Annotator ann(t::ShippedTemplates(), client, cfg);
    std::vector<CategoryEntry> entries;
    for (const auto& n : names) entries.push_back({n, {"x"}});
    Warnings w;
    return ann.DedupCategories(entries, &w);
  };
  auto monotone = [](const CategorySet& s) {
    for (std::size_t i = 0; i < s.provenance.size(); ++i) {
      const auto& r = s.provenance[i];
      if (r.after > r.before) return false;
      if (i && r.run != 0 && s.provenance[i - 1].run == r.run &&
          r.before != s.provenance[i - 1].after) {
        return false;
      }
    }
    return true;
  };

  const auto syn = run(all, canonical);
  const auto names = syn.Names();
  const bool syn_ok = monotone(syn) && !syn.hit_iteration_cap &&
                      std::set<std::string>(names.begin(), names.end()) ==
                          std::set<std::string>(canonical.begin(), canonical.end());

  const auto idem = run(canonical, canonical);
  bool idem_ok = !idem.hit_iteration_cap && idem.Names().size() == canonical.size();
  for (const auto& r : idem.provenance) {
    idem_ok = idem_ok && r.round == 1 && r.before == r.after;
  }
  std::ostringstream d;
  d << "synonym mock " << all.size() << " -> " << names.size() << " in "
    << syn.provenance.size() << " logged rounds; idempotent mock "
    << idem.provenance.size() << " single-round passes";
  return syn_ok && idem_ok ? Pass(d.str()) : Fail(d.str());
}

Verdict CorrectionRule() {
  auto judge = [](bool v) {
    return Fenced({{"reason", v ? "Reveals a plan." : "No."}, {"judgment", v}});
  };
  const Json rules = Json::array(
      {{{"contains", "judge whether the query reveals"}, {"response", judge(true)}},
       {{"contains", "Identify which phrases in the query leak"},
        {"response", Fenced({{"Location", {"place"}}})}},
       {{"contains", "match each extracted phase"},
        {"response", Fenced({{"place", "Location"}})}},
       {{"contains", "directly links to the user"}, {"response", judge(true)}},
       {{"contains", "should not be a general phrase"}, {"response", judge(false)}}});
  auto client = t::MakeMockClient(t::MockFromJson({{"rules", rules}}));
  DialogueRecord rec;
  rec.id = "fixture";
  rec.turns.push_back({"I want to go a place.", "Where?", {}, Json::object()});
  const auto res = RunPipeline({rec}, t::ShippedTemplates(), client, {});
  const auto& counts = res.report["counts"];
  const bool ok = res.records[0].turns[0].privacy.empty() &&
                  counts["judged_leak"] == 1 &&
                  counts["corrected_to_nonleak"] == 1 &&
                  counts["final_nonleak"] == 1 && res.failures.empty();
  return ok ? Pass("leak-judged sample with all phrases filtered emitted as non-leak")
            : Fail("counts " + counts.dump());
}

Verdict FormatAndStats() {
  const std::string path = t::TestDir() + "/fixtures/two_turn_dialogue.jsonl";
  const std::string text = t::ReadFile(path);
  const auto first = ParseDataset(text);
  const auto written = WriteDataset(first.records);
  const auto second = ParseDataset(written);
  if (first.records != second.records) return Fail("parse-write-parse changed records");
  if (written != text) return Fail("written text differs from the fixture");
  std::string out;
  if (t::RunTool({"stats", "--input", path}, &out) != kExitOk) {
    return Fail("stats failed");
  }
  if (out.find("leak 1 / non-leak 1 / phrases 3") == std::string::npos) {
    return Fail("stats printed: " + out);
  }
  return Pass("round-trip identical; stats leak 1 / non-leak 1 / phrases 3");
}

Verdict TemplateFidelity() {
  const auto& reg = t::ShippedTemplates();
  int checked = 0;
  for (const auto& id : RequiredTemplateIds()) {
    for (Lang lang : {Lang::kEnglish, Lang::kChinese}) {
      const std::string dir = lang == Lang::kEnglish ? "english" : "chinese";
      std::string golden =
          t::ReadFile(t::TestDir() + "/golden/templates/" + dir + "/" + id + ".txt");
      if (!golden.empty() && golden.back() == '\n') golden.pop_back();
      if (reg.Get(id, lang).body != golden) return Fail(dir + "/" + id + " differs");
      TemplateRegistry::Bindings b;
      for (const auto& p : reg.Get(id, lang).placeholders) b[p] = "value";
      if (reg.Render(id, lang, b).find("<|") != std::string::npos) {
        return Fail(dir + "/" + id + " leaves a marker after rendering");
      }
      ++checked;
    }
  }
  return Pass(std::to_string(checked) + " templates match golden files, no residue");
}

Verdict DatasetReplay() {
  struct Expect {
    const char* env;
    const char* name;
    std::size_t nonleak, leak, phrases;
    double mean;
  };
  const Expect expects[] = {{"PRIVDET_DATASET_EN_TEST", "english", 12792, 6658, 17540, 2.6},
                            {"PRIVDET_DATASET_ZH_TEST", "chinese", 10633, 5230, 8299, 1.6}};
  std::ostringstream d;
  int present = 0;
  bool ok = true;
  for (const auto& e : expects) {
    const char* path = std::getenv(e.env);
    if (!path || !*path) continue;
    ++present;
    const auto st = ComputeStats(Flatten(ReadDatasetFile(path).records));
    const bool good = st.n_nonleak == e.nonleak && st.n_leak == e.leak &&
                      st.n_phrases == e.phrases &&
                      Near(st.mean_phrases_per_leak, e.mean, 0.05);
    ok = ok && good;
    d << e.name << " non-leak " << st.n_nonleak << " leak " << st.n_leak
      << " phrases " << st.n_phrases << " mean "
      << Fmt(st.mean_phrases_per_leak) << "; ";
  }
  if (present == 0) {
    return Skip("set PRIVDET_DATASET_EN_TEST / PRIVDET_DATASET_ZH_TEST");
  }
  return ok ? Pass(d.str()) : Fail(d.str());
}

Verdict GoldStudyReplay() {
  const char* dir = std::getenv("PRIVDET_GOLD_STUDY_DIR");
  if (!dir || !*dir) return Skip("set PRIVDET_GOLD_STUDY_DIR");
  struct Row {
    const char* file;
    double r, p, f1;
    bool required;
  };
  const Row rows[] = {{"pred_direct.jsonl", 68.08, 90.99, 77.89, true},
                      {"pred_pipeline.jsonl", 98.67, 82.90, 90.10, false},
                      {"pred_pipeline_filtered.jsonl", 96.30, 90.17, 93.13, true}};
  const std::string base = dir;
  if (!fs::exists(base + "/gold.jsonl")) return Skip("no gold.jsonl in " + base);
  const auto gold = Flatten(ReadDatasetFile(base + "/gold.jsonl").records);
  std::ostringstream d;
  bool ok = true;
  for (const auto& row : rows) {
    const std::string path = base + "/" + row.file;
    if (!fs::exists(path)) {
      if (row.required) return Skip("missing " + path);
      continue;
    }
    const auto s = EvalPhrases(ReadPredictionsFile(path), gold, {});
    auto pct = [](std::optional<double> v) {
      return v ? std::optional<double>(*v * 100) : std::nullopt;
    };
    const bool good = Near(pct(s.recall), row.r, 0.05) &&
                      Near(pct(s.precision), row.p, 0.05) &&
                      Near(pct(s.f1), row.f1, 0.05);
    ok = ok && good;
    d << row.file << " " << Fmt(pct(s.recall)) << "/" << Fmt(pct(s.precision))
      << "/" << Fmt(pct(s.f1)) << "; ";
  }
  return ok ? Pass(d.str()) : Fail(d.str());
}

}  // namespace
}  // namespace privdet

int main() {
  using namespace privdet;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"metric oracle equivalence", MetricOracle},
      {"rouge-l correctness", RougeOracle},
      {"hand-derived phrase fixture", PhraseFixture},
      {"mock end-to-end determinism", ToyDeterminism},
      {"dedup fixed point", DedupFixedPoint},
      {"pipeline correction rule", CorrectionRule},
      {"format round-trip and stats", FormatAndStats},
      {"template fidelity", TemplateFidelity},
      {"dataset replay", DatasetReplay},
      {"gold-study replay", GoldStudyReplay},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = Fail(std::string("exception: ") + e.what());
    }
    const char* tag = v.outcome == Outcome::kPass   ? "PASS"
                      : v.outcome == Outcome::kFail ? "FAIL"
                                                    : "SKIP";
    failed += v.outcome == Outcome::kFail;
    std::cout << "criterion " << i + 1 << " [" << tag << "] " << criteria[i].first
              << ": " << v.detail << "\n";
  }
  return failed == 0 ? 0 : 1;
}

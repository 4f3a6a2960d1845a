#include "privdet/prompts.h"

#include <gtest/gtest.h>

#include <filesystem>

#include "privdet/errors.h"
#include "test_util.h"

namespace privdet {
namespace {

namespace fs = std::filesystem;
using testing::DataDir;
using testing::ReadFile;
using testing::ShippedTemplates;
using testing::TestDir;
using testing::WriteFile;

const Lang kLangs[] = {Lang::kEnglish, Lang::kChinese};

std::string LangDir(Lang lang) {
  return lang == Lang::kEnglish ? "english" : "chinese";
}

TEST(Registry, LoadsAllIds) {
  const auto& reg = ShippedTemplates();
  EXPECT_EQ(RequiredTemplateIds().size(), 17u);
  EXPECT_EQ(reg.size(), 34u);
  for (const auto& id : RequiredTemplateIds()) {
    for (Lang lang : kLangs) EXPECT_TRUE(reg.Has(id, lang)) << id;
  }
}

TEST(Registry, MatchesGoldenFiles) {
  const auto& reg = ShippedTemplates();
  for (const auto& id : RequiredTemplateIds()) {
    for (Lang lang : kLangs) {
      std::string golden = ReadFile(TestDir() + "/golden/templates/" +
                                    LangDir(lang) + "/" + id + ".txt");
      if (!golden.empty() && golden.back() == '\n') golden.pop_back();
      EXPECT_EQ(reg.Get(id, lang).body, golden) << LangDir(lang) << "/" << id;
    }
  }
}

TEST(Registry, RenderLeavesNoMarkers) {
  const auto& reg = ShippedTemplates();
  for (const auto& id : RequiredTemplateIds()) {
    for (Lang lang : kLangs) {
      TemplateRegistry::Bindings b;
      for (const auto& name : reg.Get(id, lang).placeholders) {
        b[name] = "value of " + name;
      }
      const auto text = reg.Render(id, lang, b);
      EXPECT_EQ(text.find("<|"), std::string::npos) << id;
      EXPECT_EQ(text.find("|>"), std::string::npos) << id;
      for (const auto& [name, value] : b) {
        EXPECT_NE(text.find(value), std::string::npos) << id << " " << name;
      }
    }
  }
}

TEST(Registry, PlaceholdersPerId) {
  const auto& reg = ShippedTemplates();
  using S = std::set<std::string>;
  for (Lang lang : kLangs) {
    EXPECT_EQ(reg.Get("step1.classify", lang).placeholders, S{"INPUT"});
    EXPECT_EQ(reg.Get("step2.dedup", lang).placeholders,
              (S{"BLOCK-SIZE", "INPUT"}));
    EXPECT_EQ(reg.Get("step3.extract", lang).placeholders,
              (S{"CATEGORIES", "INPUT"}));
    EXPECT_EQ(reg.Get("baseline.icl.phrase", lang).placeholders,
              (S{"CASE", "QUERY"}));
    EXPECT_EQ(reg.Get("baseline.zg.phrase", lang).placeholders, S{"QUERY"});
  }
}

TEST(Render, BindingErrors) {
  const auto& reg = ShippedTemplates();
  EXPECT_THROW(reg.Render("step1.classify", Lang::kEnglish, {}), ConfigError);
  EXPECT_THROW(reg.Render("step1.classify", Lang::kEnglish,
                          {{"INPUT", "q"}, {"EXTRA", "x"}}),
               ConfigError);
  EXPECT_THROW(reg.Render("no.such.id", Lang::kEnglish, {}), ConfigError);
}

TEST(Render, SinglePassSubstitution) {
  // A value that itself looks like a marker is inserted literally.
  const auto text = ShippedTemplates().Render(
      "step3.filter1", Lang::kEnglish,
      {{"INPUT", "<|PHRASE|>"}, {"PHRASE", "home"}});
  EXPECT_NE(text.find("<|PHRASE|>"), std::string::npos);
}

TEST(Render, ZeroShotVersusIcl) {
  const auto& reg = ShippedTemplates();
  for (Lang lang : kLangs) {
    for (const char* task : {"query", "phrase", "info"}) {
      const auto zg = reg.Render(std::string("baseline.zg.") + task, lang,
                                 {{"QUERY", "Q"}});
      const auto icl = reg.Render(std::string("baseline.icl.") + task, lang,
                                  {{"QUERY", "Q"}, {"CASE", "CASES"}});
      EXPECT_NE(zg, icl);
      EXPECT_EQ(zg.find("CASES"), std::string::npos);
      EXPECT_NE(icl.find("CASES"), std::string::npos);
    }
  }
}

TEST(Scan, Markers) {
  EXPECT_EQ(ScanPlaceholders("a <|X|> b <|BLOCK-SIZE|> <|X|> <|bad|> <|"),
            (std::set<std::string>{"BLOCK-SIZE", "X"}));
}

TEST(Load, Errors) {
  EXPECT_THROW(TemplateRegistry::Load("/nonexistent/templates"), ConfigError);

  // Copy the shipped set, then break one file.
  const auto dir = testing::MakeTempDir("tmpl");
  fs::copy(DataDir() + "/templates", dir, fs::copy_options::recursive);
  EXPECT_NO_THROW(TemplateRegistry::Load(dir));

  const auto file = dir + "/english/step1.classify.txt";
  const auto original = ReadFile(file);
  WriteFile(file, original + "extra <|NEW|>\n");
  try {
    TemplateRegistry::Load(dir);
    FAIL() << "placeholder mismatch accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("step1.classify"), std::string::npos);
  }
  WriteFile(file, original);

  fs::remove(dir + "/chinese/sft.info.txt");
  try {
    TemplateRegistry::Load(dir);
    FAIL() << "missing file accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("sft.info"), std::string::npos);
  }
}

TEST(IclCase, Formats) {
  const auto s = testing::MakeSample("d", 0, "I live in Paris.", {"Paris"},
                                     {"The user lives in Paris."});
  EXPECT_EQ(FormatIclCase(s, BaselineTask::kLeakage, Lang::kEnglish),
            "User's query: \"I live in Paris.\"\nJSON Output:\n```json\n"
            "{\n    \"judgment\": true\n}\n```\n");
  EXPECT_EQ(FormatIclCase(s, BaselineTask::kPhrase, Lang::kEnglish),
            "User's query: \"I live in Paris.\"\nJSON Output:\n```json\n"
            "[\n    \"Paris\"\n]\n```\n");
  const auto info = FormatIclCase(s, BaselineTask::kInformation, Lang::kChinese);
  EXPECT_EQ(info.rfind("用户的请求：\"I live in Paris.\"\nJSON输出：\n", 0), 0u);
  EXPECT_NE(info.find("\"privacy information\": \"The user lives in Paris.\""),
            std::string::npos);

  const auto none = testing::MakeSample("d", 1, "Hi");
  const auto two = FormatIclCases({s, none}, BaselineTask::kLeakage,
                                  Lang::kEnglish);
  EXPECT_NE(two.find("\"judgment\": false"), std::string::npos);
  EXPECT_EQ(two.substr(two.size() - 2), "\n\n");
}

TEST(Task, Parse) {
  EXPECT_EQ(ParseBaselineTask("leakage"), BaselineTask::kLeakage);
  EXPECT_EQ(ParseBaselineTask("phrase"), BaselineTask::kPhrase);
  EXPECT_EQ(ParseBaselineTask("info"), BaselineTask::kInformation);
  EXPECT_THROW(ParseBaselineTask("other"), ConfigError);
}

}  // namespace
}  // namespace privdet

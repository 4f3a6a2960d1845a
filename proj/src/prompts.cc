#include "privdet/prompts.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "privdet/errors.h"

namespace privdet {
namespace {

namespace fs = std::filesystem;

constexpr std::string_view kOpen = "<|";
constexpr std::string_view kClose = "|>";

bool IsMarkerChar(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c == '-';
}

// Calls on_text / on_marker for consecutive pieces of `body`.
template <typename OnText, typename OnMarker>
void WalkMarkers(const std::string& body, OnText on_text, OnMarker on_marker) {
  std::size_t pos = 0;
  while (pos < body.size()) {
    const std::size_t open = body.find(kOpen, pos);
    if (open == std::string::npos) break;
    std::size_t i = open + kOpen.size();
    while (i < body.size() && IsMarkerChar(body[i])) ++i;
    if (i > open + kOpen.size() && body.compare(i, kClose.size(), kClose) == 0) {
      on_text(std::string_view(body).substr(pos, open - pos));
      on_marker(body.substr(open + kOpen.size(), i - open - kOpen.size()));
      pos = i + kClose.size();
    } else {
      on_text(std::string_view(body).substr(pos, open + 1 - pos));
      pos = open + 1;
    }
  }
  if (pos < body.size()) on_text(std::string_view(body).substr(pos));
}

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string JoinNames(const std::set<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

}  // namespace

const std::vector<std::string>& RequiredTemplateIds() {
  static const std::vector<std::string> ids = {
      "step1.classify",      "step2.extract",      "step2.dedup",
      "step3.extract",       "step3.dedup",        "step3.filter1",
      "step3.filter2",       "step4.annotate",     "baseline.zg.query",
      "baseline.zg.phrase",  "baseline.zg.info",   "baseline.icl.query",
      "baseline.icl.phrase", "baseline.icl.info",  "sft.query",
      "sft.phrase",          "sft.info",
  };
  return ids;
}

std::set<std::string> ScanPlaceholders(const std::string& body) {
  std::set<std::string> names;
  WalkMarkers(
      body, [](std::string_view) {},
      [&](const std::string& name) { names.insert(name); });
  return names;
}

BaselineTask ParseBaselineTask(std::string_view name) {
  if (name == "leakage" || name == "query") return BaselineTask::kLeakage;
  if (name == "phrase") return BaselineTask::kPhrase;
  if (name == "information" || name == "info") {
    return BaselineTask::kInformation;
  }
  throw ConfigError("unknown task \"" + std::string(name) +
                    "\" (expected leakage, phrase or information)");
}

const char* BaselineTaskName(BaselineTask task) {
  switch (task) {
    case BaselineTask::kPhrase:
      return "phrase";
    case BaselineTask::kInformation:
      return "information";
    case BaselineTask::kLeakage:
      break;
  }
  return "leakage";
}

TemplateRegistry TemplateRegistry::Load(const std::string& directory) {
  const fs::path root(directory);
  if (!fs::is_directory(root)) {
    throw ConfigError("template directory not found: " + directory);
  }
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw ConfigError("template manifest not found: " +
                      manifest_path.string());
  }
  Json manifest;
  try {
    manifest = Json::parse(ReadFile(manifest_path));
  } catch (const Json::exception& e) {
    throw ConfigError("template manifest " + manifest_path.string() + ": " +
                      e.what());
  }

  std::map<std::string, std::set<std::string>> declared;
  try {
    for (const auto& entry : manifest.at("templates")) {
      std::set<std::string> names;
      for (const auto& n : entry.at("placeholders")) {
        names.insert(n.get<std::string>());
      }
      declared[entry.at("id").get<std::string>()] = std::move(names);
    }
  } catch (const Json::exception& e) {
    throw ConfigError("template manifest " + manifest_path.string() + ": " +
                      e.what());
  }

  std::set<std::string> missing;
  for (const auto& id : RequiredTemplateIds()) {
    if (!declared.count(id)) missing.insert(id);
  }

  TemplateRegistry reg;
  std::vector<std::string> mismatches;
  for (const auto& [id, names] : declared) {
    for (Lang lang : {Lang::kEnglish, Lang::kChinese}) {
      const fs::path file = root / LangName(lang) / (id + ".txt");
      if (!fs::exists(file)) {
        missing.insert(id + " (" + LangName(lang) + ")");
        continue;
      }
      PromptTemplate t;
      t.id = id;
      t.lang = lang;
      t.body = ReadFile(file);
      if (!t.body.empty() && t.body.back() == '\n') t.body.pop_back();
      t.placeholders = ScanPlaceholders(t.body);
      if (t.placeholders != names) {
        mismatches.push_back(file.string() + " uses {" +
                             JoinNames(t.placeholders) +
                             "} but the manifest declares {" +
                             JoinNames(names) + "}");
      }
      reg.templates_[{id, lang}] = std::move(t);
    }
  }
  if (!missing.empty()) {
    throw ConfigError("missing templates: " + JoinNames(missing));
  }
  if (!mismatches.empty()) {
    std::string msg = "template placeholder mismatch:";
    for (const auto& m : mismatches) msg += "\n  " + m;
    throw ConfigError(msg);
  }
  return reg;
}

const PromptTemplate& TemplateRegistry::Get(const std::string& id,
                                            Lang lang) const {
  auto it = templates_.find({id, lang});
  if (it == templates_.end()) {
    throw ConfigError("unknown template " + id + " (" + LangName(lang) + ")");
  }
  return it->second;
}

bool TemplateRegistry::Has(const std::string& id, Lang lang) const {
  return templates_.count({id, lang}) > 0;
}

std::vector<std::string> TemplateRegistry::Ids() const {
  std::set<std::string> ids;
  for (const auto& [key, t] : templates_) ids.insert(key.first);
  return {ids.begin(), ids.end()};
}

std::string TemplateRegistry::Render(const std::string& id, Lang lang,
                                     const Bindings& bindings) const {
  const PromptTemplate& t = Get(id, lang);
  std::set<std::string> missing, extra;
  for (const auto& name : t.placeholders) {
    if (!bindings.count(name)) missing.insert(name);
  }
  for (const auto& [name, value] : bindings) {
    if (!t.placeholders.count(name)) extra.insert(name);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "bad bindings for " + id + ":";
    if (!missing.empty()) msg += " missing {" + JoinNames(missing) + "}";
    if (!extra.empty()) msg += " unexpected {" + JoinNames(extra) + "}";
    throw ConfigError(msg);
  }
  std::string out;
  out.reserve(t.body.size());
  WalkMarkers(
      t.body, [&](std::string_view text) { out.append(text); },
      [&](const std::string& name) { out += bindings.at(name); });
  return out;
}

std::string PromptJson(const Json& value) {
  return value.dump(4, ' ', false, Json::error_handler_t::replace);
}

std::string FormatIclCase(const QuerySample& sample, BaselineTask task,
                          Lang lang) {
  Json answer;
  switch (task) {
    case BaselineTask::kLeakage:
      answer = Json::object();
      answer["judgment"] = sample.gold_leak;
      break;
    case BaselineTask::kPhrase:
      answer = Json::array();
      for (const auto& p : sample.gold_phrases) answer.push_back(p);
      break;
    case BaselineTask::kInformation:
      answer = Json::array();
      for (std::size_t k = 0; k < sample.gold_phrases.size(); ++k) {
        Json item = Json::object();
        item[kKeyPhrase] = sample.gold_phrases[k];
        item[kKeyInformation] = sample.gold_infos[k];
        answer.push_back(std::move(item));
      }
      break;
  }
  std::string out;
  if (lang == Lang::kChinese) {
    out += "用户的请求：\"" + sample.query + "\"\n";
    out += "JSON输出：\n";
  } else {
    out += "User's query: \"" + sample.query + "\"\n";
    out += "JSON Output:\n";
  }
  out += "```json\n" + PromptJson(answer) + "\n```\n";
  return out;
}

std::string FormatIclCases(const std::vector<QuerySample>& samples,
                           BaselineTask task, Lang lang) {
  std::string out;
  for (const auto& s : samples) {
    out += FormatIclCase(s, task, lang);
    out += "\n";
  }
  return out;
}

}  // namespace privdet

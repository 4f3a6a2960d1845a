#include "privdet/baselines.h"

#include <algorithm>
#include <map>
#include <numeric>

#include "privdet/json_extract.h"
#include "privdet/parallel.h"
#include "privdet/random.h"

namespace privdet {
namespace {

std::string SampleTag(const QuerySample& s) {
  return s.dialogue_id + "#" + std::to_string(s.turn_index);
}

std::optional<std::string> ContextMessage(const QuerySample& s,
                                          const BaselineConfig& c) {
  if (!c.include_context || c.context_token_budget == 0 || s.context.empty()) {
    return std::nullopt;
  }
  const bool zh = c.lang == Lang::kChinese;
  std::string header =
      zh ? "以下是之前的对话：\n" : "Earlier conversation with the user:\n";
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < s.context.size(); ++i) {
    const bool user = i % 2 == 0;
    lines.push_back(std::string(zh ? (user ? "用户：" : "助手：")
                                   : (user ? "User: " : "Assistant: ")) +
                    s.context[i] + "\n");
  }
  std::size_t tokens = EstimateTokens(header);
  std::size_t first = lines.size();
  while (first > 0 &&
         tokens + EstimateTokens(lines[first - 1]) <= c.context_token_budget) {
    tokens += EstimateTokens(lines[first - 1]);
    --first;
  }
  if (first == lines.size()) return std::nullopt;
  for (std::size_t i = first; i < lines.size(); ++i) header += lines[i];
  header.pop_back();
  return header;
}

}  // namespace

BaselineMethod ParseBaselineMethod(std::string_view name) {
  if (name == "zg" || name == "zero-shot") return BaselineMethod::kZeroShot;
  if (name == "icl") return BaselineMethod::kIcl;
  throw ConfigError("unknown method \"" + std::string(name) +
                    "\" (expected zg or icl)");
}

const char* BaselineMethodName(BaselineMethod method) {
  return method == BaselineMethod::kIcl ? "icl" : "zg";
}

void BaselineConfig::Validate() const {
  if (method == BaselineMethod::kIcl && icl_k < 2) {
    throw ConfigError("icl_k must be >= 2");
  }
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
}

Json BaselineConfig::ToJson(bool include_parallelism) const {
  Json j = Json::object();
  j["method"] = BaselineMethodName(method);
  j["task"] = BaselineTaskName(task);
  j["lang"] = LangName(lang);
  if (method == BaselineMethod::kIcl) j["icl_k"] = icl_k;
  j["seed"] = seed;
  if (include_parallelism) j["parallelism"] = parallelism;
  j["include_context"] = include_context;
  if (include_context) j["context_token_budget"] = context_token_budget;
  return j;
}

std::vector<QuerySample> SelectIclExamples(const std::vector<QuerySample>& train,
                                           int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k must be >= 2 to hold both classes");
  const auto kk = static_cast<std::size_t>(k);
  if (train.size() < kk) {
    throw DataError("training set has " + std::to_string(train.size()) +
                    " samples, fewer than k=" + std::to_string(k));
  }
  std::vector<std::size_t> leak, nonleak;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (train[i].gold_leak ? leak : nonleak).push_back(i);
  }
  if (leak.empty() || nonleak.empty()) {
    throw DataError("training set must contain both leak and non-leak samples");
  }
  Rng rng(seed);
  std::vector<std::size_t> chosen = {leak[rng.Below(leak.size())],
                                     nonleak[rng.Below(nonleak.size())]};
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (i != chosen[0] && i != chosen[1]) rest.push_back(i);
  }
  rng.Shuffle(std::span<std::size_t>(rest));
  chosen.insert(chosen.end(), rest.begin(), rest.begin() + (kk - 2));
  std::sort(chosen.begin(), chosen.end());
  std::vector<QuerySample> out;
  for (auto i : chosen) out.push_back(train[i]);
  return out;
}

std::vector<QuerySample> SelectFixedExamples(
    const std::vector<QuerySample>& train, const std::vector<SampleKey>& keys) {
  std::map<SampleKey, const QuerySample*> index;
  for (const auto& s : train) index[{s.dialogue_id, s.turn_index}] = &s;
  std::vector<QuerySample> out;
  for (const auto& k : keys) {
    auto it = index.find(k);
    if (it == index.end()) {
      throw DataError("fixed example " + k.first + "#" +
                      std::to_string(k.second) + " not in training set");
    }
    out.push_back(*it->second);
  }
  return out;
}

std::string BaselineTemplateId(BaselineMethod method, BaselineTask task) {
  std::string id = method == BaselineMethod::kIcl ? "baseline.icl." : "baseline.zg.";
  switch (task) {
    case BaselineTask::kPhrase:
      return id + "phrase";
    case BaselineTask::kInformation:
      return id + "info";
    case BaselineTask::kLeakage:
      break;
  }
  return id + "query";
}

std::string BuildBaselinePrompt(const TemplateRegistry& templates,
                                const BaselineConfig& config,
                                const std::vector<QuerySample>& examples,
                                const QuerySample& sample) {
  TemplateRegistry::Bindings b = {{"QUERY", sample.query}};
  if (config.method == BaselineMethod::kIcl) {
    b["CASE"] = FormatIclCases(examples, config.task, config.lang);
  }
  return templates.Render(BaselineTemplateId(config.method, config.task),
                          config.lang, b);
}

std::optional<Prediction> ParseBaselineOutput(const std::string& text,
                                              BaselineTask task,
                                              const QuerySample& sample) {
  Json j;
  try {
    j = ExtractJsonBlock(text);
  } catch (const JsonExtractError&) {
    return std::nullopt;
  }
  Prediction p;
  p.dialogue_id = sample.dialogue_id;
  p.turn_index = sample.turn_index;
  switch (task) {
    case BaselineTask::kLeakage: {
      if (!j.is_object()) return std::nullopt;
      auto it = j.find("judgment");
      if (it == j.end()) return std::nullopt;
      if (it->is_boolean()) {
        p.leak = it->get<bool>();
      } else if (it->is_string() &&
                 (NormalizePhrase(it->get<std::string>()) == "true" ||
                  NormalizePhrase(it->get<std::string>()) == "false")) {
        p.leak = NormalizePhrase(it->get<std::string>()) == "true";
      } else {
        return std::nullopt;
      }
      return p;
    }
    case BaselineTask::kPhrase:
    case BaselineTask::kInformation: {
      if (!j.is_array()) return std::nullopt;
      for (const auto& e : j) {
        PrivacyItem item;
        if (e.is_string()) {
          item.phrase = e.get<std::string>();
        } else if (e.is_object() && e.contains(kKeyPhrase) &&
                   e[kKeyPhrase].is_string()) {
          item.phrase = e[kKeyPhrase].get<std::string>();
          if (task == BaselineTask::kInformation && e.contains(kKeyInformation) &&
              e[kKeyInformation].is_string()) {
            item.information = e[kKeyInformation].get<std::string>();
          }
        } else {
          continue;
        }
        if (item.phrase.empty()) continue;
        p.items.push_back(std::move(item));
      }
      return p;
    }
  }
  return std::nullopt;
}

BaselineResult RunBaseline(const std::vector<QuerySample>& samples,
                           const std::vector<QuerySample>& examples,
                           const TemplateRegistry& templates,
                           ChatClient& client, const BaselineConfig& config) {
  config.Validate();
  if (config.method == BaselineMethod::kIcl && examples.empty()) {
    throw ConfigError("in-context learning needs examples");
  }
  const std::string step = BaselineTemplateId(config.method, config.task);
  const std::size_t n = samples.size();
  std::vector<Prediction> preds(n);
  std::vector<std::optional<std::string>> warn(n), fail(n);

  // Render everything first so template errors surface before any call.
  std::vector<std::string> prompts(n);
  for (std::size_t i = 0; i < n; ++i) {
    prompts[i] = BuildBaselinePrompt(templates, config, examples, samples[i]);
  }

  ParallelFor(n, static_cast<std::size_t>(config.parallelism),
              [&](std::size_t i) {
                const auto& s = samples[i];
                preds[i].dialogue_id = s.dialogue_id;
                preds[i].turn_index = s.turn_index;
                try {
                  const auto resp = client.Chat(
                      client.MakeRequest(prompts[i], ContextMessage(s, config)),
                      step);
                  if (auto p = ParseBaselineOutput(resp.text, config.task, s)) {
                    preds[i] = std::move(*p);
                  } else {
                    warn[i] = SampleTag(s) + " " + step +
                              ": unparseable output, empty prediction";
                  }
                } catch (const std::exception& e) {
                  fail[i] = SampleTag(s) + " " + step + ": " + e.what();
                }
              });

  BaselineResult out;
  out.predictions = std::move(preds);
  for (std::size_t i = 0; i < n; ++i) {
    if (warn[i]) out.warnings.push_back(*warn[i]);
    if (fail[i]) out.failures.push_back(*fail[i]);
  }
  return out;
}

}  // namespace privdet

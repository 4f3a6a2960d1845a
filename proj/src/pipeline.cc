#include "privdet/pipeline.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "privdet/json_extract.h"
#include "privdet/parallel.h"
#include "privdet/provenance.h"
#include "privdet/random.h"

namespace privdet {
namespace {

constexpr const char* kStep1 = "step1.classify";
constexpr const char* kStep2Extract = "step2.extract";
constexpr const char* kStep2Dedup = "step2.dedup";
constexpr const char* kStep3Extract = "step3.extract";
constexpr const char* kStep3Dedup = "step3.dedup";
constexpr const char* kStep3Filter1 = "step3.filter1";
constexpr const char* kStep3Filter2 = "step3.filter2";
constexpr const char* kStep4 = "step4.annotate";

// Stream tags for DeriveSeed.
constexpr std::uint64_t kStreamCategorySample = 0;
constexpr std::uint64_t kStreamDedupRun = 1;  // + run number

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

void Warn(Warnings* w, std::string msg) {
  if (w) w->push_back(std::move(msg));
}

std::optional<Json> TryExtract(const std::string& text) {
  try {
    return ExtractJsonBlock(text);
  } catch (const JsonExtractError&) {
    return std::nullopt;
  }
}

std::optional<bool> AsBool(const Json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const std::string s = NormalizePhrase(v.get<std::string>());
    if (s == "true") return true;
    if (s == "false") return false;
  }
  return std::nullopt;
}

std::optional<LeakJudgment> ParseJudgment(const Json& j) {
  if (!j.is_object()) return std::nullopt;
  auto it = j.find("judgment");
  if (it == j.end()) return std::nullopt;
  auto b = AsBool(*it);
  if (!b) return std::nullopt;
  LeakJudgment out;
  out.judgment = *b;
  if (auto r = j.find("reason"); r != j.end() && r->is_string()) {
    out.reason = r->get<std::string>();
  }
  return out;
}

// String elements of a JSON list; non-strings are skipped.
std::optional<std::vector<std::string>> StringList(const Json& j) {
  if (!j.is_array()) return std::nullopt;
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (v.is_string()) out.push_back(Trim(v.get<std::string>()));
  }
  return out;
}

bool IsSubstring(const std::string& phrase, const std::string& query) {
  return !phrase.empty() && query.find(phrase) != std::string::npos;
}

std::string SampleTag(const QuerySample& s) {
  return s.dialogue_id + "#" + std::to_string(s.turn_index);
}

}  // namespace

Step3Order ParseStep3Order(std::string_view name) {
  if (name == "dedup_then_filter") return Step3Order::kDedupThenFilter;
  if (name == "filter_then_dedup") return Step3Order::kFilterThenDedup;
  throw ConfigError("unknown step3_order \"" + std::string(name) +
                    "\" (expected dedup_then_filter or filter_then_dedup)");
}

const char* Step3OrderName(Step3Order order) {
  return order == Step3Order::kFilterThenDedup ? "filter_then_dedup"
                                               : "dedup_then_filter";
}

void PipelineConfig::Validate() const {
  if (!(category_sample_fraction > 0.0 && category_sample_fraction <= 1.0)) {
    throw ConfigError("category_sample_fraction must be in (0, 1]");
  }
  if (dedup_block_size < 2) throw ConfigError("dedup_block_size must be >= 2");
  if (extraction_block_size < 2) {
    throw ConfigError("extraction_block_size must be >= 2");
  }
  if (max_dedup_iterations < 1) {
    throw ConfigError("max_dedup_iterations must be >= 1");
  }
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (max_examples_per_category < 1) {
    throw ConfigError("max_examples_per_category must be >= 1");
  }
}

PipelineConfig PipelineConfig::FromJson(const Json& j) {
  return FromJson(j, PipelineConfig{});
}

PipelineConfig PipelineConfig::FromJson(const Json& j, PipelineConfig c) {
  if (!j.is_object()) throw ConfigError("pipeline config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "lang") {
        c.lang = ParseLang(v.get<std::string>());
      } else if (key == "category_sample_fraction") {
        c.category_sample_fraction = v.get<double>();
      } else if (key == "dedup_block_size") {
        c.dedup_block_size = v.get<int>();
      } else if (key == "extraction_block_size") {
        c.extraction_block_size = v.get<int>();
      } else if (key == "max_dedup_iterations") {
        c.max_dedup_iterations = v.get<int>();
      } else if (key == "parallelism") {
        c.parallelism = v.get<int>();
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "context_token_budget") {
        c.context_token_budget = v.get<std::size_t>();
      } else if (key == "max_examples_per_category") {
        c.max_examples_per_category = v.get<std::size_t>();
      } else if (key == "step3_order") {
        c.step3_order = ParseStep3Order(v.get<std::string>());
      } else {
        throw ConfigError("unknown pipeline config key \"" + key + "\"");
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  return c;
}

Json PipelineConfig::ToJson(bool include_parallelism) const {
  Json j = Json::object();
  j["lang"] = LangName(lang);
  j["category_sample_fraction"] = category_sample_fraction;
  j["dedup_block_size"] = dedup_block_size;
  j["extraction_block_size"] = extraction_block_size;
  j["max_dedup_iterations"] = max_dedup_iterations;
  if (include_parallelism) j["parallelism"] = parallelism;
  j["seed"] = seed;
  j["context_token_budget"] = context_token_budget;
  j["max_examples_per_category"] = max_examples_per_category;
  j["step3_order"] = Step3OrderName(step3_order);
  return j;
}

std::vector<std::string> CategorySet::Names() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.name);
  return out;
}

std::string InlineJsonList(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += Json(items[i]).dump(-1, ' ', false, Json::error_handler_t::replace);
  }
  out += "]";
  return out;
}

Annotator::Annotator(const TemplateRegistry& templates, ChatClient& client,
                     PipelineConfig config)
    : templates_(templates), client_(client), config_(std::move(config)) {
  config_.Validate();
}

std::optional<std::string> Annotator::ContextMessage(
    const QuerySample& sample) const {
  if (config_.context_token_budget == 0 || sample.context.empty()) {
    return std::nullopt;
  }
  const bool zh = config_.lang == Lang::kChinese;
  const std::string header =
      zh ? "以下是之前的对话：\n" : "Earlier conversation with the user:\n";
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < sample.context.size(); ++i) {
    const bool user = i % 2 == 0;
    std::string label = zh ? (user ? "用户：" : "助手：")
                           : (user ? "User: " : "Assistant: ");
    lines.push_back(label + sample.context[i] + "\n");
  }
  std::size_t tokens = EstimateTokens(header);
  std::size_t first = lines.size();
  // Keep the newest lines that fit.
  while (first > 0 &&
         tokens + EstimateTokens(lines[first - 1]) <=
             config_.context_token_budget) {
    tokens += EstimateTokens(lines[first - 1]);
    --first;
  }
  if (first == lines.size()) return std::nullopt;
  std::string out = header;
  for (std::size_t i = first; i < lines.size(); ++i) out += lines[i];
  out.pop_back();
  return out;
}

std::string Annotator::Call(const std::string& step, std::string prompt,
                            std::optional<std::string> system) {
  return client_.Chat(client_.MakeRequest(std::move(prompt), std::move(system)),
                      step)
      .text;
}

LeakJudgment Annotator::ClassifyLeakage(const QuerySample& sample,
                                        Warnings* w) {
  if (Trim(sample.query).empty()) throw DataError("empty query");
  const std::string prompt =
      templates_.Render(kStep1, config_.lang, {{"INPUT", sample.query}});
  const auto system = ContextMessage(sample);
  for (int attempt = 1; attempt <= 2; ++attempt) {
    if (auto j = TryExtract(Call(kStep1, prompt, system))) {
      if (auto r = ParseJudgment(*j)) return *r;
    }
    Warn(w, std::string(kStep1) + ": unparseable output" +
                (attempt == 1 ? ", re-asking" : ""));
  }
  throw DataError(std::string(kStep1) + ": unparseable output after re-ask");
}

std::map<std::string, std::vector<std::string>>
Annotator::ExtractSampleCategories(const QuerySample& sample, Warnings* w) {
  const std::string prompt =
      templates_.Render(kStep2Extract, config_.lang, {{"INPUT", sample.query}});
  std::optional<Json> parsed;
  for (int attempt = 1; attempt <= 2 && !parsed; ++attempt) {
    auto j = TryExtract(Call(kStep2Extract, prompt, std::nullopt));
    if (j && j->is_object()) {
      parsed = std::move(j);
    } else {
      Warn(w, std::string(kStep2Extract) + ": unparseable output" +
                  (attempt == 1 ? ", re-asking" : ""));
    }
  }
  if (!parsed) {
    throw DataError(std::string(kStep2Extract) +
                    ": unparseable output after re-ask");
  }
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [key, value] : parsed->items()) {
    const std::string name = Trim(key);
    if (name.empty()) continue;
    std::vector<std::string> phrases;
    if (value.is_string()) {
      phrases.push_back(value.get<std::string>());
    } else if (value.is_array()) {
      for (const auto& p : value) {
        if (p.is_string()) phrases.push_back(p.get<std::string>());
      }
    }
    for (const auto& p : phrases) {
      if (!IsSubstring(p, sample.query)) {
        Warn(w, std::string(kStep2Extract) + ": dropped phrase not in query: " +
                    p);
        continue;
      }
      auto& dst = out[name];
      if (std::find(dst.begin(), dst.end(), p) == dst.end()) dst.push_back(p);
    }
  }
  return out;
}

std::vector<std::string> Annotator::DedupBlock(
    const std::vector<CategoryEntry>& block, Warnings* w) {
  std::vector<std::string> names;
  for (const auto& e : block) names.push_back(e.name);
  if (block.size() < 2) return names;

  Json listing = Json::object();
  for (const auto& e : block) listing[e.name] = e.examples;
  const std::string prompt = templates_.Render(
      kStep2Dedup, config_.lang,
      {{"BLOCK-SIZE", std::to_string(block.size())},
       {"INPUT", PromptJson(listing)}});
  auto j = TryExtract(Call(kStep2Dedup, prompt, std::nullopt));
  auto kept = j ? StringList(*j) : std::nullopt;
  if (!kept) {
    Warn(w, std::string(kStep2Dedup) + ": unparseable output, block kept");
    return names;
  }
  const std::set<std::string> keep(kept->begin(), kept->end());
  std::vector<std::string> out;
  for (const auto& n : names) {
    if (keep.count(Trim(n))) out.push_back(n);
  }
  if (out.empty()) {
    Warn(w, std::string(kStep2Dedup) + ": no input category kept, block kept");
    return names;
  }
  return out;
}

std::vector<std::string> Annotator::DedupLoop(
    std::vector<CategoryEntry> current, int run, std::uint64_t seed,
    CategorySet* out, Warnings* w) {
  Rng rng(seed);
  const std::size_t block_size =
      static_cast<std::size_t>(config_.dedup_block_size);
  bool stable = false;
  for (int round = 1; round <= config_.max_dedup_iterations; ++round) {
    rng.Shuffle(std::span<CategoryEntry>(current));
    const std::size_t n_blocks = (current.size() + block_size - 1) / block_size;
    std::vector<std::vector<std::string>> kept(n_blocks);
    std::vector<Warnings> block_warnings(n_blocks);
    ParallelFor(n_blocks, static_cast<std::size_t>(config_.parallelism),
                [&](std::size_t b) {
                  const auto first = current.begin() + b * block_size;
                  const auto last =
                      current.begin() +
                      std::min(current.size(), (b + 1) * block_size);
                  std::vector<CategoryEntry> block(first, last);
                  try {
                    kept[b] = DedupBlock(block, &block_warnings[b]);
                  } catch (const std::exception& e) {
                    block_warnings[b].push_back(std::string(kStep2Dedup) +
                                                ": " + e.what() +
                                                ", block kept");
                    for (const auto& c : block) kept[b].push_back(c.name);
                  }
                });
    std::vector<CategoryEntry> next;
    for (std::size_t b = 0; b < n_blocks; ++b) {
      if (w) w->insert(w->end(), block_warnings[b].begin(),
                       block_warnings[b].end());
      std::size_t k = 0;
      for (std::size_t i = b * block_size;
           i < std::min(current.size(), (b + 1) * block_size); ++i) {
        if (k < kept[b].size() && current[i].name == kept[b][k]) {
          next.push_back(current[i]);
          ++k;
        }
      }
    }
    out->provenance.push_back({run, round, current.size(), next.size()});
    stable = next.size() == current.size();
    current = std::move(next);
    if (stable) break;
  }
  if (!stable) {
    out->hit_iteration_cap = true;
    Warn(w, std::string(kStep2Dedup) + ": run " + std::to_string(run) +
                " stopped at the iteration cap");
  }
  std::vector<std::string> names;
  for (const auto& e : current) names.push_back(e.name);
  return names;
}

CategorySet Annotator::DedupCategories(
    const std::vector<CategoryEntry>& entries, Warnings* w) {
  if (entries.empty()) throw DataError("no categories to deduplicate");
  CategorySet out;
  std::map<std::string, const CategoryEntry*> by_name;
  for (const auto& e : entries) by_name.emplace(e.name, &e);

  std::vector<std::string> merged;
  std::set<std::string> seen;
  for (int run = 1; run <= 2; ++run) {
    const auto names = DedupLoop(
        entries, run, DeriveSeed(config_.seed, kStreamDedupRun + run), &out, w);
    for (const auto& n : names) {
      if (seen.insert(n).second) merged.push_back(n);
    }
  }
  std::vector<CategoryEntry> survivors;
  for (const auto& n : merged) survivors.push_back(*by_name.at(n));

  std::vector<std::string> final_names = merged;
  if (survivors.size() >= 2) {
    try {
      final_names = DedupBlock(survivors, w);
    } catch (const std::exception& e) {
      Warn(w, std::string(kStep2Dedup) + ": final pass failed: " + e.what());
    }
  }
  out.provenance.push_back({0, 1, survivors.size(), final_names.size()});
  for (const auto& n : final_names) out.entries.push_back(*by_name.at(n));
  return out;
}

PhraseCategories Annotator::ExtractPhrases(
    const QuerySample& sample, const std::vector<std::string>& categories,
    Warnings* w) {
  if (categories.empty()) throw DataError("phrase extraction needs categories");
  const auto system = ContextMessage(sample);
  const std::size_t block_size =
      static_cast<std::size_t>(config_.extraction_block_size);
  PhraseCategories out;
  std::set<std::string> seen;
  for (std::size_t start = 0; start < categories.size(); start += block_size) {
    const std::vector<std::string> block(
        categories.begin() + start,
        categories.begin() + std::min(categories.size(), start + block_size));
    const std::set<std::string> allowed(block.begin(), block.end());
    const std::string prompt =
        templates_.Render(kStep3Extract, config_.lang,
                          {{"CATEGORIES", InlineJsonList(block)},
                           {"INPUT", sample.query}});
    auto j = TryExtract(Call(kStep3Extract, prompt, system));
    if (!j || !j->is_object()) {
      Warn(w, std::string(kStep3Extract) + ": unparseable output for block " +
                  std::to_string(start / block_size + 1));
      continue;
    }
    for (const auto& [phrase, cat] : j->items()) {
      if (!cat.is_string() || !allowed.count(Trim(cat.get<std::string>()))) {
        Warn(w, std::string(kStep3Extract) +
                    ": dropped phrase with unknown category: " + phrase);
        continue;
      }
      if (!IsSubstring(phrase, sample.query)) {
        Warn(w, std::string(kStep3Extract) +
                    ": dropped phrase not in query: " + phrase);
        continue;
      }
      if (seen.insert(phrase).second) {
        out.emplace_back(phrase, Trim(cat.get<std::string>()));
      }
    }
  }
  return out;
}

std::vector<std::string> Annotator::DedupPhrases(
    const QuerySample& sample, const std::vector<std::string>& phrases,
    Warnings* w) {
  if (phrases.size() < 2) return phrases;
  const std::string prompt = templates_.Render(
      kStep3Dedup, config_.lang,
      {{"INPUT", sample.query}, {"PHRASES", InlineJsonList(phrases)}});
  auto j = TryExtract(Call(kStep3Dedup, prompt, ContextMessage(sample)));
  auto kept = j ? StringList(*j) : std::nullopt;
  if (!kept) {
    Warn(w, std::string(kStep3Dedup) + ": unparseable output, phrases kept");
    return phrases;
  }
  const std::set<std::string> input(phrases.begin(), phrases.end());
  std::set<std::string> keep;
  for (const auto& k : *kept) {
    if (input.count(k)) {
      keep.insert(k);
    } else {
      Warn(w, std::string(kStep3Dedup) + ": dropped phrase not in input: " + k);
    }
  }
  std::vector<std::string> out;
  for (const auto& p : phrases) {
    if (keep.count(p)) out.push_back(p);
  }
  if (out.empty()) {
    Warn(w, std::string(kStep3Dedup) + ": no input phrase kept, phrases kept");
    return phrases;
  }
  return out;
}

bool Annotator::FilterPhrase(const QuerySample& sample,
                             const std::string& phrase, FilterRule rule,
                             Warnings* w) {
  const char* step =
      rule == FilterRule::kUserLinked ? kStep3Filter1 : kStep3Filter2;
  const std::string prompt = templates_.Render(
      step, config_.lang, {{"INPUT", sample.query}, {"PHRASE", phrase}});
  const auto system = ContextMessage(sample);
  for (int attempt = 1; attempt <= 2; ++attempt) {
    if (auto j = TryExtract(Call(step, prompt, system))) {
      if (auto r = ParseJudgment(*j)) return r->judgment;
    }
    if (attempt == 1) {
      Warn(w, std::string(step) + ": unparseable output, re-asking");
    }
  }
  Warn(w, std::string(step) + ": unparseable output, kept phrase: " + phrase);
  return true;
}

std::optional<PrivacyItem> Annotator::AnnotateInformation(
    const QuerySample& sample, const std::string& phrase, Warnings* w) {
  const std::string prompt = templates_.Render(
      kStep4, config_.lang, {{"INPUT", sample.query}, {"PHRASE", phrase}});
  const auto system = ContextMessage(sample);
  for (int attempt = 1; attempt <= 2; ++attempt) {
    auto j = TryExtract(Call(kStep4, prompt, system));
    if (j && j->is_object()) {
      auto info = j->find(kKeyInformation);
      if (info != j->end() && info->is_string() &&
          !Trim(info->get<std::string>()).empty()) {
        auto p = j->find(kKeyPhrase);
        if (p == j->end() || !p->is_string() ||
            p->get<std::string>() != phrase) {
          Warn(w, std::string(kStep4) +
                      ": phrase field differs from input, input kept: " +
                      phrase);
        }
        PrivacyItem item;
        item.phrase = phrase;
        item.information = Trim(info->get<std::string>());
        return item;
      }
    }
    if (attempt == 1) {
      Warn(w, std::string(kStep4) + ": unusable output, re-asking");
    }
  }
  Warn(w, std::string(kStep4) + ": unusable output, dropped phrase: " + phrase);
  return std::nullopt;
}

namespace {

struct SampleState {
  std::optional<LeakJudgment> judgment;
  Warnings warnings;
  std::optional<SampleFailure> failure;
  std::vector<PrivacyItem> items;
  std::size_t n_extracted = 0;
  std::size_t n_after_dedup = 0;
  std::size_t n_after_filter1 = 0;
  std::size_t n_after_filter2 = 0;
};

SampleFailure MakeFailure(const QuerySample& s, const std::string& step,
                          const std::exception& e) {
  SampleFailure f;
  f.dialogue_id = s.dialogue_id;
  f.turn_index = s.turn_index;
  f.step = step;
  f.error = e.what();
  f.backend = dynamic_cast<const BackendError*>(&e) != nullptr;
  return f;
}

}  // namespace

PipelineResult RunPipeline(const std::vector<DialogueRecord>& records,
                           const TemplateRegistry& templates,
                           ChatClient& client, const PipelineConfig& config) {
  Annotator ann(templates, client, config);
  const auto samples = Flatten(records);
  const std::size_t n = samples.size();
  const std::size_t workers = static_cast<std::size_t>(config.parallelism);
  std::vector<SampleState> state(n);

  // Step 1.
  ParallelFor(n, workers, [&](std::size_t i) {
    try {
      state[i].judgment = ann.ClassifyLeakage(samples[i], &state[i].warnings);
    } catch (const std::exception& e) {
      state[i].failure = MakeFailure(samples[i], kStep1, e);
    }
  });
  std::vector<std::size_t> leak_idx;
  for (std::size_t i = 0; i < n; ++i) {
    if (state[i].judgment && state[i].judgment->judgment) leak_idx.push_back(i);
  }

  // Step 2: categories from a seeded subsample of leak-judged samples.
  std::vector<std::size_t> cat_idx = leak_idx;
  if (!cat_idx.empty()) {
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(
               config.category_sample_fraction *
               static_cast<double>(cat_idx.size()))));
    Rng rng(DeriveSeed(config.seed, kStreamCategorySample));
    rng.Shuffle(std::span<std::size_t>(cat_idx));
    cat_idx.resize(std::min(k, cat_idx.size()));
    std::sort(cat_idx.begin(), cat_idx.end());
  }
  std::vector<std::map<std::string, std::vector<std::string>>> extracted(
      cat_idx.size());
  std::vector<Warnings> step2_warnings(cat_idx.size());
  std::vector<std::optional<SampleFailure>> step2_failures(cat_idx.size());
  ParallelFor(cat_idx.size(), workers, [&](std::size_t j) {
    const auto& s = samples[cat_idx[j]];
    try {
      extracted[j] = ann.ExtractSampleCategories(s, &step2_warnings[j]);
    } catch (const std::exception& e) {
      step2_failures[j] = MakeFailure(s, kStep2Extract, e);
    }
  });

  Warnings global_warnings;
  std::vector<SampleFailure> failures;
  std::vector<CategoryEntry> entries;
  std::map<std::string, std::size_t> entry_pos;
  for (std::size_t j = 0; j < cat_idx.size(); ++j) {
    const auto& s = samples[cat_idx[j]];
    for (const auto& msg : step2_warnings[j]) {
      global_warnings.push_back(SampleTag(s) + " " + msg);
    }
    if (step2_failures[j]) failures.push_back(*step2_failures[j]);
    for (const auto& [name, phrases] : extracted[j]) {
      auto [it, fresh] = entry_pos.emplace(name, entries.size());
      if (fresh) entries.push_back({name, {}});
      auto& ex = entries[it->second].examples;
      for (const auto& p : phrases) {
        if (ex.size() >= config.max_examples_per_category) break;
        if (std::find(ex.begin(), ex.end(), p) == ex.end()) ex.push_back(p);
      }
    }
  }
  const std::size_t n_categories_extracted = entries.size();

  CategorySet categories;
  if (!entries.empty()) {
    categories = ann.DedupCategories(entries, &global_warnings);
  } else if (!leak_idx.empty()) {
    global_warnings.push_back(
        "step2: no categories extracted; leak-judged samples get no phrases");
  }
  const auto category_names = categories.Names();

  // Steps 3 and 4.
  ParallelFor(leak_idx.size(), workers, [&](std::size_t j) {
    const std::size_t i = leak_idx[j];
    const auto& s = samples[i];
    auto& st = state[i];
    if (category_names.empty()) return;
    std::string step = kStep3Extract;
    try {
      std::vector<std::string> phrases;
      for (const auto& [p, c] : ann.ExtractPhrases(s, category_names,
                                                   &st.warnings)) {
        phrases.push_back(p);
      }
      st.n_extracted = phrases.size();

      auto dedup = [&] {
        step = kStep3Dedup;
        phrases = ann.DedupPhrases(s, phrases, &st.warnings);
        st.n_after_dedup = phrases.size();
      };
      auto filter = [&](FilterRule rule, std::size_t* count) {
        step = rule == FilterRule::kUserLinked ? kStep3Filter1 : kStep3Filter2;
        std::vector<std::string> kept;
        for (const auto& p : phrases) {
          if (ann.FilterPhrase(s, p, rule, &st.warnings)) kept.push_back(p);
        }
        phrases = std::move(kept);
        *count = phrases.size();
      };
      if (config.step3_order == Step3Order::kDedupThenFilter) {
        dedup();
        filter(FilterRule::kUserLinked, &st.n_after_filter1);
        filter(FilterRule::kExplicitReference, &st.n_after_filter2);
      } else {
        filter(FilterRule::kUserLinked, &st.n_after_filter1);
        filter(FilterRule::kExplicitReference, &st.n_after_filter2);
        dedup();
      }

      step = kStep4;
      for (const auto& p : phrases) {
        if (auto item = ann.AnnotateInformation(s, p, &st.warnings)) {
          st.items.push_back(std::move(*item));
        }
      }
    } catch (const std::exception& e) {
      st.items.clear();
      st.failure = MakeFailure(s, step, e);
    }
  });

  // Assemble outputs in sample order.
  PipelineResult result;
  result.records = records;
  std::size_t si = 0;
  std::size_t n_judged_leak = leak_idx.size(), n_corrected = 0,
              n_final_leak = 0, n_phrases = 0, n_extracted = 0,
              n_after_dedup = 0, n_after_f1 = 0, n_after_f2 = 0;
  Warnings warnings = std::move(global_warnings);
  for (auto& rec : result.records) {
    for (auto& turn : rec.turns) {
      auto& st = state[si];
      const auto& s = samples[si];
      ++si;
      for (const auto& msg : st.warnings) {
        warnings.push_back(SampleTag(s) + " " + msg);
      }
      if (st.failure) failures.push_back(*st.failure);
      n_extracted += st.n_extracted;
      n_after_dedup += st.n_after_dedup;
      n_after_f1 += st.n_after_filter1;
      n_after_f2 += st.n_after_filter2;
      const bool judged = st.judgment && st.judgment->judgment;
      if (judged && st.items.empty() && !st.failure) ++n_corrected;
      turn.privacy = st.items;
      if (turn.leaks()) ++n_final_leak;
      n_phrases += turn.privacy.size();
    }
  }
  std::stable_sort(failures.begin(), failures.end(),
                   [](const SampleFailure& a, const SampleFailure& b) {
                     return std::tie(a.dialogue_id, a.turn_index) <
                            std::tie(b.dialogue_id, b.turn_index);
                   });

  Json digest_config = Json::object();
  digest_config["pipeline"] = config.ToJson(false);
  digest_config["model"] = client.options().model;
  const Json provenance = Provenance(digest_config);

  Json counts = Json::object();
  counts["samples"] = n;
  counts["judged_leak"] = n_judged_leak;
  counts["category_samples"] = cat_idx.size();
  counts["categories_extracted"] = n_categories_extracted;
  counts["categories_final"] = categories.entries.size();
  counts["phrases_extracted"] = n_extracted;
  counts["phrases_after_dedup"] = n_after_dedup;
  counts["phrases_after_filter1"] = n_after_f1;
  counts["phrases_after_filter2"] = n_after_f2;
  counts["phrases_annotated"] = n_phrases;
  counts["corrected_to_nonleak"] = n_corrected;
  counts["final_leak"] = n_final_leak;
  counts["final_nonleak"] = n - n_final_leak;

  Json failure_list = Json::array();
  for (const auto& f : failures) {
    Json fj = Json::object();
    fj["id"] = f.dialogue_id;
    fj["turn"] = f.turn_index;
    fj["step"] = f.step;
    fj["error"] = f.error;
    fj["backend"] = f.backend;
    failure_list.push_back(std::move(fj));
  }

  Json rounds = Json::array();
  for (const auto& r : categories.provenance) {
    Json rj = Json::object();
    rj["run"] = r.run;
    rj["round"] = r.round;
    rj["before"] = r.before;
    rj["after"] = r.after;
    rounds.push_back(std::move(rj));
  }

  Json report = Json::object();
  report["provenance"] = provenance;
  report["config"] = digest_config;
  report["counts"] = counts;
  report["dedup_rounds"] = rounds;
  report["hit_iteration_cap"] = categories.hit_iteration_cap;
  report["warning_count"] = warnings.size();
  report["warnings"] = warnings;
  report["failures"] = failure_list;
  report["ledger"] = client.ledger().Report(n).ToJson();

  Json cat_list = Json::array();
  for (const auto& e : categories.entries) {
    Json ej = Json::object();
    ej["name"] = e.name;
    ej["examples"] = e.examples;
    cat_list.push_back(std::move(ej));
  }
  Json cat_file = Json::object();
  cat_file["provenance"] = provenance;
  cat_file["categories"] = cat_list;
  cat_file["rounds"] = rounds;
  cat_file["hit_iteration_cap"] = categories.hit_iteration_cap;

  result.categories = std::move(categories);
  result.report = std::move(report);
  result.category_file = std::move(cat_file);
  result.failures = std::move(failures);
  return result;
}

}  // namespace privdet

#pragma once

// Four-step annotation pipeline: leakage classification, category extraction
// with block-wise iterative deduplication, phrase extraction with dedup and
// two filtering rules, and information annotation.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "privdet/corpus.h"
#include "privdet/llmclient.h"
#include "privdet/prompts.h"
#include "privdet/textmetrics.h"

namespace privdet {

enum class Step3Order { kDedupThenFilter, kFilterThenDedup };
Step3Order ParseStep3Order(std::string_view name);
const char* Step3OrderName(Step3Order order);

struct PipelineConfig {
  Lang lang = Lang::kEnglish;
  double category_sample_fraction = 0.1;
  int dedup_block_size = 50;
  int extraction_block_size = 40;
  int max_dedup_iterations = 20;
  int parallelism = 1;
  std::uint64_t seed = 0;
  // Prior dialogue turns sent as the system message, oldest dropped first.
  // 0 disables context.
  std::size_t context_token_budget = 2048;
  std::size_t max_examples_per_category = 5;
  Step3Order step3_order = Step3Order::kDedupThenFilter;

  // Throws ConfigError: fraction in (0,1], block sizes >= 2, iterations >= 1.
  void Validate() const;
  // Unknown keys are rejected; missing keys keep defaults.
  static PipelineConfig FromJson(const Json& j);
  static PipelineConfig FromJson(const Json& j, PipelineConfig base);
  // parallelism is left out when include_parallelism is false so digests do
  // not depend on it.
  Json ToJson(bool include_parallelism = true) const;
};

struct LeakJudgment {
  std::string reason;
  bool judgment = false;
};

struct CategoryEntry {
  std::string name;
  std::vector<std::string> examples;
};

struct DedupRound {
  int run = 0;  // 1, 2; 0 for the final global pass
  int round = 0;
  std::size_t before = 0;
  std::size_t after = 0;
};

struct CategorySet {
  std::vector<CategoryEntry> entries;
  std::vector<DedupRound> provenance;
  bool hit_iteration_cap = false;

  std::vector<std::string> Names() const;
};

enum class FilterRule { kUserLinked, kExplicitReference };

using Warnings = std::vector<std::string>;

// Phrase -> category in first-seen order.
using PhraseCategories = std::vector<std::pair<std::string, std::string>>;

// Single-sample operations. Backend failures propagate as BackendError;
// unparseable model output is handled per operation as documented.
class Annotator {
 public:
  Annotator(const TemplateRegistry& templates, ChatClient& client,
            PipelineConfig config);

  // One re-ask on unparseable output, then DataError.
  LeakJudgment ClassifyLeakage(const QuerySample& sample, Warnings* w);

  // Category -> phrases. Phrases not found verbatim in the query are dropped.
  std::map<std::string, std::vector<std::string>> ExtractSampleCategories(
      const QuerySample& sample, Warnings* w);

  // Surviving names in input order. Unparseable output or an empty result
  // leaves the block unchanged.
  std::vector<std::string> DedupBlock(const std::vector<CategoryEntry>& block,
                                      Warnings* w);

  // Two seeded shuffle-partition-dedup loops, their union, then one global
  // pass.
  CategorySet DedupCategories(const std::vector<CategoryEntry>& entries,
                              Warnings* w);

  // One call per block of extraction_block_size categories.
  PhraseCategories ExtractPhrases(const QuerySample& sample,
                                  const std::vector<std::string>& categories,
                                  Warnings* w);

  // Result is a subset of `phrases` in input order.
  std::vector<std::string> DedupPhrases(const QuerySample& sample,
                                        const std::vector<std::string>& phrases,
                                        Warnings* w);

  // Unparseable after one re-ask: the phrase is kept.
  bool FilterPhrase(const QuerySample& sample, const std::string& phrase,
                    FilterRule rule, Warnings* w);

  // Unusable after one re-ask: nullopt.
  std::optional<PrivacyItem> AnnotateInformation(const QuerySample& sample,
                                                 const std::string& phrase,
                                                 Warnings* w);

  const PipelineConfig& config() const { return config_; }

 private:
  std::optional<std::string> ContextMessage(const QuerySample& sample) const;
  std::string Call(const std::string& step, std::string prompt,
                   std::optional<std::string> system);
  std::vector<std::string> DedupLoop(std::vector<CategoryEntry> entries,
                                     int run, std::uint64_t seed,
                                     CategorySet* out, Warnings* w);

  const TemplateRegistry& templates_;
  ChatClient& client_;
  PipelineConfig config_;
};

struct SampleFailure {
  std::string dialogue_id;
  int turn_index = 0;
  std::string step;
  std::string error;
  bool backend = false;
};

struct PipelineResult {
  std::vector<DialogueRecord> records;
  CategorySet categories;
  Json report;         // counts, warnings, failures, ledger
  Json category_file;  // names, examples, round log
  std::vector<SampleFailure> failures;
};

// Runs all four steps. Existing privacy lists in `records` are replaced.
// Never aborts on a single sample; failures are listed in the result.
PipelineResult RunPipeline(const std::vector<DialogueRecord>& records,
                           const TemplateRegistry& templates,
                           ChatClient& client, const PipelineConfig& config);

// Inline JSON list as printed in the prompts: ["a", "b"].
std::string InlineJsonList(const std::vector<std::string>& items);

}  // namespace privdet

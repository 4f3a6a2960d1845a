#pragma once

// Tuning-free baselines: zero-shot generation and in-context learning for
// the leakage, phrase, and information tasks.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "privdet/corpus.h"
#include "privdet/evaluation.h"
#include "privdet/llmclient.h"
#include "privdet/prompts.h"

namespace privdet {

enum class BaselineMethod { kZeroShot, kIcl };
BaselineMethod ParseBaselineMethod(std::string_view name);  // "zg" | "icl"
const char* BaselineMethodName(BaselineMethod method);

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::kZeroShot;
  BaselineTask task = BaselineTask::kLeakage;
  Lang lang = Lang::kEnglish;
  int icl_k = 5;
  std::uint64_t seed = 0;
  int parallelism = 1;
  // Prior turns as a system message; templates only take the query.
  bool include_context = false;
  std::size_t context_token_budget = 2048;

  void Validate() const;
  Json ToJson(bool include_parallelism = true) const;
};

// Seeded selection of k samples holding at least one leak and one non-leak
// sample, in train order. Throws DataError if a class is missing or
// |train| < k, ConfigError if k < 2.
std::vector<QuerySample> SelectIclExamples(const std::vector<QuerySample>& train,
                                           int k, std::uint64_t seed);
// Fixed-example mode: the listed keys, in the listed order.
std::vector<QuerySample> SelectFixedExamples(
    const std::vector<QuerySample>& train, const std::vector<SampleKey>& keys);

std::string BaselineTemplateId(BaselineMethod method, BaselineTask task);

// Rendered prompt for one sample. `examples` is ignored for zero-shot.
std::string BuildBaselinePrompt(const TemplateRegistry& templates,
                                const BaselineConfig& config,
                                const std::vector<QuerySample>& examples,
                                const QuerySample& sample);

// Model output -> prediction in the task's shape; nullopt if unusable.
std::optional<Prediction> ParseBaselineOutput(const std::string& text,
                                              BaselineTask task,
                                              const QuerySample& sample);

struct BaselineResult {
  std::vector<Prediction> predictions;  // one per sample, input order
  std::vector<std::string> warnings;
  std::vector<std::string> failures;    // backend errors
};

// Unusable output gives an empty prediction and a warning.
BaselineResult RunBaseline(const std::vector<QuerySample>& samples,
                           const std::vector<QuerySample>& examples,
                           const TemplateRegistry& templates,
                           ChatClient& client, const BaselineConfig& config);

}  // namespace privdet

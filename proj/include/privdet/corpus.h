#pragma once

// Dialogue dataset model, the record-per-line file format, flattening into
// per-query samples, and dialogue-level splitting/balancing.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace privdet {

using Json = nlohmann::ordered_json;

// Key spellings of the dataset format. "privacy information" carries an
// embedded space.
inline constexpr const char* kKeyId = "id";
inline constexpr const char* kKeyConversation = "conversation";
inline constexpr const char* kKeyUser = "user";
inline constexpr const char* kKeyAssistant = "assistant";
inline constexpr const char* kKeyPrivacy = "privacy";
inline constexpr const char* kKeyPhrase = "phrase";
inline constexpr const char* kKeyInformation = "privacy information";

// One extracted phrase and the sentence summarizing what it reveals.
struct PrivacyItem {
  std::string phrase;
  std::string information;
  Json extra = Json::object();  // unknown keys, re-emitted verbatim

  bool operator==(const PrivacyItem&) const = default;
};

struct Turn {
  std::string user;
  std::string assistant;
  std::vector<PrivacyItem> privacy;  // empty <=> non-leak
  Json extra = Json::object();

  bool leaks() const { return !privacy.empty(); }
  bool operator==(const Turn&) const = default;
};

struct DialogueRecord {
  std::string id;
  std::vector<Turn> turns;
  Json extra = Json::object();

  bool operator==(const DialogueRecord&) const = default;
};

// Evaluation unit: one user query with the dialogue text that precedes it.
struct QuerySample {
  std::string dialogue_id;
  int turn_index = 0;
  std::string query;
  std::vector<std::string> context;  // user, assistant, user, ... in order
  bool gold_leak = false;
  std::vector<std::string> gold_phrases;
  std::vector<std::string> gold_infos;  // parallel to gold_phrases

  bool operator==(const QuerySample&) const = default;
};

struct DatasetStats {
  std::size_t n_leak = 0;
  std::size_t n_nonleak = 0;
  std::size_t n_phrases = 0;
  std::optional<double> mean_phrases_per_leak;  // absent when n_leak == 0
};

struct ParsedDataset {
  std::vector<DialogueRecord> records;
  std::vector<std::string> warnings;
};

// Accepts a JSON array document or one record per line. Throws DataError
// naming the 1-based record ordinal on malformed input.
ParsedDataset ParseDataset(std::string_view text);
ParsedDataset ReadDatasetFile(const std::string& path);

// Record-per-line, compact JSON, keys in schema order followed by preserved
// unknown keys. Every line (including the last) ends with '\n'.
std::string WriteDataset(const std::vector<DialogueRecord>& records);
// Whole-array variant; an empty dataset is "[]\n".
std::string WriteDatasetArray(const std::vector<DialogueRecord>& records);
void WriteDatasetFile(const std::string& path,
                      const std::vector<DialogueRecord>& records);

Json RecordToJson(const DialogueRecord& record);
Json ItemToJson(const PrivacyItem& item);
// Parses one item object; `information_required` is false for predictions.
PrivacyItem ItemFromJson(const Json& j, bool information_required);

std::vector<QuerySample> Flatten(const std::vector<DialogueRecord>& records);

template <typename T>
struct SplitResult {
  std::vector<T> train;
  std::vector<T> test;
};

// Assigns round(ratio * #dialogues) whole dialogues to train after a seeded
// shuffle. Relative order inside each side follows the input.
SplitResult<DialogueRecord> SplitRecords(
    const std::vector<DialogueRecord>& records, double ratio,
    std::uint64_t seed);
SplitResult<QuerySample> SplitSamples(const std::vector<QuerySample>& samples,
                                      double ratio, std::uint64_t seed);
// Pre-split ingest: dialogues whose id is listed go to test, the rest to train.
SplitResult<DialogueRecord> SplitByTestIds(
    const std::vector<DialogueRecord>& records,
    const std::vector<std::string>& test_ids);

// Down-samples the majority class so the leak fraction lands within 0.02 of
// target. Never duplicates samples; output keeps input order.
std::vector<QuerySample> Balance(const std::vector<QuerySample>& train,
                                 double target_leak_fraction,
                                 std::uint64_t seed);

DatasetStats ComputeStats(const std::vector<QuerySample>& samples);

// Sample file used by `split --balance`: one flattened query per line.
Json SampleToJson(const QuerySample& sample);

}  // namespace privdet

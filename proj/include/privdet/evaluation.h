#pragma once

// Query-, phrase-, and information-level scoring of privacy detectors.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "privdet/corpus.h"
#include "privdet/textmetrics.h"

namespace privdet {

using SampleKey = std::pair<std::string, int>;  // (dialogue id, turn index)

struct Prediction {
  std::string dialogue_id;
  int turn_index = 0;
  std::optional<bool> leak;        // absent: derived from items
  std::vector<PrivacyItem> items;  // information may be empty

  SampleKey key() const { return {dialogue_id, turn_index}; }
  bool PredictedLeak() const { return leak.value_or(!items.empty()); }
  std::vector<std::string> Phrases() const;
  // Non-empty information strings, in item order.
  std::vector<std::string> Infos() const;
};

struct EvalOptions {
  Lang lang = Lang::kEnglish;
  // Strict: every gold key needs a prediction. Lenient: a missing
  // prediction counts as an empty, wrong one.
  bool strict = true;
  MatchOptions match;
};

struct PrfScore {
  std::optional<double> recall;     // absent when Q_r is empty
  std::optional<double> precision;  // absent when Q_p is empty
  std::optional<double> f1;
  std::size_t n_qr = 0;
  std::size_t n_qp = 0;
};

struct EvalReport {
  std::optional<double> accuracy;
  PrfScore phrase;
  PrfScore info;
  std::size_t n_samples = 0;
  std::size_t n_missing = 0;     // gold keys without prediction (lenient)
  std::size_t n_unmatched = 0;   // predictions without a gold key (ignored)
};

// 2RP/(R+P), 0 at R+P == 0. One undefined side counts as 0; both undefined
// gives an undefined F1.
std::optional<double> F1(std::optional<double> recall,
                         std::optional<double> precision);

// Pairs each gold sample with its prediction in sorted key order. Throws
// DataError listing missing keys in strict mode.
struct AlignedSample {
  const QuerySample* gold;
  const Prediction* pred;  // nullptr when missing (lenient)
};
std::vector<AlignedSample> Align(const std::vector<QuerySample>& golds,
                                 const std::vector<Prediction>& preds,
                                 const EvalOptions& opts,
                                 std::size_t* n_unmatched = nullptr);

double EvalLeakage(const std::vector<Prediction>& preds,
                   const std::vector<QuerySample>& golds,
                   const EvalOptions& opts);
PrfScore EvalPhrases(const std::vector<Prediction>& preds,
                     const std::vector<QuerySample>& golds,
                     const EvalOptions& opts);
PrfScore EvalInformation(const std::vector<Prediction>& preds,
                         const std::vector<QuerySample>& golds,
                         const EvalOptions& opts);
EvalReport BuildReport(const std::vector<Prediction>& preds,
                       const std::vector<QuerySample>& golds,
                       const EvalOptions& opts);

// Report document: EvalReport fields plus tool version and config digest.
Json ReportToJson(const EvalReport& report, const EvalOptions& opts);
// Fixed-layout summary: fractions with four decimals, "-" when undefined.
std::string FormatReportTable(const EvalReport& report);

// Prediction files: one object per line with "id", "turn", optional
// "judgment", and "privacy" items.
std::vector<Prediction> ParsePredictions(std::string_view text);
std::vector<Prediction> ReadPredictionsFile(const std::string& path);
Json PredictionToJson(const Prediction& p);
std::string WritePredictions(const std::vector<Prediction>& preds);

// Predictions that reproduce the gold annotations exactly.
std::vector<Prediction> PredictionsFromGold(
    const std::vector<QuerySample>& golds);

}  // namespace privdet

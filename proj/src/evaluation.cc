#include "privdet/evaluation.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "privdet/errors.h"
#include "privdet/provenance.h"

namespace privdet {
namespace {

std::string KeyString(const SampleKey& k) {
  return k.first + "#" + std::to_string(k.second);
}

double Mean(const std::vector<double>& xs) {
  double sum = 0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

double MaxRouge(const std::string& info, const std::vector<std::string>& pool,
                Lang lang) {
  double best = 0;
  for (const auto& other : pool) {
    best = std::max(best, RougeL(info, other, lang).f1);
  }
  return best;
}

Json OptionalNumber(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

std::string Cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

const char* ComponentName(RougeComponent c) {
  switch (c) {
    case RougeComponent::kPrecision:
      return "precision";
    case RougeComponent::kRecall:
      return "recall";
    case RougeComponent::kF1:
      break;
  }
  return "f1";
}

}  // namespace

std::vector<std::string> Prediction::Phrases() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.phrase);
  return out;
}

std::vector<std::string> Prediction::Infos() const {
  std::vector<std::string> out;
  for (const auto& it : items) {
    if (!it.information.empty()) out.push_back(it.information);
  }
  return out;
}

std::optional<double> F1(std::optional<double> recall,
                         std::optional<double> precision) {
  if (!recall && !precision) return std::nullopt;
  const double r = recall.value_or(0.0);
  const double p = precision.value_or(0.0);
  if (r + p == 0) return 0.0;
  return 2 * r * p / (r + p);
}

std::vector<AlignedSample> Align(const std::vector<QuerySample>& golds,
                                 const std::vector<Prediction>& preds,
                                 const EvalOptions& opts,
                                 std::size_t* n_unmatched) {
  std::map<SampleKey, const Prediction*> by_key;
  for (const auto& p : preds) {
    if (!by_key.emplace(p.key(), &p).second) {
      throw DataError("duplicate prediction for " + KeyString(p.key()));
    }
  }
  std::map<SampleKey, const QuerySample*> gold_by_key;
  for (const auto& g : golds) {
    const SampleKey k{g.dialogue_id, g.turn_index};
    if (!gold_by_key.emplace(k, &g).second) {
      throw DataError("duplicate gold sample " + KeyString(k));
    }
  }

  std::vector<AlignedSample> out;
  out.reserve(gold_by_key.size());
  std::vector<std::string> missing;
  for (const auto& [k, g] : gold_by_key) {
    auto it = by_key.find(k);
    if (it == by_key.end()) {
      missing.push_back(KeyString(k));
      out.push_back({g, nullptr});
    } else {
      out.push_back({g, it->second});
    }
  }
  if (opts.strict && !missing.empty()) {
    std::string msg = std::to_string(missing.size()) +
                      " gold sample(s) have no prediction:";
    const std::size_t shown = std::min<std::size_t>(missing.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) msg += " " + missing[i];
    if (shown < missing.size()) msg += " ...";
    throw DataError(msg);
  }
  if (n_unmatched) {
    std::size_t extra = 0;
    for (const auto& [k, p] : by_key) {
      if (!gold_by_key.count(k)) ++extra;
    }
    *n_unmatched = extra;
  }
  return out;
}

double EvalLeakage(const std::vector<Prediction>& preds,
                   const std::vector<QuerySample>& golds,
                   const EvalOptions& opts) {
  const auto aligned = Align(golds, preds, opts);
  if (aligned.empty()) throw DataError("no gold samples to evaluate");
  std::size_t correct = 0;
  for (const auto& a : aligned) {
    if (a.pred && a.pred->PredictedLeak() == a.gold->gold_leak) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(aligned.size());
}

PrfScore EvalPhrases(const std::vector<Prediction>& preds,
                     const std::vector<QuerySample>& golds,
                     const EvalOptions& opts) {
  const auto aligned = Align(golds, preds, opts);
  std::vector<double> recalls, precisions;
  for (const auto& a : aligned) {
    const auto& gold = a.gold->gold_phrases;
    const std::vector<std::string> pred =
        a.pred ? a.pred->Phrases() : std::vector<std::string>{};
    if (!gold.empty()) {
      recalls.push_back(
          static_cast<double>(MatchCount(gold, pred, opts.lang, opts.match)) /
          static_cast<double>(gold.size()));
    }
    if (!pred.empty()) {
      precisions.push_back(
          static_cast<double>(MatchCount(pred, gold, opts.lang, opts.match)) /
          static_cast<double>(pred.size()));
    }
  }
  PrfScore s;
  s.n_qr = recalls.size();
  s.n_qp = precisions.size();
  if (!recalls.empty()) s.recall = Mean(recalls);
  if (!precisions.empty()) s.precision = Mean(precisions);
  s.f1 = F1(s.recall, s.precision);
  return s;
}

PrfScore EvalInformation(const std::vector<Prediction>& preds,
                         const std::vector<QuerySample>& golds,
                         const EvalOptions& opts) {
  const auto aligned = Align(golds, preds, opts);
  std::vector<double> recalls, precisions;
  for (const auto& a : aligned) {
    const auto& gold = a.gold->gold_infos;
    const std::vector<std::string> pred =
        a.pred ? a.pred->Infos() : std::vector<std::string>{};
    if (!a.gold->gold_phrases.empty()) {
      std::vector<double> per_info;
      for (const auto& info : gold) {
        per_info.push_back(MaxRouge(info, pred, opts.lang));
      }
      recalls.push_back(per_info.empty() ? 0.0 : Mean(per_info));
    }
    if (!pred.empty()) {
      std::vector<double> per_info;
      for (const auto& info : pred) {
        per_info.push_back(MaxRouge(info, gold, opts.lang));
      }
      precisions.push_back(Mean(per_info));
    }
  }
  PrfScore s;
  s.n_qr = recalls.size();
  s.n_qp = precisions.size();
  if (!recalls.empty()) s.recall = Mean(recalls);
  if (!precisions.empty()) s.precision = Mean(precisions);
  s.f1 = F1(s.recall, s.precision);
  return s;
}

EvalReport BuildReport(const std::vector<Prediction>& preds,
                       const std::vector<QuerySample>& golds,
                       const EvalOptions& opts) {
  EvalReport r;
  std::size_t unmatched = 0;
  const auto aligned = Align(golds, preds, opts, &unmatched);
  r.n_samples = aligned.size();
  r.n_unmatched = unmatched;
  for (const auto& a : aligned) {
    if (!a.pred) ++r.n_missing;
  }
  if (!aligned.empty()) r.accuracy = EvalLeakage(preds, golds, opts);
  r.phrase = EvalPhrases(preds, golds, opts);
  r.info = EvalInformation(preds, golds, opts);
  return r;
}

Json ReportToJson(const EvalReport& report, const EvalOptions& opts) {
  Json config = Json::object();
  config["lang"] = LangName(opts.lang);
  config["strict"] = opts.strict;
  config["rouge_component"] = ComponentName(opts.match.component);
  config["match_threshold"] = opts.match.threshold;
  config["one_to_one"] = opts.match.one_to_one;

  Json j = Json::object();
  j["provenance"] = Provenance(config);
  j["config"] = config;
  j["accuracy"] = OptionalNumber(report.accuracy);
  j["r_p"] = OptionalNumber(report.phrase.recall);
  j["p_p"] = OptionalNumber(report.phrase.precision);
  j["f1_p"] = OptionalNumber(report.phrase.f1);
  j["r_i"] = OptionalNumber(report.info.recall);
  j["p_i"] = OptionalNumber(report.info.precision);
  j["f1_i"] = OptionalNumber(report.info.f1);
  j["n_qr"] = report.phrase.n_qr;
  j["n_qp"] = report.phrase.n_qp;
  j["n_qp_info"] = report.info.n_qp;
  j["n_samples"] = report.n_samples;
  j["n_missing"] = report.n_missing;
  j["n_unmatched_predictions"] = report.n_unmatched;
  return j;
}

std::string FormatReportTable(const EvalReport& r) {
  std::ostringstream os;
  auto row = [&os](const char* name, const std::string& value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-10s %s\n", name, value.c_str());
    os << buf;
  };
  row("Accuracy", Cell(r.accuracy));
  row("R_P", Cell(r.phrase.recall));
  row("P_P", Cell(r.phrase.precision));
  row("F1_P", Cell(r.phrase.f1));
  row("R_I", Cell(r.info.recall));
  row("P_I", Cell(r.info.precision));
  row("F1_I", Cell(r.info.f1));
  row("|Q_r|", std::to_string(r.phrase.n_qr));
  row("|Q_p|", std::to_string(r.phrase.n_qp));
  row("samples", std::to_string(r.n_samples));
  if (r.n_missing > 0) row("missing", std::to_string(r.n_missing));
  return os.str();
}

std::vector<Prediction> ParsePredictions(std::string_view text) {
  std::vector<Prediction> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "prediction line " + std::to_string(line_no);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": not an object");
    Prediction p;
    auto id = j.find(kKeyId);
    if (id == j.end() || !id->is_string()) {
      throw DataError(where + ": missing string \"id\"");
    }
    p.dialogue_id = id->get<std::string>();
    auto turn = j.find("turn");
    if (turn == j.end() || !turn->is_number_integer()) {
      throw DataError(where + ": missing integer \"turn\"");
    }
    p.turn_index = turn->get<int>();
    auto judgment = j.find("judgment");
    if (judgment != j.end() && !judgment->is_null()) {
      if (!judgment->is_boolean()) {
        throw DataError(where + ": \"judgment\" is not a boolean");
      }
      p.leak = judgment->get<bool>();
    }
    auto priv = j.find(kKeyPrivacy);
    if (priv != j.end() && !priv->is_null()) {
      if (!priv->is_array()) {
        throw DataError(where + ": \"privacy\" is not an array");
      }
      for (const auto& item : *priv) {
        try {
          p.items.push_back(ItemFromJson(item, false));
        } catch (const DataError& e) {
          throw DataError(where + ": " + e.what());
        }
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Prediction> ReadPredictionsFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open prediction file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ParsePredictions(ss.str());
}

Json PredictionToJson(const Prediction& p) {
  Json j = Json::object();
  j[kKeyId] = p.dialogue_id;
  j["turn"] = p.turn_index;
  if (p.leak) j["judgment"] = *p.leak;
  Json priv = Json::array();
  for (const auto& item : p.items) priv.push_back(ItemToJson(item));
  j[kKeyPrivacy] = std::move(priv);
  return j;
}

std::string WritePredictions(const std::vector<Prediction>& preds) {
  std::string out;
  for (const auto& p : preds) {
    out += PredictionToJson(p).dump();
    out += '\n';
  }
  return out;
}

std::vector<Prediction> PredictionsFromGold(
    const std::vector<QuerySample>& golds) {
  std::vector<Prediction> out;
  out.reserve(golds.size());
  for (const auto& g : golds) {
    Prediction p;
    p.dialogue_id = g.dialogue_id;
    p.turn_index = g.turn_index;
    p.leak = g.gold_leak;
    for (std::size_t k = 0; k < g.gold_phrases.size(); ++k) {
      p.items.push_back({g.gold_phrases[k], g.gold_infos[k], Json::object()});
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace privdet

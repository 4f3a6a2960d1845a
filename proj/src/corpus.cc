#include "privdet/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "privdet/errors.h"
#include "privdet/random.h"

namespace privdet {
namespace {

std::string RequireString(const Json& obj, const char* key,
                          const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw DataError(where + ": missing \"" + key + "\"");
  }
  if (!it->is_string()) {
    throw DataError(where + ": \"" + key + "\" is not a string");
  }
  return it->get<std::string>();
}

Json ExtraFields(const Json& obj, std::initializer_list<const char*> known) {
  Json extra = Json::object();
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool is_known = false;
    for (const char* k : known) {
      if (it.key() == k) is_known = true;
    }
    if (!is_known) extra[it.key()] = it.value();
  }
  return extra;
}

void AppendExtra(Json& out, const Json& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) {
    out[it.key()] = it.value();
  }
}

DialogueRecord RecordFromJson(const Json& j, std::size_t ordinal,
                              std::vector<std::string>& warnings) {
  const std::string where = "record " + std::to_string(ordinal);
  if (!j.is_object()) throw DataError(where + ": not an object");

  DialogueRecord rec;
  rec.id = RequireString(j, kKeyId, where);
  if (rec.id.empty()) throw DataError(where + ": empty \"id\"");

  auto conv = j.find(kKeyConversation);
  if (conv == j.end() || !conv->is_array()) {
    throw DataError(where + ": missing or non-array \"conversation\"");
  }
  if (conv->empty()) throw DataError(where + ": empty \"conversation\"");

  for (std::size_t t = 0; t < conv->size(); ++t) {
    const Json& tj = (*conv)[t];
    const std::string twhere = where + " turn " + std::to_string(t);
    if (!tj.is_object()) throw DataError(twhere + ": not an object");
    Turn turn;
    turn.user = RequireString(tj, kKeyUser, twhere);
    if (turn.user.empty()) throw DataError(twhere + ": empty \"user\"");
    turn.assistant = RequireString(tj, kKeyAssistant, twhere);
    auto priv = tj.find(kKeyPrivacy);
    if (priv != tj.end()) {
      if (!priv->is_array()) {
        throw DataError(twhere + ": \"privacy\" is not an array");
      }
      for (std::size_t k = 0; k < priv->size(); ++k) {
        try {
          turn.privacy.push_back(ItemFromJson((*priv)[k], true));
        } catch (const DataError& e) {
          throw DataError(twhere + " item " + std::to_string(k) + ": " +
                          e.what());
        }
        const auto& phrase = turn.privacy.back().phrase;
        if (turn.user.find(phrase) == std::string::npos) {
          warnings.push_back(twhere + ": phrase \"" + phrase +
                             "\" is not a substring of the user text");
        }
      }
    }
    turn.extra = ExtraFields(tj, {kKeyUser, kKeyAssistant, kKeyPrivacy});
    rec.turns.push_back(std::move(turn));
  }
  rec.extra = ExtraFields(j, {kKeyId, kKeyConversation});
  return rec;
}

std::string_view TrimView(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

// Groups dialogue ids in first-appearance order and picks the train set.
std::unordered_set<std::string> PickTrainDialogues(
    std::vector<std::string> ids, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw DataError("split ratio must be in (0, 1)");
  }
  if (ids.empty()) throw DataError("cannot split an empty dataset");
  Rng rng(seed);
  rng.Shuffle(std::span<std::string>(ids));
  const auto n_train = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(ids.size())));
  return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train)};
}

}  // namespace

PrivacyItem ItemFromJson(const Json& j, bool information_required) {
  if (!j.is_object()) throw DataError("privacy item is not an object");
  PrivacyItem item;
  item.phrase = RequireString(j, kKeyPhrase, "privacy item");
  if (item.phrase.empty()) throw DataError("privacy item has empty phrase");
  auto info = j.find(kKeyInformation);
  if (info != j.end() && !info->is_null()) {
    if (!info->is_string()) {
      throw DataError("\"privacy information\" is not a string");
    }
    item.information = info->get<std::string>();
  }
  if (information_required && item.information.empty()) {
    throw DataError("missing or empty \"privacy information\"");
  }
  item.extra = ExtraFields(j, {kKeyPhrase, kKeyInformation});
  return item;
}

Json ItemToJson(const PrivacyItem& item) {
  Json j = Json::object();
  j[kKeyPhrase] = item.phrase;
  j[kKeyInformation] = item.information;
  AppendExtra(j, item.extra);
  return j;
}

Json RecordToJson(const DialogueRecord& record) {
  Json j = Json::object();
  j[kKeyId] = record.id;
  Json conv = Json::array();
  for (const auto& turn : record.turns) {
    Json tj = Json::object();
    tj[kKeyUser] = turn.user;
    tj[kKeyAssistant] = turn.assistant;
    Json priv = Json::array();
    for (const auto& item : turn.privacy) priv.push_back(ItemToJson(item));
    tj[kKeyPrivacy] = std::move(priv);
    AppendExtra(tj, turn.extra);
    conv.push_back(std::move(tj));
  }
  j[kKeyConversation] = std::move(conv);
  AppendExtra(j, record.extra);
  return j;
}

ParsedDataset ParseDataset(std::string_view text) {
  ParsedDataset out;
  std::unordered_set<std::string> seen;
  auto add = [&](const Json& j, std::size_t ordinal) {
    DialogueRecord rec = RecordFromJson(j, ordinal, out.warnings);
    if (!seen.insert(rec.id).second) {
      throw DataError("record " + std::to_string(ordinal) +
                      ": duplicate id \"" + rec.id + "\"");
    }
    out.records.push_back(std::move(rec));
  };

  const std::string_view body = TrimView(text);
  if (body.empty()) return out;

  if (body.front() == '[') {
    Json doc;
    try {
      doc = Json::parse(body);
    } catch (const Json::exception& e) {
      throw DataError(std::string("dataset array is not valid JSON: ") +
                      e.what());
    }
    for (std::size_t i = 0; i < doc.size(); ++i) add(doc[i], i + 1);
    return out;
  }

  std::size_t ordinal = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = TrimView(text.substr(pos, nl - pos));
    ++line_no;
    pos = nl + 1;
    if (line.empty()) continue;
    ++ordinal;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw DataError("record " + std::to_string(ordinal) + " (line " +
                      std::to_string(line_no) + "): invalid JSON: " +
                      e.what());
    }
    add(j, ordinal);
  }
  return out;
}

ParsedDataset ReadDatasetFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ParseDataset(ss.str());
}

std::string WriteDataset(const std::vector<DialogueRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += RecordToJson(r).dump();
    out += '\n';
  }
  return out;
}

std::string WriteDatasetArray(const std::vector<DialogueRecord>& records) {
  Json arr = Json::array();
  for (const auto& r : records) arr.push_back(RecordToJson(r));
  return arr.dump() + "\n";
}

void WriteDatasetFile(const std::string& path,
                      const std::vector<DialogueRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset file: " + path);
  out << WriteDataset(records);
}

std::vector<QuerySample> Flatten(const std::vector<DialogueRecord>& records) {
  std::vector<QuerySample> samples;
  for (const auto& rec : records) {
    std::vector<std::string> context;
    for (std::size_t t = 0; t < rec.turns.size(); ++t) {
      const Turn& turn = rec.turns[t];
      QuerySample s;
      s.dialogue_id = rec.id;
      s.turn_index = static_cast<int>(t);
      s.query = turn.user;
      s.context = context;
      s.gold_leak = turn.leaks();
      for (const auto& item : turn.privacy) {
        s.gold_phrases.push_back(item.phrase);
        s.gold_infos.push_back(item.information);
      }
      samples.push_back(std::move(s));
      context.push_back(turn.user);
      context.push_back(turn.assistant);
    }
  }
  return samples;
}

SplitResult<DialogueRecord> SplitRecords(
    const std::vector<DialogueRecord>& records, double ratio,
    std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.id);
  const auto train_ids = PickTrainDialogues(std::move(ids), ratio, seed);
  SplitResult<DialogueRecord> out;
  for (const auto& r : records) {
    (train_ids.count(r.id) ? out.train : out.test).push_back(r);
  }
  return out;
}

SplitResult<QuerySample> SplitSamples(const std::vector<QuerySample>& samples,
                                      double ratio, std::uint64_t seed) {
  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  for (const auto& s : samples) {
    if (seen.insert(s.dialogue_id).second) ids.push_back(s.dialogue_id);
  }
  const auto train_ids = PickTrainDialogues(std::move(ids), ratio, seed);
  SplitResult<QuerySample> out;
  for (const auto& s : samples) {
    (train_ids.count(s.dialogue_id) ? out.train : out.test).push_back(s);
  }
  return out;
}

SplitResult<DialogueRecord> SplitByTestIds(
    const std::vector<DialogueRecord>& records,
    const std::vector<std::string>& test_ids) {
  if (records.empty()) throw DataError("cannot split an empty dataset");
  const std::unordered_set<std::string> test(test_ids.begin(), test_ids.end());
  SplitResult<DialogueRecord> out;
  for (const auto& r : records) {
    (test.count(r.id) ? out.test : out.train).push_back(r);
  }
  return out;
}

std::vector<QuerySample> Balance(const std::vector<QuerySample>& train,
                                 double target, std::uint64_t seed) {
  if (!(target > 0.0 && target < 1.0)) {
    throw DataError("balance target must be in (0, 1)");
  }
  std::vector<std::size_t> leak, nonleak;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (train[i].gold_leak ? leak : nonleak).push_back(i);
  }
  if (leak.empty() || nonleak.empty()) {
    throw DataError("balance needs both leak and non-leak samples");
  }
  const double n_leak = static_cast<double>(leak.size());
  const double n_non = static_cast<double>(nonleak.size());
  const double fraction = n_leak / (n_leak + n_non);
  if (std::abs(fraction - target) <= 0.02) return train;

  std::vector<std::size_t>* majority;
  std::size_t keep;
  if (fraction < target) {
    majority = &nonleak;
    keep = static_cast<std::size_t>(std::llround(n_leak * (1 - target) / target));
  } else {
    majority = &leak;
    keep = static_cast<std::size_t>(std::llround(n_non * target / (1 - target)));
  }
  keep = std::max<std::size_t>(1, std::min(keep, majority->size()));

  Rng rng(seed);
  rng.Shuffle(std::span<std::size_t>(*majority));
  majority->resize(keep);

  std::vector<bool> selected(train.size(), false);
  for (auto i : leak) selected[i] = true;
  for (auto i : nonleak) selected[i] = true;
  std::vector<QuerySample> out;
  out.reserve(leak.size() + nonleak.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (selected[i]) out.push_back(train[i]);
  }
  return out;
}

DatasetStats ComputeStats(const std::vector<QuerySample>& samples) {
  DatasetStats st;
  for (const auto& s : samples) {
    if (s.gold_leak) {
      ++st.n_leak;
      st.n_phrases += s.gold_phrases.size();
    } else {
      ++st.n_nonleak;
    }
  }
  if (st.n_leak > 0) {
    st.mean_phrases_per_leak =
        static_cast<double>(st.n_phrases) / static_cast<double>(st.n_leak);
  }
  return st;
}

Json SampleToJson(const QuerySample& s) {
  Json j = Json::object();
  j[kKeyId] = s.dialogue_id;
  j["turn"] = s.turn_index;
  j["context"] = s.context;
  j[kKeyUser] = s.query;
  Json priv = Json::array();
  for (std::size_t k = 0; k < s.gold_phrases.size(); ++k) {
    Json item = Json::object();
    item[kKeyPhrase] = s.gold_phrases[k];
    item[kKeyInformation] = s.gold_infos[k];
    priv.push_back(std::move(item));
  }
  j[kKeyPrivacy] = std::move(priv);
  return j;
}

}  // namespace privdet

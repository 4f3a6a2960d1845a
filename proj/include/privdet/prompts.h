#pragma once

// Bilingual prompt templates loaded from a data directory:
//   <dir>/manifest.json          {"templates": [{"id", "placeholders"}]}
//   <dir>/<lang>/<id>.txt        template body, <|NAME|> markers
// One trailing newline of each file is not part of the body.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "privdet/corpus.h"
#include "privdet/textmetrics.h"

namespace privdet {

struct PromptTemplate {
  std::string id;
  Lang lang = Lang::kEnglish;
  std::string body;
  std::set<std::string> placeholders;
};

// Every id the pipeline and baselines rely on.
const std::vector<std::string>& RequiredTemplateIds();

// Marker names (<|NAME|>) occurring in `body`.
std::set<std::string> ScanPlaceholders(const std::string& body);

enum class BaselineTask { kLeakage, kPhrase, kInformation };
BaselineTask ParseBaselineTask(std::string_view name);
const char* BaselineTaskName(BaselineTask task);

class TemplateRegistry {
 public:
  using Bindings = std::map<std::string, std::string>;

  // Throws ConfigError naming missing ids/files or placeholder mismatches.
  static TemplateRegistry Load(const std::string& directory);

  const PromptTemplate& Get(const std::string& id, Lang lang) const;
  bool Has(const std::string& id, Lang lang) const;
  std::size_t size() const { return templates_.size(); }
  std::vector<std::string> Ids() const;

  // Substitutes every marker in one pass. Bindings must cover exactly the
  // template's placeholders; otherwise ConfigError lists the offending names.
  std::string Render(const std::string& id, Lang lang,
                     const Bindings& bindings) const;

 private:
  std::map<std::pair<std::string, Lang>, PromptTemplate> templates_;
};

// One in-context example in the answer shape the task asks the model for:
// the query line, then a fenced JSON answer built from the gold labels.
std::string FormatIclCase(const QuerySample& sample, BaselineTask task,
                          Lang lang);
std::string FormatIclCases(const std::vector<QuerySample>& samples,
                           BaselineTask task, Lang lang);

// Pretty JSON (4-space indent, UTF-8 kept) as used inside prompts.
std::string PromptJson(const Json& value);

}  // namespace privdet

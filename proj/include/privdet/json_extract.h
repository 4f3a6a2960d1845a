#pragma once

// Pulls the structured answer out of free-form model output.

#include <string>
#include <string_view>

#include "privdet/corpus.h"
#include "privdet/errors.h"

namespace privdet {

class JsonExtractError : public DataError {
 public:
  explicit JsonExtractError(std::string raw)
      : DataError("no parseable JSON in model output"), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// Returns the last parseable fenced block (```json preferred over unlabeled
// fences; a closing ``` or ''' both end a block). Without a usable fence,
// falls back to the longest {...} or [...] span running to the end of the
// text. Trailing commas are tolerated.
Json ExtractJsonBlock(std::string_view text);

}  // namespace privdet

#pragma once

// Tokenization, LCS-based Rouge-L, and the fuzzy phrase-matching predicate.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace privdet {

enum class Lang { kEnglish, kChinese };

// "english" / "chinese" (also "en" / "zh"). Throws ConfigError otherwise.
Lang ParseLang(std::string_view name);
const char* LangName(Lang lang);

struct TokenSeq {
  std::vector<std::string> tokens;
  Lang lang = Lang::kEnglish;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

// English: ASCII-lowercased, split at whitespace and punctuation; non-ASCII
// letters stay inside words. Chinese: every non-ASCII code point is its own
// token while ASCII letter/digit runs stay whole. Both drop ASCII and common
// Unicode punctuation (general punctuation, CJK symbols, fullwidth forms).
TokenSeq Tokenize(std::string_view text, Lang lang);

std::size_t LcsLength(const std::vector<std::string>& a,
                      const std::vector<std::string>& b);
inline std::size_t LcsLength(const TokenSeq& a, const TokenSeq& b) {
  return LcsLength(a.tokens, b.tokens);
}

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Which Rouge-L component the phrase matcher thresholds.
enum class RougeComponent { kF1, kPrecision, kRecall };
RougeComponent ParseRougeComponent(std::string_view name);

// precision = L / |candidate|, recall = L / |reference|. If either side has
// no tokens every component is 0.
RougeScore RougeL(std::string_view candidate, std::string_view reference,
                  Lang lang);

struct MatchOptions {
  RougeComponent component = RougeComponent::kF1;
  double threshold = 0.5;  // strict: score must exceed it
  bool one_to_one = false;  // MatchCount uses maximum bipartite matching
};

// Whitespace trim plus ASCII case folding.
std::string NormalizePhrase(std::string_view s);

// Equal after normalization, either one contains the other, or the Rouge-L
// component exceeds the threshold. Empty strings never match.
bool PhrasesMatch(std::string_view a, std::string_view b, Lang lang,
                  const MatchOptions& opts = {});

// Number of `queries` elements matching at least one `keys` element (or, in
// one-to-one mode, the size of a maximum matching).
std::size_t MatchCount(const std::vector<std::string>& queries,
                       const std::vector<std::string>& keys, Lang lang,
                       const MatchOptions& opts = {});

}  // namespace privdet

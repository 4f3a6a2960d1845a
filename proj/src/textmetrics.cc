#include "privdet/textmetrics.h"

#include <algorithm>
#include <cctype>

#include "privdet/errors.h"

namespace privdet {
namespace {

// Decodes one UTF-8 code point at s[i], advancing i. Invalid bytes decode as
// themselves so tokenization never fails.
char32_t NextCodePoint(std::string_view s, std::size_t& i) {
  const auto c = static_cast<unsigned char>(s[i]);
  int len = 1;
  char32_t cp = c;
  if (c >= 0xF0 && c < 0xF8) {
    len = 4;
    cp = c & 0x07;
  } else if (c >= 0xE0) {
    len = 3;
    cp = c & 0x0F;
  } else if (c >= 0xC0) {
    len = 2;
    cp = c & 0x1F;
  }
  if (len > 1 && i + len <= s.size()) {
    for (int k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) {
        len = 1;
        cp = c;
        break;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
  } else {
    len = 1;
    cp = c;
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

bool IsSeparator(char32_t cp) {
  if (cp < 0x80) return !std::isalnum(static_cast<int>(cp));
  if (cp == 0x00A0) return true;                    // nbsp
  if (cp >= 0x2000 && cp <= 0x206F) return true;    // general punctuation
  if (cp >= 0x3000 && cp <= 0x303F) return true;    // CJK symbols
  if (cp >= 0xFF01 && cp <= 0xFF0F) return true;    // fullwidth punctuation
  if (cp >= 0xFF1A && cp <= 0xFF20) return true;
  if (cp >= 0xFF3B && cp <= 0xFF40) return true;
  if (cp >= 0xFF5B && cp <= 0xFF65) return true;
  if (cp == 0x00B7 || cp == 0x00AB || cp == 0x00BB) return true;
  return false;
}

std::string_view Trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

double Component(const RougeScore& s, RougeComponent c) {
  switch (c) {
    case RougeComponent::kPrecision:
      return s.precision;
    case RougeComponent::kRecall:
      return s.recall;
    case RougeComponent::kF1:
      break;
  }
  return s.f1;
}

// Kuhn's augmenting-path matching over the fuzzy-match relation.
std::size_t MaxBipartiteMatching(const std::vector<std::vector<bool>>& adj,
                                 std::size_t n_keys) {
  std::vector<int> owner(n_keys, -1);
  std::size_t matched = 0;
  for (std::size_t q = 0; q < adj.size(); ++q) {
    std::vector<bool> visited(n_keys, false);
    auto augment = [&](auto&& self, std::size_t u) -> bool {
      for (std::size_t k = 0; k < n_keys; ++k) {
        if (!adj[u][k] || visited[k]) continue;
        visited[k] = true;
        if (owner[k] < 0 ||
            self(self, static_cast<std::size_t>(owner[k]))) {
          owner[k] = static_cast<int>(u);
          return true;
        }
      }
      return false;
    };
    if (augment(augment, q)) ++matched;
  }
  return matched;
}

}  // namespace

Lang ParseLang(std::string_view name) {
  if (name == "english" || name == "en") return Lang::kEnglish;
  if (name == "chinese" || name == "zh") return Lang::kChinese;
  throw ConfigError("unknown language \"" + std::string(name) +
                    "\" (expected english or chinese)");
}

const char* LangName(Lang lang) {
  return lang == Lang::kChinese ? "chinese" : "english";
}

RougeComponent ParseRougeComponent(std::string_view name) {
  if (name == "f1" || name == "f") return RougeComponent::kF1;
  if (name == "precision" || name == "p") return RougeComponent::kPrecision;
  if (name == "recall" || name == "r") return RougeComponent::kRecall;
  throw ConfigError("unknown rouge component \"" + std::string(name) + "\"");
}

TokenSeq Tokenize(std::string_view text, Lang lang) {
  TokenSeq out;
  out.lang = lang;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.tokens.push_back(std::move(current));
    current.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const char32_t cp = NextCodePoint(text, i);
    if (IsSeparator(cp)) {
      flush();
      continue;
    }
    if (cp < 0x80) {
      current += static_cast<char>(std::tolower(static_cast<int>(cp)));
      continue;
    }
    if (lang == Lang::kChinese) {
      flush();
      out.tokens.emplace_back(text.substr(start, i - start));
    } else {
      current.append(text.substr(start, i - start));
    }
  }
  flush();
  return out;
}

std::size_t LcsLength(const std::vector<std::string>& a,
                      const std::vector<std::string>& b) {
  const auto& outer = a.size() >= b.size() ? a : b;
  const auto& inner = a.size() >= b.size() ? b : a;
  std::vector<std::size_t> prev(inner.size() + 1, 0), cur(inner.size() + 1, 0);
  for (const auto& x : outer) {
    for (std::size_t j = 1; j <= inner.size(); ++j) {
      cur[j] = x == inner[j - 1] ? prev[j - 1] + 1
                                 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[inner.size()];
}

RougeScore RougeL(std::string_view candidate, std::string_view reference,
                  Lang lang) {
  const TokenSeq cand = Tokenize(candidate, lang);
  const TokenSeq ref = Tokenize(reference, lang);
  RougeScore s;
  if (cand.empty() || ref.empty()) return s;
  const double lcs = static_cast<double>(LcsLength(cand, ref));
  s.precision = lcs / static_cast<double>(cand.size());
  s.recall = lcs / static_cast<double>(ref.size());
  if (s.precision + s.recall > 0) {
    s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

std::string NormalizePhrase(std::string_view s) {
  std::string out(Trim(s));
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 0x80) {
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  return out;
}

bool PhrasesMatch(std::string_view a, std::string_view b, Lang lang,
                  const MatchOptions& opts) {
  const std::string na = NormalizePhrase(a);
  const std::string nb = NormalizePhrase(b);
  if (na.empty() || nb.empty()) return false;
  if (na == nb) return true;
  if (na.find(nb) != std::string::npos || nb.find(na) != std::string::npos) {
    return true;
  }
  // Precision and recall swap with argument order; take the larger of the two
  // orientations so the predicate stays symmetric for every component.
  const RougeScore ab = RougeL(na, nb, lang);
  double score = Component(ab, opts.component);
  if (opts.component != RougeComponent::kF1) {
    score = std::max(score, Component(RougeL(nb, na, lang), opts.component));
  }
  return score > opts.threshold;
}

std::size_t MatchCount(const std::vector<std::string>& queries,
                       const std::vector<std::string>& keys, Lang lang,
                       const MatchOptions& opts) {
  if (queries.empty() || keys.empty()) return 0;
  if (opts.one_to_one) {
    std::vector<std::vector<bool>> adj(queries.size(),
                                       std::vector<bool>(keys.size(), false));
    for (std::size_t q = 0; q < queries.size(); ++q) {
      for (std::size_t k = 0; k < keys.size(); ++k) {
        adj[q][k] = PhrasesMatch(queries[q], keys[k], lang, opts);
      }
    }
    return MaxBipartiteMatching(adj, keys.size());
  }
  std::size_t count = 0;
  for (const auto& q : queries) {
    for (const auto& k : keys) {
      if (PhrasesMatch(q, k, lang, opts)) {
        ++count;
        break;
      }
    }
  }
  return count;
}

}  // namespace privdet

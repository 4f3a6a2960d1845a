#pragma once

// Brute-force reference implementations for metric tests. Inputs are
// restricted to lowercase ASCII words separated by single spaces so that
// tokenization is a plain split.

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

inline std::vector<std::string> Split(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Exhaustive LCS: recursion over both suffixes with memoization on indices.
inline std::size_t Lcs(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  auto rec = [&](auto&& self, std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size() || j == b.size()) return 0;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best;
    if (a[i] == b[j]) {
      best = 1 + self(self, i + 1, j + 1);
    } else {
      best = std::max(self(self, i + 1, j), self(self, i, j + 1));
    }
    memo[key] = best;
    return best;
  };
  return rec(rec, 0, 0);
}

// Subset enumeration, usable for sequences up to ~12 tokens.
inline std::size_t LcsBySubsets(const std::vector<std::string>& a,
                                const std::vector<std::string>& b) {
  std::size_t best = 0;
  const std::size_t n = a.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    const auto k = static_cast<std::size_t>(__builtin_popcountll(mask));
    if (k <= best) continue;
    std::size_t j = 0;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size()) ok = false;
      else ++j;
    }
    if (ok) best = k;
  }
  return best;
}

inline double RougeF1(const std::string& x, const std::string& y) {
  const auto a = Split(x), b = Split(y);
  if (a.empty() || b.empty()) return 0.0;
  const double l = static_cast<double>(Lcs(a, b));
  const double p = l / static_cast<double>(a.size());
  const double r = l / static_cast<double>(b.size());
  return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

inline bool Match(const std::string& x, const std::string& y) {
  if (x.empty() || y.empty()) return false;
  if (x == y) return true;
  if (x.find(y) != std::string::npos || y.find(x) != std::string::npos) {
    return true;
  }
  return RougeF1(x, y) > 0.5;
}

struct Case {
  std::vector<std::string> gold_phrases, gold_infos;
  std::vector<std::string> pred_phrases, pred_infos;
};

struct Prf {
  std::optional<double> r, p, f1;
};

inline std::optional<double> F1(std::optional<double> r,
                                std::optional<double> p) {
  if (!r && !p) return std::nullopt;
  const double rr = r.value_or(0), pp = p.value_or(0);
  return rr + pp == 0 ? 0.0 : 2 * rr * pp / (rr + pp);
}

// Phrase level: per-query fraction of gold (pred) phrases matched by any
// pred (gold) phrase, averaged over Q_r (Q_p).
inline Prf Phrases(const std::vector<Case>& cases) {
  double rs = 0, ps = 0;
  int nr = 0, np = 0;
  for (const auto& c : cases) {
    if (!c.gold_phrases.empty()) {
      int hit = 0;
      for (const auto& g : c.gold_phrases) {
        bool any = false;
        for (const auto& p : c.pred_phrases) any = any || Match(g, p);
        hit += any;
      }
      rs += static_cast<double>(hit) / static_cast<double>(c.gold_phrases.size());
      ++nr;
    }
    if (!c.pred_phrases.empty()) {
      int hit = 0;
      for (const auto& p : c.pred_phrases) {
        bool any = false;
        for (const auto& g : c.gold_phrases) any = any || Match(p, g);
        hit += any;
      }
      ps += static_cast<double>(hit) / static_cast<double>(c.pred_phrases.size());
      ++np;
    }
  }
  Prf out;
  if (nr) out.r = rs / nr;
  if (np) out.p = ps / np;
  out.f1 = F1(out.r, out.p);
  return out;
}

// Information level: per-info best Rouge-L F1 against the other side.
inline Prf Infos(const std::vector<Case>& cases) {
  double rs = 0, ps = 0;
  int nr = 0, np = 0;
  for (const auto& c : cases) {
    std::vector<std::string> pred;
    for (const auto& i : c.pred_infos) {
      if (!i.empty()) pred.push_back(i);
    }
    if (!c.gold_phrases.empty()) {
      double sum = 0;
      for (const auto& g : c.gold_infos) {
        double best = 0;
        for (const auto& p : pred) best = std::max(best, RougeF1(g, p));
        sum += best;
      }
      rs += c.gold_infos.empty() ? 0.0 : sum / static_cast<double>(c.gold_infos.size());
      ++nr;
    }
    if (!pred.empty()) {
      double sum = 0;
      for (const auto& p : pred) {
        double best = 0;
        for (const auto& g : c.gold_infos) best = std::max(best, RougeF1(p, g));
        sum += best;
      }
      ps += sum / static_cast<double>(pred.size());
      ++np;
    }
  }
  Prf out;
  if (nr) out.r = rs / nr;
  if (np) out.p = ps / np;
  out.f1 = F1(out.r, out.p);
  return out;
}

// Random lowercase phrase of 1..max_words words over a tiny vocabulary, so
// partial overlaps and containments are common.
inline std::string RandomPhrase(std::mt19937_64& gen, int max_words = 4) {
  static const char* kVocab[] = {"a", "b", "c", "d", "ab", "cd", "user", "home"};
  const int n = 1 + static_cast<int>(gen() % static_cast<unsigned>(max_words));
  std::string s;
  for (int i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += kVocab[gen() % 8];
  }
  return s;
}

inline Case RandomCase(std::mt19937_64& gen) {
  Case c;
  const int ng = static_cast<int>(gen() % 6);
  const int np = static_cast<int>(gen() % 6);
  for (int i = 0; i < ng; ++i) {
    c.gold_phrases.push_back(RandomPhrase(gen));
    c.gold_infos.push_back(RandomPhrase(gen, 6));
  }
  for (int i = 0; i < np; ++i) {
    c.pred_phrases.push_back(RandomPhrase(gen));
    // Some predictions carry no information.
    c.pred_infos.push_back(gen() % 5 == 0 ? "" : RandomPhrase(gen, 6));
  }
  return c;
}

}  // namespace oracle

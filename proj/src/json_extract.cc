#include "privdet/json_extract.h"

#include <algorithm>
#include <cctype>
#include <optional>
#include <vector>

namespace privdet {
namespace {

struct Fence {
  std::string label;
  std::string_view body;
};

std::vector<Fence> FindFences(std::string_view text) {
  std::vector<Fence> fences;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    std::size_t label_end = text.find('\n', open + 3);
    if (label_end == std::string_view::npos) break;
    std::string label(text.substr(open + 3, label_end - open - 3));
    label.erase(std::remove_if(label.begin(), label.end(),
                               [](unsigned char c) { return std::isspace(c); }),
                label.end());
    std::transform(label.begin(), label.end(), label.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    const std::size_t body_start = label_end + 1;
    const std::size_t close_a = text.find("```", body_start);
    const std::size_t close_b = text.find("'''", body_start);
    const std::size_t close = std::min(close_a, close_b);
    const std::size_t body_end =
        close == std::string_view::npos ? text.size() : close;
    fences.push_back({label, text.substr(body_start, body_end - body_start)});
    if (close == std::string_view::npos) break;
    pos = close + 3;
  }
  return fences;
}

// Drops commas that directly precede a closing bracket, outside strings.
std::string StripTrailingCommas(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      out += c;
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) {
        ++j;
      }
      if (j < s.size() && (s[j] == ']' || s[j] == '}')) continue;
    }
    out += c;
  }
  return out;
}

std::optional<Json> TryParse(std::string_view s) {
  auto parse = [](std::string_view text) -> std::optional<Json> {
    Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false,
                         /*ignore_comments=*/true);
    if (j.is_discarded()) return std::nullopt;
    return j;
  };
  if (auto j = parse(s)) return j;
  return parse(StripTrailingCommas(s));
}

bool IsStructured(const Json& j) { return j.is_object() || j.is_array(); }

}  // namespace

Json ExtractJsonBlock(std::string_view text) {
  const auto fences = FindFences(text);
  for (bool labeled : {true, false}) {
    for (auto it = fences.rbegin(); it != fences.rend(); ++it) {
      const bool is_json = it->label == "json";
      if (labeled != is_json) continue;
      if (!labeled && !it->label.empty()) continue;
      if (auto j = TryParse(it->body); j && IsStructured(*j)) return *j;
    }
  }

  const std::size_t end = text.find_last_of("}]");
  if (end != std::string_view::npos) {
    int tried = 0;
    for (std::size_t start = text.find_first_of("{["); start < end && tried < 256;
         start = text.find_first_of("{[", start + 1), ++tried) {
      if (auto j = TryParse(text.substr(start, end - start + 1));
          j && IsStructured(*j)) {
        return *j;
      }
    }
  }
  throw JsonExtractError(std::string(text));
}

}  // namespace privdet

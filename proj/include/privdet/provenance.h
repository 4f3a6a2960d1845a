#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "json.hpp"
#include "privdet/version.h"

namespace privdet {

// FNV-1a over the compact serialization of the effective configuration.
inline std::string ConfigDigest(const nlohmann::ordered_json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

inline nlohmann::ordered_json Provenance(
    const nlohmann::ordered_json& config) {
  nlohmann::ordered_json p = nlohmann::ordered_json::object();
  p["tool"] = kToolName;
  p["version"] = kToolVersion;
  p["config_digest"] = ConfigDigest(config);
  return p;
}

}  // namespace privdet

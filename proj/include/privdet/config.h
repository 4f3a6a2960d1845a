#pragma once

// Tool configuration file (JSON). Relative paths resolve against the file's
// directory. Credentials are read only from the environment variable the
// backend section names.
//
//   {
//     "lang": "english",
//     "seed": 0,
//     "parallelism": 4,
//     "backend": {"type": "mock", "script": "mock_script.json",
//                 "model": "gpt-4", "endpoint": "https://.../chat/completions",
//                 "api_key_env": "OPENAI_API_KEY",
//                 "prices": {"input_per_1k": 0.0025, "output_per_1k": 0.01},
//                 "temperature": 0, "max_tokens": 1024, "timeout_seconds": 120,
//                 "retries": 5, "base_delay_ms": 500, "max_delay_ms": 30000,
//                 "max_in_flight": 8},
//     "pipeline": {...},
//     "baseline": {"method": "zg", "task": "leakage", "icl_k": 5,
//                  "include_context": false},
//     "paths": {"templates": "...", "output": "out"}
//   }

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "privdet/baselines.h"
#include "privdet/llmclient.h"
#include "privdet/pipeline.h"

namespace privdet {

struct BackendConfig {
  std::string type = "mock";  // mock | remote
  std::string script;         // mock script path
  std::string endpoint;
  std::string api_key_env;
  int timeout_seconds = 120;
  ClientOptions client;
};

struct ToolConfig {
  Lang lang = Lang::kEnglish;
  std::uint64_t seed = 0;
  int parallelism = 1;
  BackendConfig backend;
  PipelineConfig pipeline;
  BaselineConfig baseline;
  std::string template_dir;
  std::string output_dir = "out";

  // Copies lang/seed/parallelism into the pipeline and baseline sections.
  void Propagate();
  // Effective configuration for provenance; parallelism and credentials are
  // excluded.
  Json DigestJson() const;
};

// Built-in template directory (the shipped data/templates).
std::string DefaultTemplateDir();

ToolConfig ParseToolConfig(const Json& j, const std::string& base_dir);
ToolConfig LoadToolConfig(const std::string& path);

// Builds the configured backend. Remote backends read the API key from the
// named environment variable.
std::shared_ptr<ChatBackend> MakeBackend(const BackendConfig& config);

}  // namespace privdet

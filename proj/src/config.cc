#include "privdet/config.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace privdet {
namespace {

namespace fs = std::filesystem;

std::string Resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute() || base_dir.empty()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

void CheckKeys(const Json& j, const char* section,
               std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ConfigError(std::string("config section \"") + section +
                      "\" must be an object");
  }
  for (const auto& [key, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) {
      throw ConfigError(std::string("unknown key \"") + key + "\" in config " +
                        section);
    }
  }
}

BackendConfig ParseBackend(const Json& j, const std::string& base_dir) {
  CheckKeys(j, "backend",
            {"type", "script", "endpoint", "model", "api_key_env", "prices",
             "temperature", "max_tokens", "timeout_seconds", "retries",
             "base_delay_ms", "max_delay_ms", "max_in_flight", "jitter"});
  BackendConfig b;
  b.type = j.value("type", b.type);
  if (b.type != "mock" && b.type != "remote") {
    throw ConfigError("backend type must be mock or remote, got \"" + b.type +
                      "\"");
  }
  b.script = Resolve(base_dir, j.value("script", std::string()));
  b.endpoint = j.value("endpoint", std::string());
  b.api_key_env = j.value("api_key_env", std::string());
  b.timeout_seconds = j.value("timeout_seconds", b.timeout_seconds);
  auto& c = b.client;
  c.model = j.value("model", c.model);
  c.temperature = j.value("temperature", c.temperature);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.retry.max_attempts = j.value("retries", c.retry.max_attempts);
  c.retry.base_delay = std::chrono::milliseconds(
      j.value("base_delay_ms", static_cast<long long>(c.retry.base_delay.count())));
  c.retry.max_delay = std::chrono::milliseconds(
      j.value("max_delay_ms", static_cast<long long>(c.retry.max_delay.count())));
  c.retry.jitter = j.value("jitter", c.retry.jitter);
  if (j.contains("prices")) {
    const auto& p = j["prices"];
    CheckKeys(p, "backend.prices", {"input_per_1k", "output_per_1k"});
    c.prices.input_per_1k = p.value("input_per_1k", 0.0);
    c.prices.output_per_1k = p.value("output_per_1k", 0.0);
  }
  if (b.type == "mock" && b.script.empty()) {
    throw ConfigError("mock backend needs a \"script\" path");
  }
  if (b.type == "remote" && b.endpoint.empty()) {
    throw ConfigError("remote backend needs an \"endpoint\"");
  }
  if (c.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (c.retry.max_attempts < 1) throw ConfigError("retries must be >= 1");
  return b;
}

BaselineConfig ParseBaseline(const Json& j) {
  CheckKeys(j, "baseline",
            {"method", "task", "icl_k", "include_context",
             "context_token_budget"});
  BaselineConfig b;
  if (j.contains("method")) {
    b.method = ParseBaselineMethod(j["method"].get<std::string>());
  }
  if (j.contains("task")) b.task = ParseBaselineTask(j["task"].get<std::string>());
  b.icl_k = j.value("icl_k", b.icl_k);
  b.include_context = j.value("include_context", b.include_context);
  b.context_token_budget =
      j.value("context_token_budget", b.context_token_budget);
  return b;
}

}  // namespace

std::string DefaultTemplateDir() {
  if (const char* env = std::getenv("PRIVDET_TEMPLATE_DIR"); env && *env) {
    return env;
  }
#ifdef PRIVDET_DATA_DIR
  return std::string(PRIVDET_DATA_DIR) + "/templates";
#else
  return "data/templates";
#endif
}

void ToolConfig::Propagate() {
  pipeline.lang = lang;
  pipeline.seed = seed;
  pipeline.parallelism = parallelism;
  baseline.lang = lang;
  baseline.seed = seed;
  baseline.parallelism = parallelism;
}

Json ToolConfig::DigestJson() const {
  Json j = Json::object();
  j["lang"] = LangName(lang);
  j["seed"] = seed;
  Json b = Json::object();
  b["type"] = backend.type;
  b["model"] = backend.client.model;
  if (backend.type == "remote") b["endpoint"] = backend.endpoint;
  b["temperature"] = backend.client.temperature;
  b["max_tokens"] = backend.client.max_tokens;
  j["backend"] = b;
  j["pipeline"] = pipeline.ToJson(false);
  j["baseline"] = baseline.ToJson(false);
  return j;
}

ToolConfig ParseToolConfig(const Json& j, const std::string& base_dir) {
  CheckKeys(j, "file",
            {"lang", "seed", "parallelism", "backend", "pipeline", "baseline",
             "paths"});
  ToolConfig c;
  try {
    if (j.contains("lang")) c.lang = ParseLang(j["lang"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.parallelism = j.value("parallelism", c.parallelism);
    if (c.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    c.backend = ParseBackend(j.value("backend", Json::object()), base_dir);
    if (j.contains("pipeline")) {
      Json p = j["pipeline"];
      for (const char* k : {"lang", "seed", "parallelism"}) {
        if (p.contains(k)) {
          throw ConfigError(std::string("set \"") + k +
                            "\" at the top level, not in pipeline");
        }
      }
      c.pipeline = PipelineConfig::FromJson(p);
    }
    if (j.contains("baseline")) c.baseline = ParseBaseline(j["baseline"]);
    c.template_dir = DefaultTemplateDir();
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      CheckKeys(p, "paths", {"templates", "output"});
      if (p.contains("templates")) {
        c.template_dir = Resolve(base_dir, p["templates"].get<std::string>());
      }
      if (p.contains("output")) {
        c.output_dir = Resolve(base_dir, p["output"].get<std::string>());
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.Propagate();
  c.pipeline.Validate();
  return c;
}

ToolConfig LoadToolConfig(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str(), nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  return ParseToolConfig(j, fs::path(path).parent_path().string());
}

std::shared_ptr<ChatBackend> MakeBackend(const BackendConfig& config) {
  if (config.type == "mock") {
    if (!fs::exists(config.script)) {
      throw ConfigError("mock script not found: " + config.script);
    }
    return std::shared_ptr<ChatBackend>(MockBackend::FromFile(config.script));
  }
  RemoteBackendOptions o;
  o.endpoint = config.endpoint;
  o.timeout_seconds = config.timeout_seconds;
  if (!config.api_key_env.empty()) {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (!key || !*key) {
      throw ConfigError("environment variable " + config.api_key_env +
                        " is not set");
    }
    o.api_key = key;
  }
  return std::make_shared<RemoteBackend>(std::move(o));
}

}  // namespace privdet

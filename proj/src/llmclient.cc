#include "privdet/llmclient.h"

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"

namespace privdet {
namespace {

std::vector<std::string> StringOrList(const Json& j, const char* key) {
  std::vector<std::string> out;
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return out;
  if (it->is_string()) {
    out.push_back(it->get<std::string>());
  } else if (it->is_array()) {
    for (const auto& s : *it) {
      if (!s.is_string()) {
        throw ConfigError(std::string("mock rule \"") + key +
                          "\" entries must be strings");
      }
      out.push_back(s.get<std::string>());
    }
  } else {
    throw ConfigError(std::string("mock rule \"") + key +
                      "\" must be a string or list");
  }
  return out;
}

bool ContainsAll(const std::string& haystack,
                 const std::vector<std::string>& needles) {
  for (const auto& n : needles) {
    if (haystack.find(n) == std::string::npos) return false;
  }
  return true;
}

std::string RequestFingerprint(const ChatRequest& r) {
  std::string key = r.system.value_or("");
  key += '\x1f';
  for (const auto& m : r.messages) {
    key += m.role == Role::kUser ? 'u' : 'a';
    key += m.text;
    key += '\x1f';
  }
  return key;
}

const char* RoleName(Role r) { return r == Role::kUser ? "user" : "assistant"; }

}  // namespace

void ChatRequest::Validate() const {
  if (messages.empty()) throw ConfigError("chat request has no messages");
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const Role expected = i % 2 == 0 ? Role::kUser : Role::kAssistant;
    if (messages[i].role != expected) {
      throw ConfigError("chat request roles must alternate starting at user");
    }
  }
  if (temperature < 0) throw ConfigError("temperature must be >= 0");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
}

const std::string& ChatRequest::Prompt() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::kUser) return it->text;
  }
  static const std::string kEmpty;
  return kEmpty;
}

std::size_t EstimateTokens(std::string_view text) {
  return (text.size() + 3) / 4;
}

// ---------------------------------------------------------------- mock

MockBackend::MockBackend(std::vector<Rule> rules,
                         std::optional<std::string> fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)) {}

std::unique_ptr<MockBackend> MockBackend::FromJson(const Json& script) {
  if (!script.is_object()) throw ConfigError("mock script must be an object");
  std::vector<Rule> rules;
  if (auto it = script.find("rules"); it != script.end()) {
    if (!it->is_array()) throw ConfigError("mock \"rules\" must be a list");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const Json& rj = (*it)[i];
      if (!rj.is_object() || !rj.contains("response") ||
          !rj["response"].is_string()) {
        throw ConfigError("mock rule " + std::to_string(i) +
                          " needs a string \"response\"");
      }
      Rule r;
      r.contains = StringOrList(rj, "contains");
      r.system_contains = StringOrList(rj, "system_contains");
      if (rj.contains("attempt")) r.attempt = rj["attempt"].get<int>();
      r.response = rj["response"].get<std::string>();
      if (rj.contains("prompt_tokens")) {
        r.prompt_tokens = rj["prompt_tokens"].get<std::size_t>();
      }
      if (rj.contains("completion_tokens")) {
        r.completion_tokens = rj["completion_tokens"].get<std::size_t>();
      }
      rules.push_back(std::move(r));
    }
  }
  std::optional<std::string> fallback;
  if (auto it = script.find("default"); it != script.end() && !it->is_null()) {
    fallback = it->get<std::string>();
  }
  return std::make_unique<MockBackend>(std::move(rules), std::move(fallback));
}

std::unique_ptr<MockBackend> MockBackend::FromFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open mock script: " + path);
  try {
    return FromJson(Json::parse(in));
  } catch (const Json::exception& e) {
    throw ConfigError("mock script " + path + ": " + e.what());
  }
}

std::unique_ptr<MockBackend> MockBackend::Constant(std::string text) {
  return std::make_unique<MockBackend>(std::vector<Rule>{}, std::move(text));
}

ChatResponse MockBackend::Complete(const ChatRequest& request) {
  calls_.fetch_add(1);
  int attempt;
  {
    std::lock_guard<std::mutex> lock(mu_);
    attempt = ++seen_[RequestFingerprint(request)];
  }
  const std::string& prompt = request.Prompt();
  const std::string system = request.system.value_or("");

  const Rule* hit = nullptr;
  for (const auto& rule : rules_) {
    if (rule.attempt && *rule.attempt != attempt) continue;
    if (!ContainsAll(prompt, rule.contains)) continue;
    if (!ContainsAll(system, rule.system_contains)) continue;
    hit = &rule;
    break;
  }
  std::size_t prompt_tokens = EstimateTokens(system);
  for (const auto& m : request.messages) prompt_tokens += EstimateTokens(m.text);

  ChatResponse resp;
  if (hit) {
    resp.text = hit->response;
    resp.prompt_tokens = hit->prompt_tokens.value_or(prompt_tokens);
    resp.completion_tokens =
        hit->completion_tokens.value_or(EstimateTokens(resp.text));
  } else if (fallback_) {
    resp.text = *fallback_;
    resp.prompt_tokens = prompt_tokens;
    resp.completion_tokens = EstimateTokens(resp.text);
  } else {
    throw BackendError("mock script has no rule for prompt: " +
                       prompt.substr(0, 120));
  }
  return resp;
}

// -------------------------------------------------------------- remote

RemoteBackend::RemoteBackend(RemoteBackendOptions options)
    : options_(std::move(options)) {
  const std::string& url = options_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint must be an absolute URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  base_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (url.rfind("https://", 0) == 0) {
    throw ConfigError("https endpoints need a build with OpenSSL: " + url);
  }
#endif
}

Json RemoteBackend::RequestBody(const ChatRequest& request) {
  Json body = Json::object();
  body["model"] = request.model;
  Json messages = Json::array();
  if (request.system) {
    messages.push_back({{"role", "system"}, {"content", *request.system}});
  }
  for (const auto& m : request.messages) {
    messages.push_back({{"role", RoleName(m.role)}, {"content", m.text}});
  }
  body["messages"] = std::move(messages);
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  return body;
}

ChatResponse RemoteBackend::ParseResponseBody(const std::string& body,
                                              const ChatRequest& request) {
  Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw BackendError("response is not a JSON object: " + body.substr(0, 200));
  }
  ChatResponse resp;
  try {
    resp.text = j.at("choices").at(0).at("message").at("content")
                    .get<std::string>();
  } catch (const Json::exception&) {
    throw BackendError("response has no choices[0].message.content: " +
                       body.substr(0, 200));
  }
  const Json usage = j.value("usage", Json::object());
  std::size_t estimated_prompt = EstimateTokens(request.system.value_or(""));
  for (const auto& m : request.messages) {
    estimated_prompt += EstimateTokens(m.text);
  }
  resp.prompt_tokens = usage.value("prompt_tokens", estimated_prompt);
  resp.completion_tokens =
      usage.value("completion_tokens", EstimateTokens(resp.text));
  return resp;
}

ChatResponse RemoteBackend::Complete(const ChatRequest& request) {
  httplib::Client cli(base_);
  cli.set_connection_timeout(options_.timeout_seconds, 0);
  cli.set_read_timeout(options_.timeout_seconds, 0);
  cli.set_write_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + options_.api_key);
  }
  auto res = cli.Post(path_, headers, RequestBody(request).dump(),
                      "application/json");
  if (!res) {
    throw TransportError("request to " + base_ + path_ + " failed: " +
                         httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw HttpStatusError(res->status, res->body.substr(0, 200));
  }
  return ParseResponseBody(res->body, request);
}

// -------------------------------------------------------------- ledger

void UsageLedger::Record(std::string_view step, std::size_t prompt_tokens,
                         std::size_t completion_tokens) {
  std::lock_guard<std::mutex> lock(mu_);
  StepUsage& u = steps_[std::string(step)];
  ++u.calls;
  u.prompt_tokens += prompt_tokens;
  u.completion_tokens += completion_tokens;
}

LedgerSummary UsageLedger::Report(
    std::optional<std::size_t> sample_count) const {
  LedgerSummary s;
  {
    std::lock_guard<std::mutex> lock(mu_);
    s.steps = steps_;
  }
  return s.WithPrices(prices_, sample_count);
}

LedgerSummary LedgerSummary::WithPrices(
    const Prices& p, std::optional<std::size_t> sample_count) const {
  LedgerSummary s;
  s.steps = steps;
  s.prices = p;
  for (const auto& [name, u] : s.steps) {
    s.total.calls += u.calls;
    s.total.prompt_tokens += u.prompt_tokens;
    s.total.completion_tokens += u.completion_tokens;
  }
  s.total_cost = s.total.Cost(p);
  s.samples = sample_count;
  if (sample_count && *sample_count > 0) {
    s.cost_per_sample = s.total_cost / static_cast<double>(*sample_count);
  }
  return s;
}

Json LedgerSummary::ToJson() const {
  Json j = Json::object();
  Json steps_json = Json::object();
  for (const auto& [name, u] : steps) {
    steps_json[name] = {{"calls", u.calls},
                        {"prompt_tokens", u.prompt_tokens},
                        {"completion_tokens", u.completion_tokens},
                        {"cost", u.Cost(prices)}};
  }
  j["steps"] = std::move(steps_json);
  j["total"] = {{"calls", total.calls},
                {"prompt_tokens", total.prompt_tokens},
                {"completion_tokens", total.completion_tokens},
                {"cost", total_cost}};
  j["prices_per_1k"] = {{"input", prices.input_per_1k},
                        {"output", prices.output_per_1k}};
  if (samples) j["samples"] = *samples;
  if (cost_per_sample) j["cost_per_sample"] = *cost_per_sample;
  return j;
}

LedgerSummary LedgerSummary::FromJson(const Json& j) {
  LedgerSummary s;
  try {
    for (const auto& [name, u] : j.at("steps").items()) {
      StepUsage su;
      su.calls = u.at("calls").get<std::size_t>();
      su.prompt_tokens = u.at("prompt_tokens").get<std::size_t>();
      su.completion_tokens = u.at("completion_tokens").get<std::size_t>();
      s.steps[name] = su;
    }
    Prices p;
    if (j.contains("prices_per_1k")) {
      p.input_per_1k = j["prices_per_1k"].value("input", 0.0);
      p.output_per_1k = j["prices_per_1k"].value("output", 0.0);
    }
    std::optional<std::size_t> samples;
    if (j.contains("samples")) samples = j["samples"].get<std::size_t>();
    return s.WithPrices(p, samples);
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed usage ledger: ") + e.what());
  }
}

std::string LedgerSummary::FormatTable() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-18s %8s %14s %14s %12s\n", "step",
                "calls", "prompt_tok", "complete_tok", "cost");
  os << buf;
  auto row = [&](const std::string& name, const StepUsage& u, double cost) {
    std::snprintf(buf, sizeof(buf), "%-18s %8zu %14zu %14zu %12.4f\n",
                  name.c_str(), u.calls, u.prompt_tokens, u.completion_tokens,
                  cost);
    os << buf;
  };
  for (const auto& [name, u] : steps) row(name, u, u.Cost(prices));
  row("total", total, total_cost);
  if (cost_per_sample) {
    std::snprintf(buf, sizeof(buf), "cost per sample: %.6f over %zu samples\n",
                  *cost_per_sample, *samples);
    os << buf;
  }
  return os.str();
}

// -------------------------------------------------------------- client

ChatClient::ChatClient(std::shared_ptr<ChatBackend> backend,
                       ClientOptions options)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      ledger_(options_.prices),
      in_flight_(std::max(1, options_.max_in_flight)) {
  if (!backend_) throw ConfigError("chat client needs a backend");
  if (options_.retry.max_attempts < 1) {
    throw ConfigError("retry attempts must be >= 1");
  }
}

ChatRequest ChatClient::MakeRequest(std::string prompt,
                                    std::optional<std::string> system) const {
  ChatRequest r;
  r.system = std::move(system);
  r.messages.push_back({Role::kUser, std::move(prompt)});
  r.model = options_.model;
  r.temperature = options_.temperature;
  r.max_tokens = options_.max_tokens;
  return r;
}

ChatResponse ChatClient::Chat(const ChatRequest& request,
                              std::string_view step) {
  request.Validate();
  const bool jitter = options_.retry.jitter && !backend_->deterministic();
  thread_local std::mt19937_64 jitter_rng{std::random_device{}()};

  std::string last_error;
  for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
    try {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<1 << 20>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      ChatResponse resp = backend_->Complete(request);
      ledger_.Record(step, resp.prompt_tokens, resp.completion_tokens);
      return resp;
    } catch (const HttpStatusError& e) {
      if (!e.retryable()) throw;
      last_error = e.what();
    } catch (const TransportError& e) {
      last_error = e.what();
    }
    if (attempt == options_.retry.max_attempts) break;
    retries_.fetch_add(1);
    std::chrono::milliseconds delay(options_.retry.base_delay.count() *
                                   (1LL << std::min(attempt - 1, 20)));
    delay = std::min(delay, options_.retry.max_delay);
    if (jitter) {
      std::uniform_real_distribution<double> factor(0.5, 1.5);
      delay = std::chrono::milliseconds(static_cast<long long>(
          static_cast<double>(delay.count()) * factor(jitter_rng)));
    }
    std::this_thread::sleep_for(delay);
  }
  throw BackendError("giving up after " +
                     std::to_string(options_.retry.max_attempts) +
                     " attempts: " + last_error);
}

}  // namespace privdet

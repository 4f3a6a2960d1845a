#pragma once

// Chat-completion access behind a backend interface: a scripted mock for
// offline runs, an HTTP backend for chat-completion style endpoints, retry
// with exponential backoff, bounded concurrency, and token/cost accounting.

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "privdet/corpus.h"
#include "privdet/errors.h"

namespace privdet {

enum class Role { kUser, kAssistant };

struct ChatMessage {
  Role role = Role::kUser;
  std::string text;
};

struct ChatRequest {
  std::optional<std::string> system;
  std::vector<ChatMessage> messages;
  std::string model;
  double temperature = 0.0;
  int max_tokens = 1024;

  // Throws ConfigError unless messages are non-empty and alternate
  // user/assistant starting with user.
  void Validate() const;
  // Text of the last user message.
  const std::string& Prompt() const;
};

struct ChatResponse {
  std::string text;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

// Connection-level failure; always retried.
class TransportError : public BackendError {
 public:
  explicit TransportError(const std::string& what) : BackendError(what, 0) {}
};

// Non-success HTTP status. 429 and 5xx are retried.
class HttpStatusError : public BackendError {
 public:
  HttpStatusError(int status, const std::string& body_excerpt)
      : BackendError("HTTP status " + std::to_string(status) + ": " +
                         body_excerpt,
                     status) {}
  bool retryable() const { return status() == 429 || status() >= 500; }
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse Complete(const ChatRequest& request) = 0;
  // True for backends whose output is a function of the request (no jitter
  // needed on retry).
  virtual bool deterministic() const { return false; }
};

// Rough token estimate used when a backend does not report usage.
std::size_t EstimateTokens(std::string_view text);

// Scripted offline backend. Script document:
//   {"rules": [{"contains": "text" | ["a", "b"], "system_contains": ...,
//               "attempt": 2, "response": "...",
//               "prompt_tokens": 10, "completion_tokens": 5}, ...],
//    "default": "..."}
// `contains` is tested against the last user message (all listed substrings
// must occur); `attempt` is the 1-based number of times this exact request
// has been seen. The first matching rule wins; without a match the default
// response is used, or the call fails when there is none.
class MockBackend : public ChatBackend {
 public:
  struct Rule {
    std::vector<std::string> contains;
    std::vector<std::string> system_contains;
    std::optional<int> attempt;
    std::string response;
    std::optional<std::size_t> prompt_tokens;
    std::optional<std::size_t> completion_tokens;
  };

  MockBackend(std::vector<Rule> rules, std::optional<std::string> fallback);
  static std::unique_ptr<MockBackend> FromJson(const Json& script);
  static std::unique_ptr<MockBackend> FromFile(const std::string& path);
  // Answers every request with `text`.
  static std::unique_ptr<MockBackend> Constant(std::string text);

  ChatResponse Complete(const ChatRequest& request) override;
  bool deterministic() const override { return true; }
  std::size_t calls() const { return calls_.load(); }

 private:
  std::vector<Rule> rules_;
  std::optional<std::string> fallback_;
  std::mutex mu_;
  std::unordered_map<std::string, int> seen_;
  std::atomic<std::size_t> calls_{0};
};

struct RemoteBackendOptions {
  std::string endpoint;  // full URL of the chat-completions route
  std::string api_key;   // sent as a bearer token when non-empty
  int timeout_seconds = 120;
};

// OpenAI-style chat completions over HTTP(S).
class RemoteBackend : public ChatBackend {
 public:
  explicit RemoteBackend(RemoteBackendOptions options);
  ChatResponse Complete(const ChatRequest& request) override;

  static Json RequestBody(const ChatRequest& request);
  static ChatResponse ParseResponseBody(const std::string& body,
                                        const ChatRequest& request);

 private:
  RemoteBackendOptions options_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30000};
  bool jitter = true;  // ignored for deterministic backends
};

struct Prices {
  double input_per_1k = 0.0;
  double output_per_1k = 0.0;
};

struct StepUsage {
  std::size_t calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;

  double Cost(const Prices& p) const {
    return static_cast<double>(prompt_tokens) / 1000.0 * p.input_per_1k +
           static_cast<double>(completion_tokens) / 1000.0 * p.output_per_1k;
  }
};

struct LedgerSummary {
  std::map<std::string, StepUsage> steps;
  StepUsage total;
  Prices prices;
  double total_cost = 0.0;
  std::optional<std::size_t> samples;
  std::optional<double> cost_per_sample;

  Json ToJson() const;
  static LedgerSummary FromJson(const Json& j);
  // Re-prices the same token counts.
  LedgerSummary WithPrices(const Prices& p,
                           std::optional<std::size_t> sample_count) const;
  std::string FormatTable() const;
};

class UsageLedger {
 public:
  explicit UsageLedger(Prices prices = {}) : prices_(prices) {}
  void Record(std::string_view step, std::size_t prompt_tokens,
              std::size_t completion_tokens);
  LedgerSummary Report(std::optional<std::size_t> sample_count = {}) const;

 private:
  Prices prices_;
  mutable std::mutex mu_;
  std::map<std::string, StepUsage> steps_;
};

struct ClientOptions {
  std::string model = "mock";
  double temperature = 0.0;
  int max_tokens = 1024;
  RetryPolicy retry;
  int max_in_flight = 8;
  Prices prices;
};

// Shareable across worker threads.
class ChatClient {
 public:
  ChatClient(std::shared_ptr<ChatBackend> backend, ClientOptions options);

  // Single-turn request with the configured model parameters.
  ChatRequest MakeRequest(std::string prompt,
                          std::optional<std::string> system = {}) const;

  // Sends the request, retrying transport errors and 429/5xx. Usage is
  // recorded under `step` on success. Throws BackendError when retries are
  // exhausted or the status is not retryable.
  ChatResponse Chat(const ChatRequest& request, std::string_view step);

  const UsageLedger& ledger() const { return ledger_; }
  std::size_t retries() const { return retries_.load(); }
  const ClientOptions& options() const { return options_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  ClientOptions options_;
  UsageLedger ledger_;
  std::counting_semaphore<1 << 20> in_flight_;
  std::atomic<std::size_t> retries_{0};
};

}  // namespace privdet

#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepcritic/concurrency.hpp"

namespace stepcritic::gateway {

// What an endpoint is used for. Purely informational (logging, manifests);
// the wire protocol is identical for all roles.
enum class Role { critic_teacher, critic_under_test, generator };

const char* to_string(Role r);

struct EndpointConfig {
  std::string base_url;     // "http://host:port[/prefix]" or "script://rules.json"
  std::string model_name;
  Role role = Role::generator;
  std::string api_key_env;  // env var holding the bearer token; empty = no auth
  double timeout_s = 120.0;
  int max_retries = 3;      // retries after the first attempt
  int max_parallel = 4;     // in-flight request cap for this endpoint
  int backoff_initial_ms = 200;  // doubles per retry
};

struct SamplingParams {
  double temperature = 0.7;
  double top_p = 0.9;
  int max_new_tokens = 4096;
  int n = 1;
};

// Throws std::invalid_argument on out-of-range values (temperature < 0,
// top_p outside (0, 1], max_new_tokens < 1, n < 1).
void validate(const SamplingParams& p);

struct ChatTurn {
  std::string role;  // "user" or "assistant"
  std::string text;
};

struct ChatRequest {
  std::optional<std::string> system;
  std::vector<ChatTurn> turns;
  SamplingParams params;
};

struct Completion {
  std::string text;
  bool truncated = false;  // hit the max_new_tokens ceiling
};

struct TokenUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct ChatResponse {
  std::vector<Completion> completions;
  TokenUsage usage;
};

// Stable identity of a request for caching: SHA-256 over model name, system
// text, turns, temperature, top_p and max_new_tokens. The sample count n is
// deliberately excluded — each sample ordinal gets its own cache slot under
// the same digest.
std::string request_digest(const EndpointConfig& cfg, const ChatRequest& req);

struct GatewayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Connection-level failure (refused, reset, timeout). Retryable.
struct TransportError : GatewayError {
  using GatewayError::GatewayError;
};

// Non-2xx HTTP response. Retryable for 408, 429 and 5xx.
struct HttpStatusError : GatewayError {
  HttpStatusError(int status_, const std::string& msg) : GatewayError(msg), status(status_) {}
  int status;
};

// 2xx response whose body does not carry the expected completion payload.
struct MalformedResponseError : GatewayError {
  using GatewayError::GatewayError;
};

// A scripted backend saw a prompt no rule matches.
struct UnmatchedPromptError : GatewayError {
  using GatewayError::GatewayError;
};

// A model endpoint. `ordinals` names the cache slot of each completion the
// caller wants; implementations return exactly ordinals.size() completions in
// the same order. Implementations must be safe to call from many threads.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& req, const std::vector<int>& ordinals) = 0;
};

// One scripted behavior: a predicate over the canonical prompt plus a
// response generator. Rules are tried in order; first match wins.
struct ScriptRule {
  std::string name;
  std::function<bool(const std::string& prompt)> match;
  std::function<std::string(const std::string& prompt, int ordinal)> respond;
  int fail_first = 0;  // this many matching calls throw TransportError first
};

// Deterministic in-process stand-in for a model server. Prompts are rendered
// to a canonical text form and matched against the rule list; responses are
// then run through the same token-budget truncation rule real endpoints
// exhibit (4 characters per token). Unmatched prompts throw — silent
// fallthrough would hide broken fixtures.
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptRule> rules);

  // Loads declarative rules: {"rules": [{"name", "match": {"contains"} |
  // {"contains_all"} | {"regex"}, "respond": {"text"} | {"per_ordinal",
  // "mode": "clamp"|"cycle"}, "fail_first"}]}. Regex rules may use $1..$9 in
  // response text to splice captures from the prompt.
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  ChatResponse complete(const ChatRequest& req, const std::vector<int>& ordinals) override;

  // The text form match predicates see: "[system]\n...\n[user]\n...\n
  // [assistant]\n..." in turn order.
  static std::string canonical_prompt(const ChatRequest& req);

  // Test instrumentation.
  int call_count() const { return calls_.load(); }
  int max_inflight_seen() const { return max_inflight_.load(); }
  void set_latency(std::chrono::milliseconds ms) { latency_ms_ = static_cast<int>(ms.count()); }

 private:
  std::vector<ScriptRule> rules_;
  std::vector<std::unique_ptr<std::atomic<int>>> failures_left_;
  std::atomic<int> calls_{0};
  std::atomic<int> inflight_{0};
  std::atomic<int> max_inflight_{0};
  std::atomic<int> latency_ms_{0};
};

// OpenAI-style HTTP chat-completions client for `cfg.base_url`. The heavy
// HTTP machinery lives in the implementation file.
std::shared_ptr<ChatBackend> make_http_backend(const EndpointConfig& cfg);

// Routes chat requests to per-endpoint backends with bounded parallelism,
// retry with exponential backoff, and a content-addressed disk cache that
// makes reruns replay byte-identically without touching the backend.
class Gateway {
 public:
  struct Options {
    std::filesystem::path cache_dir;  // empty disables the cache
  };

  Gateway() = default;
  explicit Gateway(Options opts);

  // Binds an endpoint to a backend. With backend == nullptr one is built
  // from base_url: "script://file" loads a ScriptedBackend, http(s) URLs get
  // an HTTP client. Unknown schemes throw std::invalid_argument. Endpoints
  // used without prior registration are registered on first use.
  void register_endpoint(const EndpointConfig& cfg, std::shared_ptr<ChatBackend> backend = nullptr);

  // One uncached round trip honoring req.params.n. Retries transport errors
  // and retryable HTTP statuses up to cfg.max_retries times with exponential
  // backoff; all failures surface as GatewayError subclasses whose message
  // names the request digest.
  ChatResponse chat_complete(const EndpointConfig& cfg, const ChatRequest& req);

  // One completion at a named sample ordinal, served from the cache when
  // possible. Corrupt cache entries are logged, discarded and refetched.
  Completion cached_complete(const EndpointConfig& cfg, const ChatRequest& req, int sample_ordinal);

  // Completions at ordinals 0..n-1. Cache misses are fetched in one backend
  // call; hits never touch the backend.
  std::vector<Completion> cached_sample(const EndpointConfig& cfg, const ChatRequest& req, int n);

  struct CacheStats {
    long hits = 0;
    long misses = 0;
    std::set<std::string> keys_touched;  // cache entry file names
  };
  CacheStats cache_stats() const;

 private:
  struct Endpoint {
    std::shared_ptr<ChatBackend> backend;
    std::unique_ptr<concurrency::Semaphore> slots;
  };

  Endpoint& endpoint_for(const EndpointConfig& cfg);
  ChatResponse call_with_retry(Endpoint& ep, const EndpointConfig& cfg, const ChatRequest& req,
                               const std::vector<int>& ordinals, const std::string& digest);
  std::optional<Completion> load_cache_entry(const std::string& file_name);
  void store_cache_entry(const std::string& file_name, const Completion& c);

  Options opts_;
  mutable std::mutex mu_;
  std::map<std::string, Endpoint> endpoints_;
  CacheStats stats_;
};

}  // namespace stepcritic::gateway

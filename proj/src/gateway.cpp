#include "stepcritic/gateway.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "stepcritic/hash.hpp"

namespace stepcritic::gateway {

using nlohmann::json;

const char* to_string(Role r) {
  switch (r) {
    case Role::critic_teacher: return "critic_teacher";
    case Role::critic_under_test: return "critic_under_test";
    case Role::generator: return "generator";
  }
  return "unknown";
}

void validate(const SamplingParams& p) {
  if (p.temperature < 0.0)
    throw std::invalid_argument("temperature must be >= 0");
  if (!(p.top_p > 0.0 && p.top_p <= 1.0))
    throw std::invalid_argument("top_p must be in (0, 1]");
  if (p.max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
  if (p.n < 1) throw std::invalid_argument("n must be >= 1");
}

std::string request_digest(const EndpointConfig& cfg, const ChatRequest& req) {
  json turns = json::array();
  for (const auto& t : req.turns) turns.push_back(json::array({t.role, t.text}));
  const json canonical = json::array({
      cfg.model_name,
      req.system ? json(*req.system) : json(nullptr),
      turns,
      req.params.temperature,
      req.params.top_p,
      req.params.max_new_tokens,
  });
  return hash::sha256_hex(canonical.dump());
}

// ---------------------------------------------------------------- scripted

namespace {

// The 4-characters-per-token heuristic used everywhere a real tokenizer is
// out of reach. Deliberately crude; it only needs to be deterministic.
int estimate_tokens(std::size_t chars) { return static_cast<int>((chars + 3) / 4); }

Completion apply_token_budget(std::string text, int max_new_tokens) {
  Completion c;
  if (estimate_tokens(text.size()) > max_new_tokens) {
    text.resize(static_cast<std::size_t>(max_new_tokens) * 4);
    c.truncated = true;
  }
  c.text = std::move(text);
  return c;
}

std::string expand_captures(const std::string& tmpl, const std::smatch& m) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '$' && i + 1 < tmpl.size() && tmpl[i + 1] >= '1' && tmpl[i + 1] <= '9') {
      const std::size_t group = static_cast<std::size_t>(tmpl[i + 1] - '0');
      if (group < m.size()) {
        out += m[group].str();
        ++i;
        continue;
      }
    }
    out.push_back(tmpl[i]);
  }
  return out;
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::vector<ScriptRule> rules) : rules_(std::move(rules)) {
  failures_left_.reserve(rules_.size());
  for (const auto& r : rules_)
    failures_left_.push_back(std::make_unique<std::atomic<int>>(r.fail_first));
}

std::string ScriptedBackend::canonical_prompt(const ChatRequest& req) {
  std::string out;
  if (req.system) {
    out += "[system]\n";
    out += *req.system;
    out += '\n';
  }
  for (const auto& t : req.turns) {
    out += '[';
    out += t.role;
    out += "]\n";
    out += t.text;
    out += '\n';
  }
  if (!out.empty()) out.pop_back();  // no trailing newline
  return out;
}

ChatResponse ScriptedBackend::complete(const ChatRequest& req, const std::vector<int>& ordinals) {
  calls_.fetch_add(1);
  const int now = inflight_.fetch_add(1) + 1;
  int seen = max_inflight_.load();
  while (now > seen && !max_inflight_.compare_exchange_weak(seen, now)) {
  }
  struct Decrement {
    std::atomic<int>& v;
    ~Decrement() { v.fetch_sub(1); }
  } dec{inflight_};

  if (const int ms = latency_ms_.load(); ms > 0)
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));

  const std::string prompt = canonical_prompt(req);
  for (std::size_t r = 0; r < rules_.size(); ++r) {
    if (!rules_[r].match(prompt)) continue;
    int left = failures_left_[r]->load();
    while (left > 0) {
      if (failures_left_[r]->compare_exchange_weak(left, left - 1))
        throw TransportError("scripted failure from rule '" + rules_[r].name + "'");
    }
    ChatResponse resp;
    resp.completions.reserve(ordinals.size());
    for (int ordinal : ordinals) {
      resp.completions.push_back(
          apply_token_budget(rules_[r].respond(prompt, ordinal), req.params.max_new_tokens));
      resp.usage.completion_tokens += estimate_tokens(resp.completions.back().text.size());
    }
    resp.usage.prompt_tokens = estimate_tokens(prompt.size());
    return resp;
  }
  throw UnmatchedPromptError("no scripted rule matched prompt: " +
                             prompt.substr(0, std::min<std::size_t>(prompt.size(), 400)));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open scripted rules file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const std::exception& e) {
    throw std::invalid_argument("scripted rules file " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("rules") || !doc["rules"].is_array())
    throw std::invalid_argument("scripted rules file " + path.string() +
                                " must hold {\"rules\": [...]}");

  std::vector<ScriptRule> rules;
  for (const auto& jr : doc["rules"]) {
    ScriptRule rule;
    rule.name = jr.value("name", "rule" + std::to_string(rules.size()));
    rule.fail_first = jr.value("fail_first", 0);

    const json& jm = jr.at("match");
    std::shared_ptr<std::regex> re;
    if (jm.contains("contains")) {
      const std::string needle = jm["contains"].get<std::string>();
      rule.match = [needle](const std::string& p) { return p.find(needle) != std::string::npos; };
    } else if (jm.contains("contains_all")) {
      std::vector<std::string> needles = jm["contains_all"].get<std::vector<std::string>>();
      rule.match = [needles](const std::string& p) {
        for (const auto& n : needles)
          if (p.find(n) == std::string::npos) return false;
        return true;
      };
    } else if (jm.contains("regex")) {
      re = std::make_shared<std::regex>(jm["regex"].get<std::string>());
      rule.match = [re](const std::string& p) { return std::regex_search(p, *re); };
    } else {
      throw std::invalid_argument("rule '" + rule.name +
                                  "' needs a contains/contains_all/regex matcher");
    }

    const json& jrsp = jr.at("respond");
    if (jrsp.contains("text")) {
      const std::string text = jrsp["text"].get<std::string>();
      rule.respond = [text, re](const std::string& p, int) {
        if (!re) return text;
        std::smatch m;
        std::regex_search(p, m, *re);
        return expand_captures(text, m);
      };
    } else if (jrsp.contains("per_ordinal")) {
      std::vector<std::string> texts = jrsp["per_ordinal"].get<std::vector<std::string>>();
      if (texts.empty())
        throw std::invalid_argument("rule '" + rule.name + "' has an empty per_ordinal list");
      const bool cycle = jrsp.value("mode", "clamp") == std::string("cycle");
      rule.respond = [texts, cycle, re](const std::string& p, int ordinal) {
        std::size_t i = static_cast<std::size_t>(std::max(0, ordinal));
        i = cycle ? i % texts.size() : std::min(i, texts.size() - 1);
        if (!re) return texts[i];
        std::smatch m;
        std::regex_search(p, m, *re);
        return expand_captures(texts[i], m);
      };
    } else {
      throw std::invalid_argument("rule '" + rule.name + "' needs a text/per_ordinal response");
    }
    rules.push_back(std::move(rule));
  }
  return std::make_shared<ScriptedBackend>(std::move(rules));
}

// -------------------------------------------------------------------- http

namespace {

class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme_end = cfg_.base_url.find("://");
    if (scheme_end == std::string::npos)
      throw std::invalid_argument("not an http(s) URL: " + cfg_.base_url);
    const auto path_begin = cfg_.base_url.find('/', scheme_end + 3);
    if (path_begin == std::string::npos) {
      host_ = cfg_.base_url;
    } else {
      host_ = cfg_.base_url.substr(0, path_begin);
      path_prefix_ = cfg_.base_url.substr(path_begin);
      while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
  }

  ChatResponse complete(const ChatRequest& req, const std::vector<int>& ordinals) override {
    json messages = json::array();
    if (req.system) messages.push_back({{"role", "system"}, {"content", *req.system}});
    for (const auto& t : req.turns) messages.push_back({{"role", t.role}, {"content", t.text}});
    const json body = {
        {"model", cfg_.model_name},
        {"messages", messages},
        {"temperature", req.params.temperature},
        {"top_p", req.params.top_p},
        {"n", static_cast<int>(ordinals.size())},
        {"max_tokens", req.params.max_new_tokens},
    };

    httplib::Client client(host_);
    const auto seconds = static_cast<time_t>(cfg_.timeout_s);
    const auto micros =
        static_cast<time_t>((cfg_.timeout_s - static_cast<double>(seconds)) * 1e6);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    httplib::Headers headers;
    if (!cfg_.api_key_env.empty()) {
      if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                           "application/json");
    if (!res)
      throw TransportError("request to " + host_ + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw HttpStatusError(res->status, "HTTP " + std::to_string(res->status) + " from " +
                                             host_ + ": " + res->body.substr(0, 200));

    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const std::exception& e) {
      throw MalformedResponseError(std::string("response body is not JSON: ") + e.what());
    }
    if (!parsed.contains("choices") || !parsed["choices"].is_array())
      throw MalformedResponseError("response has no choices array");

    ChatResponse out;
    for (const auto& choice : parsed["choices"]) {
      if (!choice.contains("message") || !choice["message"].contains("content") ||
          !choice["message"]["content"].is_string())
        throw MalformedResponseError("choice is missing message.content");
      Completion c;
      c.text = choice["message"]["content"].get<std::string>();
      c.truncated = choice.value("finish_reason", "") == std::string("length");
      out.completions.push_back(std::move(c));
    }
    if (out.completions.size() != ordinals.size())
      throw MalformedResponseError("asked for " + std::to_string(ordinals.size()) +
                                   " completions, got " + std::to_string(out.completions.size()));
    if (parsed.contains("usage") && parsed["usage"].is_object()) {
      out.usage.prompt_tokens = parsed["usage"].value("prompt_tokens", 0);
      out.usage.completion_tokens = parsed["usage"].value("completion_tokens", 0);
    }
    return out;
  }

 private:
  EndpointConfig cfg_;
  std::string host_;
  std::string path_prefix_;
};

}  // namespace

std::shared_ptr<ChatBackend> make_http_backend(const EndpointConfig& cfg) {
  return std::make_shared<HttpBackend>(cfg);
}

// ----------------------------------------------------------------- gateway

namespace {

constexpr std::string_view kScriptScheme = "script://";

std::string endpoint_key(const EndpointConfig& cfg) {
  return cfg.base_url + "|" + cfg.model_name;
}

bool retryable(const HttpStatusError& e) {
  return e.status == 408 || e.status == 429 || e.status >= 500;
}

}  // namespace

Gateway::Gateway(Options opts) : opts_(std::move(opts)) {
  if (!opts_.cache_dir.empty()) std::filesystem::create_directories(opts_.cache_dir);
}

void Gateway::register_endpoint(const EndpointConfig& cfg, std::shared_ptr<ChatBackend> backend) {
  if (!backend) {
    if (cfg.base_url.rfind(kScriptScheme, 0) == 0) {
      backend = ScriptedBackend::from_file(cfg.base_url.substr(kScriptScheme.size()));
    } else if (cfg.base_url.rfind("http://", 0) == 0 || cfg.base_url.rfind("https://", 0) == 0) {
      backend = make_http_backend(cfg);
    } else {
      throw std::invalid_argument("unsupported endpoint URL scheme: " + cfg.base_url);
    }
  }
  std::lock_guard lock(mu_);
  Endpoint ep;
  ep.backend = std::move(backend);
  ep.slots = std::make_unique<concurrency::Semaphore>(std::max(1, cfg.max_parallel));
  endpoints_.insert_or_assign(endpoint_key(cfg), std::move(ep));
}

Gateway::Endpoint& Gateway::endpoint_for(const EndpointConfig& cfg) {
  const std::string key = endpoint_key(cfg);
  {
    std::lock_guard lock(mu_);
    if (auto it = endpoints_.find(key); it != endpoints_.end()) return it->second;
  }
  // Auto-registration: build the backend outside the lock, then emplace.
  // A concurrent first use keeps whichever landed first; references into the
  // map stay valid because nothing is overwritten here.
  std::shared_ptr<ChatBackend> backend;
  if (cfg.base_url.rfind(kScriptScheme, 0) == 0) {
    backend = ScriptedBackend::from_file(cfg.base_url.substr(kScriptScheme.size()));
  } else if (cfg.base_url.rfind("http://", 0) == 0 || cfg.base_url.rfind("https://", 0) == 0) {
    backend = make_http_backend(cfg);
  } else {
    throw std::invalid_argument("unsupported endpoint URL scheme: " + cfg.base_url);
  }
  std::lock_guard lock(mu_);
  auto [it, inserted] = endpoints_.try_emplace(key);
  if (inserted) {
    it->second.backend = std::move(backend);
    it->second.slots = std::make_unique<concurrency::Semaphore>(std::max(1, cfg.max_parallel));
  }
  return it->second;
}

ChatResponse Gateway::call_with_retry(Endpoint& ep, const EndpointConfig& cfg,
                                      const ChatRequest& req, const std::vector<int>& ordinals,
                                      const std::string& digest) {
  concurrency::SemaphoreGuard guard(*ep.slots);
  const std::string tag = " [request " + digest.substr(0, 12) + "]";
  for (int attempt = 0;; ++attempt) {
    try {
      ChatResponse resp = ep.backend->complete(req, ordinals);
      if (resp.completions.size() != ordinals.size())
        throw MalformedResponseError("backend returned " +
                                     std::to_string(resp.completions.size()) +
                                     " completions, expected " + std::to_string(ordinals.size()));
      return resp;
    } catch (const TransportError& e) {
      if (attempt >= cfg.max_retries) throw TransportError(e.what() + tag);
    } catch (const HttpStatusError& e) {
      if (!retryable(e) || attempt >= cfg.max_retries)
        throw HttpStatusError(e.status, e.what() + tag);
    } catch (const UnmatchedPromptError& e) {
      throw UnmatchedPromptError(e.what() + tag);
    } catch (const MalformedResponseError& e) {
      throw MalformedResponseError(e.what() + tag);
    }
    std::this_thread::sleep_for(
        std::chrono::milliseconds(static_cast<long>(cfg.backoff_initial_ms) << attempt));
  }
}

ChatResponse Gateway::chat_complete(const EndpointConfig& cfg, const ChatRequest& req) {
  validate(req.params);
  Endpoint& ep = endpoint_for(cfg);
  const std::string digest = request_digest(cfg, req);
  std::vector<int> ordinals(static_cast<std::size_t>(req.params.n));
  for (int i = 0; i < req.params.n; ++i) ordinals[static_cast<std::size_t>(i)] = i;
  return call_with_retry(ep, cfg, req, ordinals, digest);
}

std::optional<Completion> Gateway::load_cache_entry(const std::string& file_name) {
  const auto path = opts_.cache_dir / file_name;
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    const json j = json::parse(in);
    Completion c;
    c.text = j.at("text").get<std::string>();
    c.truncated = j.at("truncated").get<bool>();
    return c;
  } catch (const std::exception& e) {
    std::cerr << "warning: discarding corrupt cache entry " << path.string() << ": " << e.what()
              << "\n";
    return std::nullopt;
  }
}

void Gateway::store_cache_entry(const std::string& file_name, const Completion& c) {
  static std::atomic<unsigned> counter{0};
  const auto path = opts_.cache_dir / file_name;
  const auto tmp = opts_.cache_dir /
                   (file_name + ".tmp" + std::to_string(counter.fetch_add(1)));
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write cache entry " + tmp.string());
    out << json{{"text", c.text}, {"truncated", c.truncated}}.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

Completion Gateway::cached_complete(const EndpointConfig& cfg, const ChatRequest& req,
                                    int sample_ordinal) {
  validate(req.params);
  const std::string digest = request_digest(cfg, req);
  const std::string file_name = digest + "-" + std::to_string(sample_ordinal) + ".json";
  const bool caching = !opts_.cache_dir.empty();
  if (caching) {
    if (auto hit = load_cache_entry(file_name)) {
      std::lock_guard lock(mu_);
      ++stats_.hits;
      stats_.keys_touched.insert(file_name);
      return *hit;
    }
  }
  Endpoint& ep = endpoint_for(cfg);
  ChatResponse resp = call_with_retry(ep, cfg, req, {sample_ordinal}, digest);
  if (caching) store_cache_entry(file_name, resp.completions.front());
  {
    std::lock_guard lock(mu_);
    ++stats_.misses;
    stats_.keys_touched.insert(file_name);
  }
  return resp.completions.front();
}

std::vector<Completion> Gateway::cached_sample(const EndpointConfig& cfg, const ChatRequest& req,
                                               int n) {
  validate(req.params);
  if (n < 1) throw std::invalid_argument("cached_sample needs n >= 1");
  const std::string digest = request_digest(cfg, req);
  const bool caching = !opts_.cache_dir.empty();

  std::vector<std::optional<Completion>> slots(static_cast<std::size_t>(n));
  std::vector<int> misses;
  for (int i = 0; i < n; ++i) {
    const std::string file_name = digest + "-" + std::to_string(i) + ".json";
    if (caching) {
      if (auto hit = load_cache_entry(file_name)) {
        slots[static_cast<std::size_t>(i)] = std::move(hit);
        std::lock_guard lock(mu_);
        ++stats_.hits;
        stats_.keys_touched.insert(file_name);
        continue;
      }
    }
    misses.push_back(i);
  }

  if (!misses.empty()) {
    Endpoint& ep = endpoint_for(cfg);
    ChatResponse resp = call_with_retry(ep, cfg, req, misses, digest);
    for (std::size_t k = 0; k < misses.size(); ++k) {
      const int ordinal = misses[k];
      const std::string file_name = digest + "-" + std::to_string(ordinal) + ".json";
      if (caching) store_cache_entry(file_name, resp.completions[k]);
      slots[static_cast<std::size_t>(ordinal)] = std::move(resp.completions[k]);
      std::lock_guard lock(mu_);
      ++stats_.misses;
      stats_.keys_touched.insert(file_name);
    }
  }

  std::vector<Completion> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

Gateway::CacheStats Gateway::cache_stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace stepcritic::gateway

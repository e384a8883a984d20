#include "doctest.h"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "stepcritic/gateway.hpp"

using namespace stepcritic;
using namespace stepcritic::gateway;
using nlohmann::json;

namespace {

ChatRequest simple_request(const std::string& user_text, SamplingParams params = {}) {
  ChatRequest req;
  req.turns.push_back({"user", user_text});
  req.params = params;
  return req;
}

EndpointConfig scripted_endpoint(const std::string& model = "unit-model") {
  EndpointConfig cfg;
  cfg.base_url = "scripted://unit";
  cfg.model_name = model;
  cfg.backoff_initial_ms = 1;  // keep retry tests fast
  return cfg;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::shared_ptr<ScriptedBackend> echo_backend() {
  ScriptRule rule;
  rule.name = "echo";
  rule.match = [](const std::string&) { return true; };
  rule.respond = [](const std::string&, int ordinal) {
    return "reply-" + std::to_string(ordinal);
  };
  return std::make_shared<ScriptedBackend>(std::vector<ScriptRule>{rule});
}

}  // namespace

TEST_CASE("request digests are stable and parameter-sensitive") {
  const auto cfg = scripted_endpoint();
  const auto base = simple_request("hello", {0.7, 0.9, 100, 1});
  const std::string d = request_digest(cfg, base);
  CHECK(d.size() == 64);
  CHECK(d.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(request_digest(cfg, base) == d);

  auto changed = base;
  changed.params.temperature = 0.8;
  CHECK(request_digest(cfg, changed) != d);
  changed = base;
  changed.params.top_p = 0.5;
  CHECK(request_digest(cfg, changed) != d);
  changed = base;
  changed.params.max_new_tokens = 101;
  CHECK(request_digest(cfg, changed) != d);
  changed = base;
  changed.system = "sys";
  CHECK(request_digest(cfg, changed) != d);
  changed = base;
  changed.turns[0].text = "hello!";
  CHECK(request_digest(cfg, changed) != d);
  changed = base;
  changed.turns[0].role = "assistant";
  CHECK(request_digest(cfg, changed) != d);

  auto other_model = cfg;
  other_model.model_name = "different";
  CHECK(request_digest(other_model, base) != d);

  // The sample count is not part of a request's identity: ordinals address
  // individual samples under one digest.
  changed = base;
  changed.params.n = 16;
  CHECK(request_digest(cfg, changed) == d);
}

TEST_CASE("sampling parameter validation rejects nonsense") {
  CHECK_NOTHROW(validate(SamplingParams{0.0, 1.0, 1, 1}));
  CHECK_THROWS_AS(validate(SamplingParams{-0.1, 0.9, 100, 1}), std::invalid_argument);
  CHECK_THROWS_AS(validate(SamplingParams{0.7, 0.0, 100, 1}), std::invalid_argument);
  CHECK_THROWS_AS(validate(SamplingParams{0.7, 1.1, 100, 1}), std::invalid_argument);
  CHECK_THROWS_AS(validate(SamplingParams{0.7, 0.9, 0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(validate(SamplingParams{0.7, 0.9, 100, 0}), std::invalid_argument);
}

TEST_CASE("canonical prompt lays out system and turns in order") {
  ChatRequest req;
  req.system = "be brief";
  req.turns.push_back({"user", "question"});
  req.turns.push_back({"assistant", "Step 1:"});
  CHECK(ScriptedBackend::canonical_prompt(req) ==
        "[system]\nbe brief\n[user]\nquestion\n[assistant]\nStep 1:");
  ChatRequest bare;
  bare.turns.push_back({"user", "q"});
  CHECK(ScriptedBackend::canonical_prompt(bare) == "[user]\nq");
}

TEST_CASE("scripted rules match in order and unmatched prompts throw") {
  ScriptRule first;
  first.name = "first";
  first.match = [](const std::string& p) { return p.find("alpha") != std::string::npos; };
  first.respond = [](const std::string&, int) { return std::string("from-first"); };
  ScriptRule second;
  second.name = "second";
  second.match = [](const std::string& p) { return p.find("alph") != std::string::npos; };
  second.respond = [](const std::string&, int) { return std::string("from-second"); };
  ScriptedBackend backend({first, second});

  auto resp = backend.complete(simple_request("alpha"), {0});
  CHECK(resp.completions[0].text == "from-first");
  resp = backend.complete(simple_request("alphx"), {0});
  CHECK(resp.completions[0].text == "from-second");
  CHECK_THROWS_AS(backend.complete(simple_request("beta"), {0}), UnmatchedPromptError);
}

TEST_CASE("scripted responses honor the token budget") {
  ScriptRule rule;
  rule.name = "long";
  rule.match = [](const std::string&) { return true; };
  rule.respond = [](const std::string&, int) { return std::string(100, 'x'); };
  ScriptedBackend backend({rule});

  auto resp = backend.complete(simple_request("q", {0.7, 0.9, 2, 1}), {0});
  CHECK(resp.completions[0].text == std::string(8, 'x'));  // 2 tokens * 4 chars
  CHECK(resp.completions[0].truncated);

  resp = backend.complete(simple_request("q", {0.7, 0.9, 25, 1}), {0});
  CHECK(resp.completions[0].text == std::string(100, 'x'));
  CHECK_FALSE(resp.completions[0].truncated);
}

TEST_CASE("declarative rules load from JSON with ordinals and captures") {
  const auto dir = fresh_dir("stepcritic_rules");
  const auto rules_path = dir / "rules.json";
  {
    std::ofstream out(rules_path);
    out << R"({"rules": [
      {"name": "cycling", "match": {"contains": "count"},
       "respond": {"per_ordinal": ["a", "b"], "mode": "cycle"}},
      {"name": "clamping", "match": {"contains_all": ["one", "two"]},
       "respond": {"per_ordinal": ["x", "y"]}},
      {"name": "capture", "match": {"regex": "Step ([0-9]+) looks"},
       "respond": {"text": "echo $1"}},
      {"name": "flaky", "match": {"contains": "shaky"}, "fail_first": 1,
       "respond": {"text": "recovered"}}
    ]})";
  }
  auto backend = ScriptedBackend::from_file(rules_path);

  auto resp = backend->complete(simple_request("count these"), {0, 1, 2, 3});
  CHECK(resp.completions[0].text == "a");
  CHECK(resp.completions[1].text == "b");
  CHECK(resp.completions[2].text == "a");
  CHECK(resp.completions[3].text == "b");

  resp = backend->complete(simple_request("two comes after one"), {0, 1, 5});
  CHECK(resp.completions[0].text == "x");
  CHECK(resp.completions[1].text == "y");
  CHECK(resp.completions[2].text == "y");  // clamped to the last entry

  resp = backend->complete(simple_request("Step 7 looks fine"), {0});
  CHECK(resp.completions[0].text == "echo 7");

  CHECK_THROWS_AS(backend->complete(simple_request("shaky ground"), {0}), TransportError);
  resp = backend->complete(simple_request("shaky ground"), {0});
  CHECK(resp.completions[0].text == "recovered");

  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed rule files are rejected") {
  const auto dir = fresh_dir("stepcritic_badrules");
  const auto path = dir / "bad.json";
  std::ofstream(path) << "not json at all";
  CHECK_THROWS_AS(ScriptedBackend::from_file(path), std::invalid_argument);
  std::ofstream(path, std::ios::trunc) << R"({"rules": [{"name": "r", "match": {}, "respond": {"text": "t"}}]})";
  CHECK_THROWS_AS(ScriptedBackend::from_file(path), std::invalid_argument);
  std::ofstream(path, std::ios::trunc)
      << R"({"rules": [{"name": "r", "match": {"contains": "x"}, "respond": {}}]})";
  CHECK_THROWS_AS(ScriptedBackend::from_file(path), std::invalid_argument);
  CHECK_THROWS_AS(ScriptedBackend::from_file(dir / "missing.json"), std::invalid_argument);
  std::filesystem::remove_all(dir);
}

TEST_CASE("gateway caches completions per ordinal") {
  const auto cache = fresh_dir("stepcritic_cache1");
  Gateway gw({cache});
  const auto cfg = scripted_endpoint();
  auto backend = echo_backend();
  gw.register_endpoint(cfg, backend);

  const auto req = simple_request("hello");
  const auto first = gw.cached_complete(cfg, req, 0);
  CHECK(first.text == "reply-0");
  CHECK(backend->call_count() == 1);

  // Second request is served from disk.
  const auto again = gw.cached_complete(cfg, req, 0);
  CHECK(again.text == "reply-0");
  CHECK(backend->call_count() == 1);

  // A different ordinal is a different slot.
  CHECK(gw.cached_complete(cfg, req, 3).text == "reply-3");
  CHECK(backend->call_count() == 2);

  const auto stats = gw.cache_stats();
  CHECK(stats.hits == 1);
  CHECK(stats.misses == 2);
  CHECK(stats.keys_touched.size() == 2);
  const std::string digest = request_digest(cfg, req);
  CHECK(stats.keys_touched.count(digest + "-0.json") == 1);
  CHECK(stats.keys_touched.count(digest + "-3.json") == 1);
  for (const auto& key : stats.keys_touched)
    CHECK(std::filesystem::exists(cache / key));

  // A fresh gateway over the same directory replays without backend calls.
  Gateway warm({cache});
  warm.register_endpoint(cfg, backend);
  CHECK(warm.cached_complete(cfg, req, 0).text == "reply-0");
  CHECK(warm.cached_complete(cfg, req, 3).text == "reply-3");
  CHECK(backend->call_count() == 2);

  std::filesystem::remove_all(cache);
}

TEST_CASE("corrupt cache entries are discarded and refetched") {
  const auto cache = fresh_dir("stepcritic_cache2");
  Gateway gw({cache});
  const auto cfg = scripted_endpoint();
  auto backend = echo_backend();
  gw.register_endpoint(cfg, backend);

  const auto req = simple_request("hello");
  gw.cached_complete(cfg, req, 0);
  const std::string key = request_digest(cfg, req) + "-0.json";
  std::ofstream(cache / key, std::ios::trunc) << "{not json";

  CHECK(gw.cached_complete(cfg, req, 0).text == "reply-0");
  CHECK(backend->call_count() == 2);
  // The refetch rewrote the entry.
  std::ifstream in(cache / key);
  json j;
  in >> j;
  CHECK(j.at("text") == "reply-0");
  std::filesystem::remove_all(cache);
}

TEST_CASE("cached_sample fetches all misses in one backend call") {
  const auto cache = fresh_dir("stepcritic_cache3");
  Gateway gw({cache});
  const auto cfg = scripted_endpoint();
  auto backend = echo_backend();
  gw.register_endpoint(cfg, backend);

  auto req = simple_request("batch");
  req.params.n = 4;
  const auto completions = gw.cached_sample(cfg, req, 4);
  REQUIRE(completions.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(completions[i].text == "reply-" + std::to_string(i));
  CHECK(backend->call_count() == 1);

  // Warm two slots, drop two: only the misses hit the backend, again batched.
  std::filesystem::remove(cache / (request_digest(cfg, req) + "-1.json"));
  std::filesystem::remove(cache / (request_digest(cfg, req) + "-2.json"));
  const auto refill = gw.cached_sample(cfg, req, 4);
  CHECK(refill[1].text == "reply-1");
  CHECK(refill[2].text == "reply-2");
  CHECK(backend->call_count() == 2);
  std::filesystem::remove_all(cache);
}

TEST_CASE("an empty cache directory disables caching") {
  Gateway gw;
  const auto cfg = scripted_endpoint();
  auto backend = echo_backend();
  gw.register_endpoint(cfg, backend);
  const auto req = simple_request("x");
  gw.cached_complete(cfg, req, 0);
  gw.cached_complete(cfg, req, 0);
  CHECK(backend->call_count() == 2);
}

TEST_CASE("transient failures are retried and permanent ones surface") {
  ScriptRule rule;
  rule.name = "flaky";
  rule.match = [](const std::string&) { return true; };
  rule.fail_first = 2;
  rule.respond = [](const std::string&, int) { return std::string("ok"); };

  SUBCASE("enough retries recover") {
    Gateway gw;
    auto backend = std::make_shared<ScriptedBackend>(std::vector<ScriptRule>{rule});
    auto cfg = scripted_endpoint();
    cfg.max_retries = 3;
    gw.register_endpoint(cfg, backend);
    CHECK(gw.chat_complete(cfg, simple_request("q")).completions[0].text == "ok");
    CHECK(backend->call_count() == 3);
  }

  SUBCASE("exhausted retries tag the error with the request digest") {
    Gateway gw;
    auto backend = std::make_shared<ScriptedBackend>(std::vector<ScriptRule>{rule});
    auto cfg = scripted_endpoint();
    cfg.max_retries = 1;
    gw.register_endpoint(cfg, backend);
    const auto req = simple_request("q");
    const std::string digest12 = request_digest(cfg, req).substr(0, 12);
    CHECK_THROWS_WITH_AS(gw.chat_complete(cfg, req), doctest::Contains(digest12.c_str()),
                         TransportError);
    CHECK(backend->call_count() == 2);
  }
}

TEST_CASE("per-endpoint parallelism is capped") {
  Gateway gw;
  auto backend = echo_backend();
  backend->set_latency(std::chrono::milliseconds(25));
  auto cfg = scripted_endpoint();
  cfg.max_parallel = 2;
  gw.register_endpoint(cfg, backend);

  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&gw, &cfg, i] {
      gw.chat_complete(cfg, simple_request("q" + std::to_string(i)));
    });
  for (auto& t : threads) t.join();
  CHECK(backend->call_count() == 8);
  CHECK(backend->max_inflight_seen() <= 2);
}

TEST_CASE("unknown url schemes are rejected at registration") {
  Gateway gw;
  auto cfg = scripted_endpoint();
  cfg.base_url = "ftp://nope";
  CHECK_THROWS_AS(gw.register_endpoint(cfg), std::invalid_argument);
}

TEST_CASE("http backend speaks the chat-completions protocol") {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::atomic<int> fail_next{0};
  std::string last_auth;
  std::string last_body;
  std::mutex observed_mu;

  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    hits.fetch_add(1);
    {
      std::lock_guard lock(observed_mu);
      last_auth = req.get_header_value("Authorization");
      last_body = req.body;
    }
    if (fail_next.load() > 0) {
      fail_next.fetch_sub(1);
      res.status = 500;
      res.set_content("boom", "text/plain");
      return;
    }
    const json body = json::parse(req.body);
    const int n = body.value("n", 1);
    json choices = json::array();
    for (int i = 0; i < n; ++i) {
      choices.push_back({{"message", {{"role", "assistant"}, {"content", "answer " + std::to_string(i)}}},
                         {"finish_reason", i == 0 ? "stop" : "length"}});
    }
    res.set_content(
        json{{"choices", choices}, {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 9}}}}
            .dump(),
        "application/json");
  });

  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.model_name = "served-model";
  cfg.api_key_env = "STEPCRITIC_TEST_KEY";
  cfg.max_retries = 2;
  cfg.backoff_initial_ms = 1;
  setenv("STEPCRITIC_TEST_KEY", "sekrit", 1);

  Gateway gw;
  gw.register_endpoint(cfg);

  SUBCASE("round trip with auth, params, and usage") {
    auto req = simple_request("ping", {0.6, 0.9, 64, 1});
    req.system = "sys";
    const auto resp = gw.chat_complete(cfg, req);
    REQUIRE(resp.completions.size() == 1);
    CHECK(resp.completions[0].text == "answer 0");
    CHECK_FALSE(resp.completions[0].truncated);
    CHECK(resp.usage.prompt_tokens == 7);
    CHECK(resp.usage.completion_tokens == 9);
    std::lock_guard lock(observed_mu);
    CHECK(last_auth == "Bearer sekrit");
    const json sent = json::parse(last_body);
    CHECK(sent.at("model") == "served-model");
    CHECK(sent.at("temperature") == 0.6);
    CHECK(sent.at("top_p") == 0.9);
    CHECK(sent.at("max_tokens") == 64);
    CHECK(sent.at("messages")[0].at("role") == "system");
    CHECK(sent.at("messages")[1].at("content") == "ping");
  }

  SUBCASE("n completions map to ordinals and length means truncated") {
    auto req = simple_request("multi", {1.0, 0.9, 64, 3});
    const auto resp = gw.chat_complete(cfg, req);
    REQUIRE(resp.completions.size() == 3);
    CHECK(resp.completions[1].text == "answer 1");
    CHECK_FALSE(resp.completions[0].truncated);
    CHECK(resp.completions[1].truncated);
    CHECK(resp.completions[2].truncated);
  }

  SUBCASE("server errors are retried") {
    fail_next.store(2);
    const auto resp = gw.chat_complete(cfg, simple_request("retry me"));
    CHECK(resp.completions[0].text == "answer 0");
    CHECK(hits.load() == 3);
  }

  SUBCASE("retries exhausted surfaces the status") {
    fail_next.store(10);
    CHECK_THROWS_AS(gw.chat_complete(cfg, simple_request("always failing")), HttpStatusError);
    fail_next.store(0);
  }

  server.stop();
  listener.join();
  unsetenv("STEPCRITIC_TEST_KEY");
}

TEST_CASE("http transport failures become TransportError") {
  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:1/v1";  // nothing listens here
  cfg.model_name = "m";
  cfg.max_retries = 0;
  cfg.backoff_initial_ms = 1;
  cfg.timeout_s = 2.0;
  Gateway gw;
  gw.register_endpoint(cfg);
  CHECK_THROWS_AS(gw.chat_complete(cfg, simple_request("q")), TransportError);
}

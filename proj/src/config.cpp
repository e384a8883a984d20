#include "stepcritic/config.hpp"

#include <fstream>
#include <set>

namespace stepcritic::config {

using nlohmann::json;

gateway::SamplingParams SamplingSettings::to_params() const {
  gateway::SamplingParams p;
  p.temperature = temperature;
  p.top_p = top_p;
  p.max_new_tokens = max_new_tokens;
  p.n = n;
  return p;
}

gateway::EndpointConfig EndpointSettings::to_endpoint(gateway::Role role) const {
  gateway::EndpointConfig e;
  e.base_url = base_url;
  e.model_name = model;
  e.role = role;
  e.api_key_env = api_key_env;
  e.timeout_s = timeout_s;
  e.max_retries = max_retries;
  e.max_parallel = max_parallel;
  e.backoff_initial_ms = backoff_initial_ms;
  return e;
}

namespace {

// Strict object binder: every key must be consumed, so typos surface as
// errors instead of silently keeping defaults.
class Binder {
 public:
  Binder(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected a JSON object");
  }

  ~Binder() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + "." + key + ": unknown key");
    }
  }

  template <typename T>
  void bind(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void bind_sampling(const json& j, const std::string& path, SamplingSettings& out) {
  Binder b(j, path);
  b.bind("temperature", out.temperature);
  b.bind("top_p", out.top_p);
  b.bind("max_new_tokens", out.max_new_tokens);
  b.bind("n", out.n);
}

void bind_endpoint(const json& j, const std::string& path, EndpointSettings& out) {
  Binder b(j, path);
  b.bind("base_url", out.base_url);
  b.bind("model", out.model);
  b.bind("api_key_env", out.api_key_env);
  b.bind("timeout_s", out.timeout_s);
  b.bind("max_retries", out.max_retries);
  b.bind("max_parallel", out.max_parallel);
  b.bind("backoff_initial_ms", out.backoff_initial_ms);
}

void bind_config(const json& j, AppConfig& cfg) {
  Binder b(j, "config");
  b.bind("seed", cfg.seed);
  b.bind("cache_dir", cfg.cache_dir);
  b.bind("assets_dir", cfg.assets_dir);
  b.bind("failure_threshold", cfg.failure_threshold);
  b.bind("max_workers", cfg.max_workers);

  if (b.has("endpoints")) {
    Binder eps(b.at("endpoints"), "config.endpoints");
    if (eps.has("teacher")) bind_endpoint(eps.at("teacher"), "config.endpoints.teacher", cfg.teacher);
    if (eps.has("critic")) bind_endpoint(eps.at("critic"), "config.endpoints.critic", cfg.critic);
    if (eps.has("generators")) {
      const json& gens = eps.at("generators");
      if (!gens.is_array()) throw ConfigError("config.endpoints.generators: expected an array");
      cfg.generators.clear();
      for (std::size_t i = 0; i < gens.size(); ++i) {
        EndpointSettings e;
        bind_endpoint(gens[i], "config.endpoints.generators[" + std::to_string(i) + "]", e);
        cfg.generators.push_back(std::move(e));
      }
    }
  }

  if (b.has("synthesize_seed")) {
    Binder s(b.at("synthesize_seed"), "config.synthesize_seed");
    s.bind("input", cfg.synthesize_seed.input);
    s.bind("output_dir", cfg.synthesize_seed.output_dir);
    if (s.has("initial"))
      bind_sampling(s.at("initial"), "config.synthesize_seed.initial", cfg.synthesize_seed.initial);
    if (s.has("indepth"))
      bind_sampling(s.at("indepth"), "config.synthesize_seed.indepth", cfg.synthesize_seed.indepth);
    if (s.has("merge"))
      bind_sampling(s.at("merge"), "config.synthesize_seed.merge", cfg.synthesize_seed.merge);
  }

  if (b.has("mc_label")) {
    Binder s(b.at("mc_label"), "config.mc_label");
    s.bind("input", cfg.mc_label.input);
    s.bind("output_dir", cfg.mc_label.output_dir);
    s.bind("rollouts_per_step", cfg.mc_label.rollouts_per_step);
    s.bind("solutions_per_problem", cfg.mc_label.solutions_per_problem);
    s.bind("threshold", cfg.mc_label.threshold);
    if (s.has("sampling"))
      bind_sampling(s.at("sampling"), "config.mc_label.sampling", cfg.mc_label.sampling);
  }

  if (b.has("export_sft")) {
    Binder s(b.at("export_sft"), "config.export_sft");
    s.bind("input", cfg.export_sft.input);
    s.bind("output_dir", cfg.export_sft.output_dir);
  }

  if (b.has("export_rl")) {
    Binder s(b.at("export_rl"), "config.export_rl");
    s.bind("input", cfg.export_rl.input);
    s.bind("output_dir", cfg.export_rl.output_dir);
    s.bind("min_steps", cfg.export_rl.min_steps);
    s.bind("max_steps", cfg.export_rl.max_steps);
    s.bind("max_prompt_tokens", cfg.export_rl.max_prompt_tokens);
  }

  if (b.has("evaluate")) {
    Binder s(b.at("evaluate"), "config.evaluate");
    if (s.has("benchmarks")) {
      const json& benches = s.at("benchmarks");
      if (!benches.is_array()) throw ConfigError("config.evaluate.benchmarks: expected an array");
      cfg.evaluate.benchmarks.clear();
      for (std::size_t i = 0; i < benches.size(); ++i) {
        const std::string path = "config.evaluate.benchmarks[" + std::to_string(i) + "]";
        Binder e(benches[i], path);
        BenchmarkEntry entry;
        e.bind("name", entry.name);
        e.bind("path", entry.path);
        cfg.evaluate.benchmarks.push_back(std::move(entry));
      }
    }
    s.bind("output_dir", cfg.evaluate.output_dir);
    s.bind("k_samples", cfg.evaluate.k_samples);
    s.bind("transcript_dir", cfg.evaluate.transcript_dir);
    if (s.has("sampling"))
      bind_sampling(s.at("sampling"), "config.evaluate.sampling", cfg.evaluate.sampling);
  }

  if (b.has("vote")) {
    Binder s(b.at("vote"), "config.vote");
    s.bind("input", cfg.vote.input);
    s.bind("output_dir", cfg.vote.output_dir);
    s.bind("candidates", cfg.vote.candidates);
    if (s.has("generate"))
      bind_sampling(s.at("generate"), "config.vote.generate", cfg.vote.generate);
    if (s.has("judge")) bind_sampling(s.at("judge"), "config.vote.judge", cfg.vote.judge);
  }

  if (b.has("refine")) {
    Binder s(b.at("refine"), "config.refine");
    s.bind("input", cfg.refine.input);
    s.bind("output_dir", cfg.refine.output_dir);
    s.bind("generate_max_new_tokens", cfg.refine.generate_max_new_tokens);
    s.bind("refine_max_new_tokens", cfg.refine.refine_max_new_tokens);
    if (s.has("judge")) bind_sampling(s.at("judge"), "config.refine.judge", cfg.refine.judge);
  }

  if (b.has("stats")) {
    Binder s(b.at("stats"), "config.stats");
    s.bind("seed_critiques", cfg.stats.seed_critiques);
    s.bind("labeled", cfg.stats.labeled);
    s.bind("output_dir", cfg.stats.output_dir);
  }
}

void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + spec + "' must look like a.b.c=value");
  const std::string dotted = spec.substr(0, eq);
  const std::string raw_value = spec.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw_value);
  } catch (const json::exception&) {
    value = raw_value;  // unparseable JSON reads as a plain string
  }

  json* node = &doc;
  std::size_t begin = 0;
  for (;;) {
    const auto dot = dotted.find('.', begin);
    const std::string key = dotted.substr(begin, dot == std::string::npos ? dot : dot - begin);
    if (key.empty()) throw ConfigError("override '" + spec + "' has an empty path segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
    node = &(*node)[key];
    begin = dot + 1;
  }
}

void validate_sampling(const SamplingSettings& s, const std::string& path,
                       std::vector<std::string>& out) {
  try {
    gateway::validate(s.to_params());
  } catch (const std::invalid_argument& e) {
    out.push_back(path + ": " + e.what());
  }
}

void require_endpoint(const EndpointSettings& e, const std::string& path,
                      std::vector<std::string>& out) {
  if (e.base_url.empty()) out.push_back(path + ".base_url: required");
  if (e.model.empty()) out.push_back(path + ".model: required");
  if (e.max_parallel < 1) out.push_back(path + ".max_parallel: must be >= 1");
  if (e.max_retries < 0) out.push_back(path + ".max_retries: must be >= 0");
  if (e.timeout_s <= 0) out.push_back(path + ".timeout_s: must be > 0");
}

}  // namespace

AppConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
  }
  for (const auto& o : overrides) apply_override(doc, o);

  AppConfig cfg;
#ifdef STEPCRITIC_DEFAULT_ASSET_DIR
  cfg.assets_dir = STEPCRITIC_DEFAULT_ASSET_DIR;
#endif
  const std::string default_assets = cfg.assets_dir;
  bind_config(doc, cfg);
  if (cfg.assets_dir.empty()) cfg.assets_dir = default_assets;
  return cfg;
}

std::vector<std::string> validate_for(const AppConfig& cfg, const std::string& subcommand) {
  std::vector<std::string> out;
  if (cfg.max_workers < 1) out.push_back("max_workers: must be >= 1");
  if (cfg.failure_threshold < 0.0 || cfg.failure_threshold > 1.0)
    out.push_back("failure_threshold: must be in [0, 1]");
  if (cfg.assets_dir.empty()) out.push_back("assets_dir: required");

  const bool needs_generator =
      subcommand == "mc-label" || subcommand == "vote" || subcommand == "refine";
  if (needs_generator) {
    if (cfg.generators.empty()) {
      out.push_back("endpoints.generators: at least one generator endpoint required");
    } else {
      for (std::size_t i = 0; i < cfg.generators.size(); ++i)
        require_endpoint(cfg.generators[i], "endpoints.generators[" + std::to_string(i) + "]",
                         out);
    }
  }
  const bool needs_critic =
      subcommand == "evaluate" || subcommand == "vote" || subcommand == "refine";
  if (needs_critic) require_endpoint(cfg.critic, "endpoints.critic", out);

  if (subcommand == "synthesize-seed") {
    require_endpoint(cfg.teacher, "endpoints.teacher", out);
    if (cfg.synthesize_seed.input.empty()) out.push_back("synthesize_seed.input: required");
    validate_sampling(cfg.synthesize_seed.initial, "synthesize_seed.initial", out);
    validate_sampling(cfg.synthesize_seed.indepth, "synthesize_seed.indepth", out);
    validate_sampling(cfg.synthesize_seed.merge, "synthesize_seed.merge", out);
  } else if (subcommand == "mc-label") {
    if (cfg.mc_label.input.empty()) out.push_back("mc_label.input: required");
    if (cfg.mc_label.rollouts_per_step < 1)
      out.push_back("mc_label.rollouts_per_step: must be >= 1");
    if (cfg.mc_label.solutions_per_problem < 1)
      out.push_back("mc_label.solutions_per_problem: must be >= 1");
    if (cfg.mc_label.threshold < 0.0 || cfg.mc_label.threshold >= 1.0)
      out.push_back("mc_label.threshold: must be in [0, 1)");
    validate_sampling(cfg.mc_label.sampling, "mc_label.sampling", out);
  } else if (subcommand == "export-sft") {
    if (cfg.export_sft.input.empty()) out.push_back("export_sft.input: required");
  } else if (subcommand == "export-rl") {
    if (cfg.export_rl.input.empty()) out.push_back("export_rl.input: required");
    if (cfg.export_rl.min_steps < 1) out.push_back("export_rl.min_steps: must be >= 1");
    if (cfg.export_rl.max_steps < cfg.export_rl.min_steps)
      out.push_back("export_rl.max_steps: must be >= min_steps");
    if (cfg.export_rl.max_prompt_tokens < 1)
      out.push_back("export_rl.max_prompt_tokens: must be >= 1");
  } else if (subcommand == "evaluate") {
    if (cfg.evaluate.benchmarks.empty())
      out.push_back("evaluate.benchmarks: at least one benchmark required");
    for (std::size_t i = 0; i < cfg.evaluate.benchmarks.size(); ++i) {
      const auto& b = cfg.evaluate.benchmarks[i];
      const std::string p = "evaluate.benchmarks[" + std::to_string(i) + "]";
      if (b.name.empty()) out.push_back(p + ".name: required");
      if (b.path.empty()) out.push_back(p + ".path: required");
    }
    if (cfg.evaluate.k_samples < 1) out.push_back("evaluate.k_samples: must be >= 1");
    validate_sampling(cfg.evaluate.sampling, "evaluate.sampling", out);
  } else if (subcommand == "vote") {
    if (cfg.vote.input.empty()) out.push_back("vote.input: required");
    if (cfg.vote.candidates < 1) out.push_back("vote.candidates: must be >= 1");
    validate_sampling(cfg.vote.generate, "vote.generate", out);
    validate_sampling(cfg.vote.judge, "vote.judge", out);
  } else if (subcommand == "refine") {
    if (cfg.refine.input.empty()) out.push_back("refine.input: required");
    if (cfg.refine.generate_max_new_tokens < 1)
      out.push_back("refine.generate_max_new_tokens: must be >= 1");
    if (cfg.refine.refine_max_new_tokens < 1)
      out.push_back("refine.refine_max_new_tokens: must be >= 1");
    validate_sampling(cfg.refine.judge, "refine.judge", out);
  } else if (subcommand == "stats") {
    if (cfg.stats.seed_critiques.empty() && cfg.stats.labeled.empty())
      out.push_back("stats: set seed_critiques and/or labeled");
  } else if (subcommand == "reward") {
    // stdin/stdout scorer needs nothing beyond defaults
  } else {
    out.push_back("unknown subcommand: " + subcommand);
  }
  return out;
}

namespace {

json sampling_to_json(const SamplingSettings& s) {
  return json{{"temperature", s.temperature},
              {"top_p", s.top_p},
              {"max_new_tokens", s.max_new_tokens},
              {"n", s.n}};
}

json endpoint_to_json(const EndpointSettings& e) {
  return json{{"base_url", e.base_url},
              {"model", e.model},
              {"api_key_env", e.api_key_env},
              {"timeout_s", e.timeout_s},
              {"max_retries", e.max_retries},
              {"max_parallel", e.max_parallel},
              {"backoff_initial_ms", e.backoff_initial_ms}};
}

}  // namespace

json to_json(const AppConfig& cfg) {
  json generators = json::array();
  for (const auto& g : cfg.generators) generators.push_back(endpoint_to_json(g));
  json benchmarks = json::array();
  for (const auto& b : cfg.evaluate.benchmarks)
    benchmarks.push_back(json{{"name", b.name}, {"path", b.path}});

  return json{
      {"seed", cfg.seed},
      {"cache_dir", cfg.cache_dir},
      {"assets_dir", cfg.assets_dir},
      {"failure_threshold", cfg.failure_threshold},
      {"max_workers", cfg.max_workers},
      {"endpoints",
       json{{"teacher", endpoint_to_json(cfg.teacher)},
            {"critic", endpoint_to_json(cfg.critic)},
            {"generators", generators}}},
      {"synthesize_seed",
       json{{"input", cfg.synthesize_seed.input},
            {"output_dir", cfg.synthesize_seed.output_dir},
            {"initial", sampling_to_json(cfg.synthesize_seed.initial)},
            {"indepth", sampling_to_json(cfg.synthesize_seed.indepth)},
            {"merge", sampling_to_json(cfg.synthesize_seed.merge)}}},
      {"mc_label",
       json{{"input", cfg.mc_label.input},
            {"output_dir", cfg.mc_label.output_dir},
            {"rollouts_per_step", cfg.mc_label.rollouts_per_step},
            {"solutions_per_problem", cfg.mc_label.solutions_per_problem},
            {"threshold", cfg.mc_label.threshold},
            {"sampling", sampling_to_json(cfg.mc_label.sampling)}}},
      {"export_sft",
       json{{"input", cfg.export_sft.input}, {"output_dir", cfg.export_sft.output_dir}}},
      {"export_rl",
       json{{"input", cfg.export_rl.input},
            {"output_dir", cfg.export_rl.output_dir},
            {"min_steps", cfg.export_rl.min_steps},
            {"max_steps", cfg.export_rl.max_steps},
            {"max_prompt_tokens", cfg.export_rl.max_prompt_tokens}}},
      {"evaluate",
       json{{"benchmarks", benchmarks},
            {"output_dir", cfg.evaluate.output_dir},
            {"k_samples", cfg.evaluate.k_samples},
            {"sampling", sampling_to_json(cfg.evaluate.sampling)},
            {"transcript_dir", cfg.evaluate.transcript_dir}}},
      {"vote",
       json{{"input", cfg.vote.input},
            {"output_dir", cfg.vote.output_dir},
            {"candidates", cfg.vote.candidates},
            {"generate", sampling_to_json(cfg.vote.generate)},
            {"judge", sampling_to_json(cfg.vote.judge)}}},
      {"refine",
       json{{"input", cfg.refine.input},
            {"output_dir", cfg.refine.output_dir},
            {"judge", sampling_to_json(cfg.refine.judge)},
            {"generate_max_new_tokens", cfg.refine.generate_max_new_tokens},
            {"refine_max_new_tokens", cfg.refine.refine_max_new_tokens}}},
      {"stats",
       json{{"seed_critiques", cfg.stats.seed_critiques},
            {"labeled", cfg.stats.labeled},
            {"output_dir", cfg.stats.output_dir}}},
  };
}

}  // namespace stepcritic::config

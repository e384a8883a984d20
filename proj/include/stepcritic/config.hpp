#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "stepcritic/gateway.hpp"

namespace stepcritic::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SamplingSettings {
  double temperature = 0.7;
  double top_p = 0.9;
  int max_new_tokens = 4096;
  int n = 1;

  gateway::SamplingParams to_params() const;
};

struct EndpointSettings {
  std::string base_url;
  std::string model;
  std::string api_key_env;
  double timeout_s = 120.0;
  int max_retries = 3;
  int max_parallel = 4;
  int backoff_initial_ms = 200;

  gateway::EndpointConfig to_endpoint(gateway::Role role) const;
};

struct BenchmarkEntry {
  std::string name;
  std::string path;
};

// Whole-run configuration: one JSON file with per-subcommand sections.
// Paths are taken as written (typically relative to the working directory).
struct AppConfig {
  std::uint64_t seed = 0;
  std::string cache_dir = "cache";
  std::string assets_dir;  // empty = built-in default asset directory
  double failure_threshold = 0.0;  // failed-item fraction above this exits 3
  int max_workers = 4;

  EndpointSettings teacher;
  EndpointSettings critic;
  std::vector<EndpointSettings> generators;

  struct SynthesizeSeed {
    std::string input;
    std::string output_dir = "out/seed";
    SamplingSettings initial{0.7, 0.9, 8192, 1};
    SamplingSettings indepth{1.0, 0.9, 8192, 16};
    SamplingSettings merge{0.7, 0.9, 8192, 1};
  } synthesize_seed;

  struct McLabel {
    std::string input;
    std::string output_dir = "out/mc";
    int rollouts_per_step = 8;
    int solutions_per_problem = 8;
    double threshold = 0.5;
    SamplingSettings sampling{1.0, 0.9, 4096, 1};
  } mc_label;

  struct ExportSft {
    std::string input;
    std::string output_dir = "out/sft";
  } export_sft;

  struct ExportRl {
    std::string input;
    std::string output_dir = "out/rl";
    int min_steps = 3;
    int max_steps = 12;
    int max_prompt_tokens = 2048;
  } export_rl;

  struct Evaluate {
    std::vector<BenchmarkEntry> benchmarks;
    std::string output_dir = "out/eval";
    int k_samples = 1;
    SamplingSettings sampling{0.6, 0.9, 32768, 1};
    std::string transcript_dir;  // empty = no transcripts
  } evaluate;

  struct Vote {
    std::string input;
    std::string output_dir = "out/vote";
    int candidates = 8;
    SamplingSettings generate{1.0, 0.9, 4096, 1};
    SamplingSettings judge{0.6, 0.9, 32768, 1};
  } vote;

  struct Refine {
    std::string input;
    std::string output_dir = "out/refine";
    SamplingSettings judge{0.6, 0.9, 32768, 1};
    int generate_max_new_tokens = 4096;
    int refine_max_new_tokens = 4096;
  } refine;

  struct Stats {
    std::string seed_critiques;
    std::string labeled;
    std::string output_dir = "out/stats";
  } stats;
};

// Parses a config file and applies "--set a.b.c=value" overrides on top
// (value parsed as JSON when possible, else taken as a string). A missing
// `path` (empty) starts from defaults. Unknown keys and type mismatches
// throw ConfigError naming the offending field.
AppConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

// Per-subcommand validation; returns "field: problem" messages, empty when
// the config is usable for that subcommand.
std::vector<std::string> validate_for(const AppConfig& cfg, const std::string& subcommand);

// Full snapshot with defaults materialized; embedded in run manifests.
nlohmann::json to_json(const AppConfig& cfg);

}  // namespace stepcritic::config

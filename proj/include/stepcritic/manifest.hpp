#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "stepcritic/gateway.hpp"

namespace stepcritic::manifest {

// Replayable record of one CLI run: the command, the full config snapshot,
// item counts, output digests and a digest over the cache keys the run
// touched. Deliberately timestamp-free — a rerun with a warm cache must
// produce the identical manifest byte for byte.
struct RunManifest {
  std::string command;
  nlohmann::json config_snapshot;
  std::map<std::string, long> counts;
  std::map<std::string, std::string> output_digests;  // file name -> sha256
  long cache_entries = 0;
  std::string cache_digest;  // sha256 over sorted touched cache keys
  std::uint64_t seed = 0;
  bool partial = false;  // run was interrupted
};

std::string file_sha256(const std::filesystem::path& path);

// Folds gateway cache stats into the manifest (entry count + key digest).
// Hit/miss counts are deliberately left out: they differ between a cold and
// a warm run of the same work.
void attach_cache_stats(RunManifest& m, const gateway::Gateway::CacheStats& stats);

nlohmann::json to_json(const RunManifest& m);

// Writes dir/manifest.json (pretty-printed, sorted keys, trailing newline).
void write(const RunManifest& m, const std::filesystem::path& dir);

}  // namespace stepcritic::manifest

#include "stepcritic/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include "stepcritic/hash.hpp"

namespace stepcritic::manifest {

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for hashing: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hash::sha256_hex(data);
}

void attach_cache_stats(RunManifest& m, const gateway::Gateway::CacheStats& stats) {
  m.cache_entries = static_cast<long>(stats.keys_touched.size());
  std::string joined;
  for (const auto& key : stats.keys_touched) {  // std::set iterates sorted
    joined += key;
    joined += '\n';
  }
  m.cache_digest = hash::sha256_hex(joined);
}

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config"] = m.config_snapshot;
  j["counts"] = m.counts;
  j["outputs"] = m.output_digests;
  j["cache_entries"] = m.cache_entries;
  j["cache_digest"] = m.cache_digest;
  j["seed"] = m.seed;
  j["partial"] = m.partial;
  return j;
}

void write(const RunManifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "manifest.json";
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << to_json(m).dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace stepcritic::manifest

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace stepcritic::hash {

// Lowercase hex SHA-256 of the exact bytes given.
std::string sha256_hex(std::string_view bytes);

// Deterministic 64-bit seed derived from a run seed, a scope string (problem
// id, step key, ...) and an index. Identical inputs give identical seeds on
// every platform; used to make per-item RNG draws replayable.
std::uint64_t stable_seed(std::uint64_t run_seed, std::string_view scope, std::uint64_t index);

}  // namespace stepcritic::hash

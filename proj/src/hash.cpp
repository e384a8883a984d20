#include "stepcritic/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace stepcritic::hash {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("EVP_Digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

namespace {

// FNV-1a, then a splitmix64 finalizer so nearby inputs scatter.
std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t stable_seed(std::uint64_t run_seed, std::string_view scope, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a(h, &run_seed, sizeof(run_seed));
  h = fnv1a(h, scope.data(), scope.size());
  h = fnv1a(h, &index, sizeof(index));
  return splitmix64(h);
}

}  // namespace stepcritic::hash

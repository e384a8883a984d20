#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace stepcritic::jsonl {

// A line that failed to parse, with its 1-based line number.
struct LineError {
  int line = 0;
  std::string message;
};

// Reads a JSONL file: one JSON object per line, blank lines skipped.
// Malformed lines are collected into `errors` (when given) instead of
// aborting the read. Throws std::runtime_error when the file cannot be
// opened.
std::vector<nlohmann::json> read_file(const std::filesystem::path& path,
                                      std::vector<LineError>* errors = nullptr);

// Writes one compact JSON object per line. Keys serialize in sorted order,
// so identical values produce identical bytes.
class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);
  void write(const nlohmann::json& j);
  // Flush and release the file; must precede hashing the file's bytes.
  void close();
  long count() const { return count_; }

 private:
  std::ofstream out_;
  long count_ = 0;
};

}  // namespace stepcritic::jsonl

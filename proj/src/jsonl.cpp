#include "stepcritic/jsonl.hpp"

#include <stdexcept>

namespace stepcritic::jsonl {

std::vector<nlohmann::json> read_file(const std::filesystem::path& path,
                                      std::vector<LineError>* errors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      if (!j.is_object()) throw std::runtime_error("line is not a JSON object");
      out.push_back(std::move(j));
    } catch (const std::exception& e) {
      if (errors) {
        errors->push_back(LineError{line_no, e.what()});
      } else {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                                 e.what());
      }
    }
  }
  return out;
}

Writer::Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
}

void Writer::write(const nlohmann::json& j) {
  out_ << j.dump() << '\n';
  if (!out_) throw std::runtime_error("short write to JSONL output");
  ++count_;
}

void Writer::close() {
  if (!out_.is_open()) return;
  out_.close();
  if (out_.fail()) throw std::runtime_error("short write to JSONL output");
}

}  // namespace stepcritic::jsonl

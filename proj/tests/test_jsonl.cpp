#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "stepcritic/jsonl.hpp"

using namespace stepcritic;
using nlohmann::json;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("read_file parses objects, skips blanks, strips CR") {
  const auto path = temp_file("jsonl_read.jsonl");
  {
    std::ofstream out(path, std::ios::binary);
    out << "{\"a\": 1}\n"
        << "\n"
        << "{\"b\": 2}\r\n"
        << "   \n"
        << "{\"c\": 3}";  // no trailing newline
  }
  const auto rows = jsonl::read_file(path);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0]["a"] == 1);
  CHECK(rows[1]["b"] == 2);
  CHECK(rows[2]["c"] == 3);
  std::filesystem::remove(path);
}

TEST_CASE("read_file collects malformed lines with 1-based numbers") {
  const auto path = temp_file("jsonl_bad.jsonl");
  {
    std::ofstream out(path, std::ios::binary);
    out << "{\"ok\": true}\n"
        << "not json\n"
        << "[1, 2]\n"  // valid JSON but not an object
        << "{\"also_ok\": true}\n";
  }
  std::vector<jsonl::LineError> errors;
  const auto rows = jsonl::read_file(path, &errors);
  CHECK(rows.size() == 2);
  REQUIRE(errors.size() == 2);
  CHECK(errors[0].line == 2);
  CHECK(errors[1].line == 3);
  std::filesystem::remove(path);
}

TEST_CASE("read_file without an error sink throws on the first bad line") {
  const auto path = temp_file("jsonl_throw.jsonl");
  {
    std::ofstream out(path, std::ios::binary);
    out << "{\"ok\": 1}\nbroken\n";
  }
  CHECK_THROWS_WITH_AS(jsonl::read_file(path), doctest::Contains(":2"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("read_file throws when the file is missing") {
  CHECK_THROWS_AS(jsonl::read_file(temp_file("does_not_exist.jsonl")), std::runtime_error);
}

TEST_CASE("writer emits sorted-key compact lines") {
  const auto path = temp_file("jsonl_write.jsonl");
  {
    jsonl::Writer w(path);
    w.write(json{{"zeta", 1}, {"alpha", 2}});
    w.write(json{{"n", nullptr}});
    CHECK(w.count() == 2);
  }
  CHECK(slurp(path) == "{\"alpha\":2,\"zeta\":1}\n{\"n\":null}\n");
  const auto rows = jsonl::read_file(path);
  CHECK(rows.size() == 2);
  std::filesystem::remove(path);
}

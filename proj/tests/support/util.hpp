#ifndef PRESCREEN_TESTS_UTIL_HPP
#define PRESCREEN_TESTS_UTIL_HPP

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "prescreen/error.hpp"

namespace testsupport {

// Scratch directory, wiped on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "prescreen-XXXXXX").string();
    REQUIRE(mkdtemp(tmpl.data()) != nullptr);
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

template <class Fn>
void expect_error(Fn&& fn, prescreen::ErrorKind kind) {
  std::string expected = prescreen::to_string(kind);
  try {
    fn();
    FAIL_CHECK("expected " << expected << ", got no error");
  } catch (const prescreen::Error& e) {
    CHECK_MESSAGE(e.kind() == kind, "expected " << expected << ", got "
                                                << std::string(e.kind_name())
                                                << ": " << e.what());
  }
}

inline std::string toy_path(const std::string& name) {
  return std::string(PRESCREEN_TOY_DIR) + "/" + name;
}

inline std::string golden_path(const std::string& name) {
  return std::string(PRESCREEN_GOLDEN_DIR) + "/" + name;
}

}  // namespace testsupport

#endif  // PRESCREEN_TESTS_UTIL_HPP

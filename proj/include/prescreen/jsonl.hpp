#ifndef PRESCREEN_JSONL_HPP
#define PRESCREEN_JSONL_HPP

#include <cstdint>
#include <fstream>
#include <string>

#include "json.hpp"
#include "prescreen/error.hpp"

namespace prescreen::jsonl {

// ordered_json keeps insertion order, which pins the byte layout of
// everything we emit.
using json = nlohmann::ordered_json;

inline std::ifstream open_input(const std::string& path,
                                bool binary = false) {
  std::ifstream in(path, binary ? std::ios::in | std::ios::binary
                                : std::ios::in);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path,
                                 bool binary = false) {
  std::ofstream out(path, binary ? std::ios::out | std::ios::binary
                                 : std::ios::out);
  if (!out) fail(ErrorKind::MissingFile, "cannot write " + path);
  return out;
}

// Calls fn(record, line_number) for every non-empty line.
template <class Fn>
void for_each(const std::string& path, Fn&& fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ParseError,
           path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    fn(record, lineno);
  }
}

inline const json& field(const json& record, const char* key,
                         const std::string& where) {
  auto it = record.find(key);
  if (it == record.end())
    fail(ErrorKind::ParseError, where + ": missing field \"" + key + "\"");
  return *it;
}

inline std::string str_field(const json& record, const char* key,
                             const std::string& where) {
  const json& v = field(record, key, where);
  if (!v.is_string())
    fail(ErrorKind::ParseError, where + ": field \"" + key + "\" must be a string");
  return v.get<std::string>();
}

inline std::uint64_t uint_field(const json& record, const char* key,
                                const std::string& where) {
  const json& v = field(record, key, where);
  if (!v.is_number_unsigned())
    fail(ErrorKind::ParseError,
         where + ": field \"" + key + "\" must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::string where(const std::string& path, std::size_t lineno) {
  return path + ":" + std::to_string(lineno);
}

}  // namespace prescreen::jsonl

#endif  // PRESCREEN_JSONL_HPP

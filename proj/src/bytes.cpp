#include "prescreen/bytes.hpp"

#include <fstream>

namespace prescreen::bytes {

Buffer read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path);
  in.seekg(0, std::ios::end);
  auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  Buffer buffer(static_cast<std::size_t>(size));
  if (size > 0 &&
      !in.read(reinterpret_cast<char*>(buffer.data()), size))
    fail(ErrorKind::MissingFile, "cannot read " + path);
  return buffer;
}

void write_file(const std::string& path, const Buffer& buffer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::MissingFile, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size()));
  if (!out) fail(ErrorKind::MissingFile, "cannot write " + path);
}

}  // namespace prescreen::bytes

#ifndef PRESCREEN_BYTES_HPP
#define PRESCREEN_BYTES_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "prescreen/error.hpp"

namespace prescreen::bytes {

// All on-disk integers and doubles are little-endian; we only target
// little-endian hosts and let the compiler prove it.
static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

using Buffer = std::vector<std::uint8_t>;

inline void put_raw(Buffer& b, const void* p, std::size_t n) {
  const auto* c = static_cast<const std::uint8_t*>(p);
  b.insert(b.end(), c, c + n);
}

inline void put_u8(Buffer& b, std::uint8_t v) { b.push_back(v); }
inline void put_u32(Buffer& b, std::uint32_t v) { put_raw(b, &v, 4); }
inline void put_u64(Buffer& b, std::uint64_t v) { put_raw(b, &v, 8); }

inline void put_f64(Buffer& b, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(b, bits);
}

// LEB128: 7 bits per byte, high bit marks continuation.
inline void put_uvarint(Buffer& b, std::uint64_t v) {
  while (v >= 0x80) {
    b.push_back(static_cast<std::uint8_t>(v) | 0x80);
    v >>= 7;
  }
  b.push_back(static_cast<std::uint8_t>(v));
}

// Bounds-checked cursor; underflow throws the configured error kind so
// the caller decides whether truncation means CorruptIndex, CorruptModel
// or plain ParseError.
class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size, ErrorKind kind,
         std::string what)
      : p_(data), end_(data + size), kind_(kind), what_(std::move(what)) {}

  void get_raw(void* out, std::size_t n) {
    if (static_cast<std::size_t>(end_ - p_) < n)
      fail(kind_, what_ + ": truncated");
    std::memcpy(out, p_, n);
    p_ += n;
  }

  std::uint8_t get_u8() {
    std::uint8_t v;
    get_raw(&v, 1);
    return v;
  }
  std::uint32_t get_u32() {
    std::uint32_t v;
    get_raw(&v, 4);
    return v;
  }
  std::uint64_t get_u64() {
    std::uint64_t v;
    get_raw(&v, 8);
    return v;
  }
  double get_f64() {
    std::uint64_t bits = get_u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::uint64_t get_uvarint() {
    std::uint64_t v = 0;
    for (unsigned shift = 0; shift < 64; shift += 7) {
      std::uint8_t byte = get_u8();
      v |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
      if (!(byte & 0x80)) return v;
    }
    fail(kind_, what_ + ": varint overruns 64 bits");
  }

  std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }
  bool done() const { return p_ == end_; }

  void expect_done() {
    if (!done()) fail(kind_, what_ + ": trailing bytes");
  }

 private:
  const std::uint8_t* p_;
  const std::uint8_t* end_;
  ErrorKind kind_;
  std::string what_;
};

Buffer read_file(const std::string& path);
void write_file(const std::string& path, const Buffer& buffer);

}  // namespace prescreen::bytes

#endif  // PRESCREEN_BYTES_HPP

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace volscan {

// Error taxonomy. The CLI maps these onto its exit-code contract:
// ValueError/ShapeError -> 1, IoError -> 2, anything else -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValueError : Error {
  using Error::Error;
};
struct ShapeError : ValueError {
  using ValueError::ValueError;
};
struct IoError : Error {
  using Error::Error;
};
struct StateError : Error {
  using Error::Error;
};
struct InternalError : Error {
  using Error::Error;
};

// Worker-count cap from VOLSCAN_THREADS; defaults to 1 for strict determinism.
std::size_t worker_threads();

// Little-endian binary encoding helpers (host-order independent).
inline void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(char(v & 0xff));
  buf.push_back(char(v >> 8));
}
inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  __builtin_memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

// Cursor-based reader over a loaded byte buffer; throws IoError on truncation.
class ByteReader {
 public:
  ByteReader(const std::string& buf, std::string what)
      : buf_(buf), what_(std::move(what)) {}

  std::uint8_t u8() { return std::uint8_t(take(1)[0]); }
  std::uint16_t u16() {
    const char* p = take(2);
    return std::uint16_t(std::uint8_t(p[0])) | std::uint16_t(std::uint8_t(p[1])) << 8;
  }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(p[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(p[i])) << (8 * i);
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    __builtin_memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) { return std::string(take(n), n); }
  void read_f32(float* dst, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = f32();
  }
  bool exhausted() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > buf_.size())
      throw IoError(what_ + ": truncated (need " + std::to_string(n) + " bytes at offset " +
                    std::to_string(pos_) + ", have " + std::to_string(buf_.size() - pos_) + ")");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);

// All file outputs go through write-to-temp + rename so failures never leave
// partial files behind.
void atomic_write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace volscan

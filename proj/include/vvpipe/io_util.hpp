#pragma once

#include <atomic>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <thread>

#include "vvpipe/common.hpp"

namespace vvpipe {

// Little-endian binary primitives. Values are serialized byte by byte so the
// formats are identical regardless of host endianness.

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_i32(std::ostream& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

inline void put_f32(std::ostream& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError("unexpected end of stream reading u32");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw FormatError("unexpected end of stream reading u64");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

inline std::int32_t get_i32(std::istream& in) {
  return static_cast<std::int32_t>(get_u32(in));
}

inline float get_f32(std::istream& in) {
  return std::bit_cast<float>(get_u32(in));
}

inline double get_f64(std::istream& in) {
  return std::bit_cast<double>(get_u64(in));
}

inline std::string get_string(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) {
    throw FormatError("unexpected end of stream reading string");
  }
  return s;
}

// Bulk float32 little-endian conversion; used on every feature block, so the
// byte-swap path only kicks in on big-endian hosts.
inline void encode_f32_le(const float* src, std::size_t n, char* dst) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, src, n * 4);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = std::bit_cast<std::uint32_t>(src[i]);
      dst[4 * i + 0] = static_cast<char>(v);
      dst[4 * i + 1] = static_cast<char>(v >> 8);
      dst[4 * i + 2] = static_cast<char>(v >> 16);
      dst[4 * i + 3] = static_cast<char>(v >> 24);
    }
  }
}

inline void decode_f32_le(const char* src, std::size_t n, float* dst) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, src, n * 4);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(src + 4 * i);
      std::uint32_t v = std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 |
                        std::uint32_t{b[2]} << 16 | std::uint32_t{b[3]} << 24;
      dst[i] = std::bit_cast<float>(v);
    }
  }
}

// Writes via a temp file and renames, so readers never observe a partial
// artifact. The writer callback receives the open temp stream.
inline void atomic_write_file(
    const std::filesystem::path& path,
    const std::function<void(std::ostream&)>& writer) {
  namespace fs = std::filesystem;
  static std::atomic<std::uint64_t> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1)) + "." +
         std::to_string(static_cast<unsigned long long>(
             std::hash<std::thread::id>{}(std::this_thread::get_id()) %
             100000));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    writer(out);
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace vvpipe

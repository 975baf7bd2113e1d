#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "spdnet/common.hpp"

namespace spdnet {

// ---------------------------------------------------------------------------
// Byte-level primitives for the on-disk formats. Everything is little-endian
// regardless of the host, so files are portable and digests reproducible.
// ---------------------------------------------------------------------------

namespace detail {

inline void append_u64_le(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline void append_f64_le(std::string& buf, double v) {
  append_u64_le(buf, std::bit_cast<std::uint64_t>(v));
}

inline double read_f64_le(const unsigned char* p) {
  return std::bit_cast<double>(read_u64_le(p));
}

}  // namespace detail

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open file for reading: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw InvalidInput("read failed: " + path);
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw InvalidInput("write failed: " + path);
}

/// FNV-1a digest of a byte string; used by tests and tools to compare
/// artifacts without shelling out to an external hash utility.
inline std::uint64_t fnv1a_digest(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace spdnet

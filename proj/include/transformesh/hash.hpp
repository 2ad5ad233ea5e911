// FNV-1a 64-bit content hashing for manifests and instrumentation.
#pragma once
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"

namespace tfm {

inline std::uint64_t fnv1a64(const void* data, size_t len, std::uint64_t h = 14695981039346656037ull) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::vector<double>& values) {
  return fnv1a64(values.data(), values.size() * sizeof(double));
}

inline std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash '" + path + "'");
  char buf[1 << 16];
  std::uint64_t h = 14695981039346656037ull;
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  return h;
}

inline std::string hex64(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace tfm

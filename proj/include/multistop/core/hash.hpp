#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace multistop {

/// 64-bit FNV-1a as 16 hex digits.
inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Hash of a configuration; object keys are sorted by the dump, so equal configs hash equally.
inline std::string config_hash(const nlohmann::json& j) { return fnv1a_hex(j.dump()); }

}  // namespace multistop

#include "metatriage/hash.hpp"

#include <cstdio>

#include "metatriage/rng.hpp"

namespace metatriage {

std::uint64_t hash64(std::string_view text, std::uint64_t seed) {
  constexpr std::uint64_t kOffsetBasis = 0xcbf29ce484222325ULL;
  constexpr std::uint64_t kPrime = 0x100000001b3ULL;
  std::uint64_t h = kOffsetBasis ^ splitmix64(seed);
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= kPrime;
  }
  return splitmix64(h);
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace metatriage

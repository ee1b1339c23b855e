#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace metatriage {

/// Name recorded in configs and provenance for the permission hash.
inline constexpr std::string_view kHashName = "fnv1a64-splitmix64";

/// Seeded 64-bit string hash: FNV-1a over the bytes with the seed folded
/// into the offset basis, followed by the splitmix64 finaliser for
/// avalanche. Stable across platforms and releases.
std::uint64_t hash64(std::string_view text, std::uint64_t seed);

/// Lower-case hex rendering of a 64-bit digest.
std::string to_hex(std::uint64_t value);

}  // namespace metatriage

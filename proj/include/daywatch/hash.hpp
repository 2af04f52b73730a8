// Stable 64-bit hashing and seed derivation. std::hash is not guaranteed
// stable across builds, so artifact filenames and per-user RNG streams use
// FNV-1a plus a splitmix64 finalizer instead.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace daywatch {

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a salt (user hash,
// stage id, ...). Same inputs always give the same stream.
constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  return splitmix64(splitmix64(base) ^ salt);
}

// Short stable hex tag for embedding a user id in a filename.
std::string user_file_tag(std::string_view user_id);

}  // namespace daywatch

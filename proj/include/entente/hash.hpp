#pragma once

#include <cstdint>
#include <string_view>

namespace entente {

// 64-bit FNV-1a over raw bytes. Used wherever a hash must be stable across
// platforms and standard library versions (graph relabeling, seed derivation).
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
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

// Seeded bucket hash for node ids, independent of std::hash.
constexpr std::uint64_t stable_hash(std::uint64_t id, std::uint64_t seed) {
  return splitmix64(id ^ splitmix64(seed));
}

// Derives an independent seed for a named randomness domain so that streams
// for data generation, partitioning, init, sampling, noise and attacks never
// overlap even when the user supplies a single master seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view domain,
                                 std::uint64_t index = 0) {
  return splitmix64(base ^ fnv1a64(domain) ^ splitmix64(index + 0x51ed2701ULL));
}

}  // namespace entente

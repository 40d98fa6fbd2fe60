#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedjets {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent streams from one seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream id for a tuple such as (seed, round, client). Order matters.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

inline Rng make_rng(std::initializer_list<std::uint64_t> parts) {
  return Rng(derive_seed(parts));
}

// Stream tags, so that e.g. expert init and gate init never share a stream.
namespace stream {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kPartition = 2;
inline constexpr std::uint64_t kAnchors = 3;
inline constexpr std::uint64_t kTest = 4;
inline constexpr std::uint64_t kPretrain = 5;
inline constexpr std::uint64_t kExpertInit = 6;
inline constexpr std::uint64_t kGateInit = 7;
inline constexpr std::uint64_t kPlan = 8;
inline constexpr std::uint64_t kClient = 9;
inline constexpr std::uint64_t kLocalGate = 10;
inline constexpr std::uint64_t kEnsemble = 11;
}  // namespace stream

}  // namespace fedjets

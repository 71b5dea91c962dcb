#pragma once

#include <cstdint>
#include <random>

namespace masclucb {

using Rng = std::mt19937_64;

// Independent random streams derived from one master seed. Each consumer owns
// its stream, so changing how many draws one consumer makes (e.g. a different
// alpha changes nothing but the conservative mixture) never shifts another.
enum class Stream : std::uint64_t {
  instance = 0x1,
  agent_selection = 0x2,
  noise = 0x3,
  zeta = 0x4,
  topology = 0x5,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Rng make_stream(std::uint64_t master_seed, Stream which) {
  const auto tag = static_cast<std::uint64_t>(which);
  std::seed_seq seq{splitmix64(master_seed), splitmix64(tag ^ 0x5eedULL),
                    splitmix64(master_seed ^ (tag << 32))};
  return Rng(seq);
}

}  // namespace masclucb

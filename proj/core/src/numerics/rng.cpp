#include "couple/numerics/rng.hpp"

namespace couple::numerics {

std::mt19937_64 make_stream(std::uint64_t seed, Stream stream, std::uint64_t counter) {
  const auto s = static_cast<std::uint64_t>(stream);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(counter),
                    static_cast<std::uint32_t>(counter >> 32)};
  return std::mt19937_64(seq);
}

double uniform_open(std::mt19937_64& gen) {
  // 53 random bits mapped to the cell midpoints of a 2^-53 grid: never 0 or 1.
  const std::uint64_t bits = gen() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace couple::numerics

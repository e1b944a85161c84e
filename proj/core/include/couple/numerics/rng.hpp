#pragma once

#include <cstdint>
#include <random>

namespace couple::numerics {

// Independent random concerns. Each is keyed by (run seed, stream, counter) so
// any draw can be regenerated from the run seed and a step number alone.
enum class Stream : std::uint64_t {
  kInit = 1,
  kGumbel = 2,
  kDropout = 3,
  kSampling = 4,
  kPower = 5,
  kShuffle = 6,
  kSynth = 7,
  kSplit = 8,
  kBaseline = 9,
};

std::mt19937_64 make_stream(std::uint64_t seed, Stream stream, std::uint64_t counter = 0);

// Uniform draw in the open interval (0, 1).
double uniform_open(std::mt19937_64& gen);

}  // namespace couple::numerics

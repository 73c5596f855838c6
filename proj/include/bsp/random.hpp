#ifndef BSP_RANDOM_HPP
#define BSP_RANDOM_HPP

#include <cstdint>
#include <random>

namespace bsp {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Named purposes of the random streams drawn from one master seed.
enum class Stream : std::uint64_t { MomentSamples = 1, ExperimentRuns = 2 };

/**
 * Engine for substream `index` of `stream` under `seed`. Substreams depend
 * only on (seed, stream, index), never on scheduling.
 */
inline std::mt19937_64 substream_engine(std::uint64_t seed, Stream stream, std::uint64_t index) {
  const std::uint64_t s = mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ index);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace bsp

#endif  // BSP_RANDOM_HPP

#pragma once

#include <cstdint>
#include <random>

namespace rsmp {

using Engine = std::mt19937_64;

/// Disjoint random substreams of one scenario. Each draws from its own engine.
enum class Substream : std::uint64_t {
    regime = 0,
    poisson = 1,
    brownian = 2,
};

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Counter-based seed splitting.
///
///   path_seed(master, k)      = splitmix64(splitmix64(master) + k)
///   stream_seed(path_seed, s) = splitmix64(path_seed ^ splitmix64(s + 1))
///
/// The result only depends on (master, k, s), so scenarios can be generated in any
/// order or on any number of threads and still be bit-identical.
constexpr std::uint64_t path_seed(std::uint64_t master, std::uint64_t path_index) noexcept {
    return splitmix64(splitmix64(master) + path_index);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, Substream s) noexcept {
    return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(s) + 1));
}

inline Engine make_engine(std::uint64_t seed, Substream s) {
    return Engine(stream_seed(seed, s));
}

}  // namespace rsmp

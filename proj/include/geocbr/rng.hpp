#ifndef GEOCBR_RNG_HPP
#define GEOCBR_RNG_HPP

#include <cstdint>
#include <random>

namespace geocbr {

using Rng = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace detail

/// Mixes a run seed with stream coordinates into an independent seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
    using detail::splitmix64;
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

}  // namespace geocbr

#endif  // GEOCBR_RNG_HPP

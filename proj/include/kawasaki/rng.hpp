#ifndef KAWASAKI_RNG_HPP
#define KAWASAKI_RNG_HPP

// Seeding rules. Every replica gets its own mt19937_64 whose seed is
// splitmix64(master + golden * stream), with stream = (beta_index << 32) | replica.
// The map stream -> seed is a bijection on 64-bit words, so distinct
// (beta_index, replica) pairs always receive distinct seeds.

#include <cmath>
#include <cstdint>
#include <random>

namespace kawasaki {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master + 0x9e3779b97f4a7c15ULL * stream);
}

inline std::uint64_t replica_stream(std::uint32_t beta_index, std::uint32_t replica) {
    return (static_cast<std::uint64_t>(beta_index) << 32) | replica;
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream = 0) {
    return Rng(stream_seed(master, stream));
}

/// Uniform on [0,1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Exponential with the given rate.
inline double exponential(Rng& rng, double rate) { return -std::log1p(-uniform01(rng)) / rate; }

}  // namespace kawasaki

#endif

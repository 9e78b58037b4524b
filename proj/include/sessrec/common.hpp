#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sessrec {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : Error {          // unreadable/unwritable streams and files
    using Error::Error;
};
struct FormatError : Error {      // malformed input beyond tolerance, bad file magic
    using Error::Error;
};
struct ConfigError : Error {      // invalid or unknown configuration
    using Error::Error;
};
struct ShapeError : Error {       // dimension mismatch in a kernel
    using Error::Error;
};
struct NumericError : Error {     // NaN/Inf where finite values are required
    using Error::Error;
};
struct DataError : Error {        // empty dataset, unknown item/user, ...
    using Error::Error;
};
struct PreconditionError : Error {  // caller broke an operation's contract
    using Error::Error;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Combine a seed with salts into a fresh, well-mixed stream seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ a);
    s = splitmix64(s ^ b);
    s = splitmix64(s ^ c);
    return s;
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(splitmix64(seed)); }

/// Uniform double in [0,1), identical across platforms for a given engine state.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n). n must be positive.
inline uint64_t uniform_index(Rng& rng, uint64_t n) {
    // rejection-free threshold sampling, unbiased
    uint64_t x = rng();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo < n) {
        uint64_t t = (0 - n) % n;
        while (lo < t) {
            x = rng();
            m = static_cast<__uint128_t>(x) * n;
            lo = static_cast<uint64_t>(m);
        }
    }
    return static_cast<uint64_t>(m >> 64);
}

/// Fisher-Yates with our own index sampling: std::shuffle's draw sequence is
/// implementation-defined, this one is pinned.
template <typename T>
inline void deterministic_shuffle(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

}  // namespace sessrec

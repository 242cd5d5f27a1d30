#pragma once

#include <cstdint>
#include <initializer_list>

namespace difftsp {

inline std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-addressable RNG: every draw is a pure function of (seed, address
// words). Iteration order and parallelism cannot change the stream.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t bits(std::initializer_list<std::uint64_t> addr) const {
        std::uint64_t h = mix64(seed_);
        for (std::uint64_t w : addr) h = mix64(h ^ w);
        return h;
    }

    // Uniform in [0, 1).
    double uniform(std::initializer_list<std::uint64_t> addr) const {
        return static_cast<double>(bits(addr) >> 11) * 0x1.0p-53;
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

// Derives an independent stream seed, e.g. per task or per subgraph.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(mix64(seed ^ a) ^ b);
}

}  // namespace difftsp

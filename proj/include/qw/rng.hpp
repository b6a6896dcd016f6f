#pragma once

#include <cstdint>
#include <random>

namespace qw {

// Seeded generator with a platform-independent output sequence.
// std::uniform_int_distribution is implementation-defined, so index draws
// go through rejection sampling on the raw mt19937_64 stream instead.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    // Uniform double in [0, 1) with 53 bits of precision.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // splitmix64 finalizer; decorrelates nearby seeds.
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        return mix(seed ^ mix(stream));
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace qw

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dar {

/// SplitMix64 finalizer; used to decorrelate per-replica seeds.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed of replica `replica` under master seed `seed`:
/// mix64(seed ^ mix64(replica + 1)). Streams are independent of thread schedule.
[[nodiscard]] constexpr std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t replica) noexcept {
    return mix64(seed ^ mix64(replica + 1));
}

/// Random source for one replica. Draws are built directly on the 64-bit
/// engine output so sequences are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng for_replica(std::uint64_t seed, std::uint64_t replica) {
        return Rng(replica_seed(seed, replica));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer on [0, bound), bound > 0 (Lemire's multiply-shift with rejection).
    std::uint64_t below(std::uint64_t bound) {
        unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(engine_()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

private:
    std::mt19937_64 engine_;
};

}  // namespace dar

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dpmix {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic child seed for task `index` under `root`. Streams derived
/// this way are independent enough for Monte-Carlo sharding and stable
/// across platforms and thread schedules.
inline uint64_t derive_seed(uint64_t root, uint64_t index) {
    return splitmix64(root ^ splitmix64(index + 0x51ed2700af5bfULL));
}

/// Seeded random stream. Normal variates are produced by Box-Muller on raw
/// 53-bit uniforms (no cached spare), so the sequence depends only on the
/// seed, not on libstdc++'s distribution internals.
class RngStream {
  public:
    explicit RngStream(uint64_t seed) : gen_(splitmix64(seed)), seed_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // (0, 1)
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int64_t uniform_int(int64_t n) {
        return static_cast<int64_t>(uniform() * static_cast<double>(n)) % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    RngStream split(uint64_t index) const { return RngStream(derive_seed(seed_, index)); }

  private:
    std::mt19937_64 gen_;
    uint64_t seed_;
};

}  // namespace dpmix

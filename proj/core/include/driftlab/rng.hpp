#pragma once

#include <cstdint>

namespace driftlab {

/// Counter-based pseudo-random stream (splitmix64 core).
///
/// The state is (seed, counter); draw n is a pure function of the seed and n,
/// so equal seeds give bit-identical streams on every platform. Instances are
/// cheap values; copy to snapshot, fork() to derive an independent child
/// stream. Not safe to share across threads -- give each parallel unit its
/// own fork.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform();

    /// Uniform draw in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller (second deviate cached).
    double normal();
    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    /// Child stream seeded from the next draw; advances this stream.
    Rng fork() { return Rng(next_u64()); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// splitmix64 finalizer; useful for hashing keys into seeds.
std::uint64_t mix64(std::uint64_t x);

/// Derive a seed from a base seed and a tag (order-sensitive).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    return mix64(base + 0x9E3779B97F4A7C15ull * (tag + 1));
}

}  // namespace driftlab

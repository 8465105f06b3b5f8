#include "driftlab/rng.hpp"

#include <cmath>

namespace driftlab {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
}

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

std::uint64_t Rng::next_u64() {
    counter_ += 1;
    return mix64(seed_ + counter_ * kGamma);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejection-free for powers of two; otherwise reject the biased tail.
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) {
            return r % n;
        }
    }
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    constexpr double two_pi = 6.28318530717958647692;
    const double angle = uniform() * two_pi;
    const double mag = std::sqrt(-2.0 * std::log(1.0 - uniform()));
    spare_ = mag * std::sin(angle);
    has_spare_ = true;
    return mag * std::cos(angle);
}

}  // namespace driftlab

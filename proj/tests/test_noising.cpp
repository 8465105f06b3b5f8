#include <doctest.h>

#include <cmath>

#include "driftlab/noising.hpp"

using namespace driftlab;

namespace {

TokenSeq make_seq(int len, int prompt_len = 0) {
    TokenSeq s;
    for (int i = 0; i < len; ++i) {
        s.ids.push_back(i % 7);
    }
    s.prompt_len = prompt_len;
    return s;
}

NoisedSequence masked_pattern(const std::vector<int>& flags, int prompt_len = 0) {
    NoisedSequence x;
    x.t = 0.5;
    x.prompt_len = prompt_len;
    for (int f : flags) {
        x.ids.push_back(f ? 99 : 1);
        x.mask_flags.push_back(static_cast<std::uint8_t>(f));
    }
    return x;
}

}  // namespace

TEST_CASE("linear alpha endpoints and midpoint") {
    Schedule s;
    CHECK(s.alpha(0.0) == 1.0);
    CHECK(s.alpha(1.0) == 0.0);
    CHECK(s.alpha(0.25) == 0.75);
    CHECK_THROWS_AS(s.alpha(-0.01), OutOfRange);
    CHECK_THROWS_AS(s.alpha(1.01), OutOfRange);
}

TEST_CASE("loss weights by mode") {
    Schedule s;
    s.weight_mode = WeightMode::uniform;
    CHECK(s.loss_weight(0.9) == 1.0);
    s.weight_mode = WeightMode::elbo;
    CHECK(s.loss_weight(0.5) == doctest::Approx(2.0));  // -alpha'/(1-alpha) = 1/t
    s.weight_mode = WeightMode::linear_t;
    CHECK(s.loss_weight(0.3) == doctest::Approx(0.3));
    CHECK_THROWS_AS(s.loss_weight(0.0), OutOfRange);
    CHECK_THROWS_AS(s.loss_weight(-1.0), OutOfRange);
}

TEST_CASE("forward_noise masks nothing in the t->0 limit and everything at t=1") {
    Schedule sched;
    Rng rng(3);
    const TokenSeq x0 = make_seq(64);
    const NoisedSequence low = forward_noise(x0, 1e-12, sched, 100, rng);
    CHECK(low.masked_count() == 0);
    const NoisedSequence high = forward_noise(x0, 1.0, sched, 100, rng);
    CHECK(high.masked_count() == 64);
    for (int i = 0; i < 64; ++i) {
        CHECK(high.ids[static_cast<std::size_t>(i)] == 100);
    }
}

TEST_CASE("forward_noise rejects t outside (0,1]") {
    Schedule sched;
    Rng rng(1);
    const TokenSeq x0 = make_seq(4);
    CHECK_THROWS_AS(forward_noise(x0, 0.0, sched, 9, rng), OutOfRange);
    CHECK_THROWS_AS(forward_noise(x0, 1.5, sched, 9, rng), OutOfRange);
    CHECK_THROWS_AS(forward_noise(TokenSeq{}, 0.5, sched, 9, rng), OutOfRange);
}

TEST_CASE("masked fraction concentrates around t") {
    Schedule sched;
    Rng rng(17);
    const TokenSeq x0 = make_seq(10000);
    const NoisedSequence x = forward_noise(x0, 0.5, sched, 100, rng);
    const double frac = static_cast<double>(x.masked_count()) / 10000.0;
    CHECK(frac > 0.48);
    CHECK(frac < 0.52);
}

TEST_CASE("mean masked fraction across many calls matches 1-alpha within 4 sigma") {
    Schedule sched;
    const int calls = 10000;
    const int len = 100;
    const double t = 0.3;
    Rng rng(23);
    const TokenSeq x0 = make_seq(len);
    double acc = 0.0;
    for (int i = 0; i < calls; ++i) {
        acc += static_cast<double>(forward_noise(x0, t, sched, 100, rng).masked_count()) / len;
    }
    const double mean = acc / calls;
    const double bound = 4.0 * std::sqrt(t * (1.0 - t) / (static_cast<double>(calls) * len));
    CHECK(std::abs(mean - t) < bound);
}

TEST_CASE("forward_noise leaves prompts and surviving tokens untouched") {
    Schedule sched;
    Rng rng(29);
    for (int iter = 0; iter < 50; ++iter) {
        const int len = 3 + static_cast<int>(rng.below(40));
        const int prompt = static_cast<int>(rng.below(static_cast<std::uint64_t>(len)));
        const TokenSeq x0 = make_seq(len, prompt);
        const double t = 1.0 - rng.uniform();
        const NoisedSequence x = forward_noise(x0, t, sched, 100, rng);
        REQUIRE(x.prompt_len == prompt);
        for (int i = 0; i < len; ++i) {
            if (i < prompt) {
                REQUIRE(!x.mask_flags[static_cast<std::size_t>(i)]);
            }
            if (x.mask_flags[static_cast<std::size_t>(i)]) {
                REQUIRE(x.ids[static_cast<std::size_t>(i)] == 100);
            } else {
                REQUIRE(x.ids[static_cast<std::size_t>(i)] ==
                        x0.ids[static_cast<std::size_t>(i)]);
            }
        }
    }
}

TEST_CASE("cart weight of a single masked position is exactly base_w") {
    const NoisedSequence x = masked_pattern({0, 1, 0});
    const auto w = cart_weights(x, 0.7, 8);
    CHECK(w[1] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(w[0] == 0.0);
    CHECK(w[2] == 0.0);
}

TEST_CASE("fully masked sequence gets uniform capped weights") {
    const NoisedSequence x = masked_pattern({1, 1, 1, 1});
    const auto w = cart_weights(x, 1.5, 8);
    for (double wi : w) {
        CHECK(wi == doctest::Approx(1.5).epsilon(1e-12));
    }
}

TEST_CASE("cart weights follow the distance profile, normalized to the mean") {
    // distances to the unmasked tail: 3, 2, 1 -> weights 1.5, 1.0, 0.5;
    // the distance-1 / distance-3 pair reproduces the 0.5 / 1.5 split.
    const NoisedSequence x = masked_pattern({1, 1, 1, 0});
    const auto w = cart_weights(x, 1.0, 8);
    CHECK(w[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w[3] == 0.0);
}

TEST_CASE("cart distances cap at the window") {
    NoisedSequence x = masked_pattern({0, 1, 1, 1, 1, 1, 1});
    const auto w = cart_weights(x, 1.0, 2);
    // distances 1,2,3,4,5,6 cap to 1,2,2,2,2,2
    const double mean = (1 + 2 + 2 + 2 + 2 + 2) / 6.0;
    CHECK(w[1] == doctest::Approx(1.0 / mean).epsilon(1e-12));
    CHECK(w[6] == doctest::Approx(2.0 / mean).epsilon(1e-12));
}

TEST_CASE("cart weights average exactly base_w and stay positive") {
    Rng rng(31);
    for (int iter = 0; iter < 300; ++iter) {
        const int len = 2 + static_cast<int>(rng.below(60));
        std::vector<int> flags(static_cast<std::size_t>(len), 0);
        int masked = 0;
        for (auto& f : flags) {
            f = rng.uniform() < 0.6 ? 1 : 0;
            masked += f;
        }
        if (masked == 0) {
            flags[0] = 1;
            masked = 1;
        }
        const NoisedSequence x = masked_pattern(flags);
        const int window = 1 + static_cast<int>(rng.below(10));
        const double base = 0.25 + rng.uniform() * 3.0;
        const auto w = cart_weights(x, base, window);
        double sum = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (flags[i]) {
                REQUIRE(w[i] > 0.0);
                sum += w[i];
            } else {
                REQUIRE(w[i] == 0.0);
            }
        }
        REQUIRE(std::abs(sum / masked - base) < 1e-12);
    }
}

TEST_CASE("cart_weights requires a masked position") {
    const NoisedSequence x = masked_pattern({0, 0});
    CHECK_THROWS_AS(cart_weights(x, 1.0, 8), NoMaskedPositions);
}

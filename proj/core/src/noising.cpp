#include "driftlab/noising.hpp"

#include <algorithm>

namespace driftlab {

std::int32_t NoisedSequence::masked_count() const {
    return static_cast<std::int32_t>(std::count(mask_flags.begin(), mask_flags.end(), 1));
}

NoisedSequence forward_noise(const TokenSeq& x0, double t, const Schedule& schedule,
                             TokenId mask_id, Rng& rng) {
    if (!(t > 0.0 && t <= 1.0)) {
        throw OutOfRange("forward_noise: t=" + std::to_string(t) + " outside (0,1]");
    }
    if (x0.ids.empty()) {
        throw OutOfRange("forward_noise: empty sequence");
    }
    const double keep = schedule.alpha(t);
    NoisedSequence out;
    out.ids = x0.ids;
    out.mask_flags.assign(x0.ids.size(), 0);
    out.t = t;
    out.prompt_len = x0.prompt_len;
    for (std::int32_t i = x0.prompt_len; i < x0.size(); ++i) {
        if (rng.uniform() >= keep) {
            out.ids[i] = mask_id;
            out.mask_flags[i] = 1;
        }
    }
    return out;
}

std::vector<double> cart_weights(const NoisedSequence& x_t, double base_w, int window) {
    const std::int32_t n = x_t.size();
    std::vector<double> dist(static_cast<std::size_t>(n), 0.0);

    // Two sweeps give the distance to the nearest unmasked position.
    const double inf = 1e18;
    double run = inf;
    for (std::int32_t i = 0; i < n; ++i) {
        run = x_t.mask_flags[i] ? run + 1.0 : 0.0;
        dist[i] = run;
    }
    run = inf;
    for (std::int32_t i = n - 1; i >= 0; --i) {
        run = x_t.mask_flags[i] ? run + 1.0 : 0.0;
        dist[i] = std::min(dist[i], run);
    }

    double sum = 0.0;
    std::int32_t masked = 0;
    for (std::int32_t i = 0; i < n; ++i) {
        if (x_t.mask_flags[i]) {
            dist[i] = std::min(dist[i], static_cast<double>(window));
            sum += dist[i];
            ++masked;
        }
    }
    if (masked == 0) {
        throw NoMaskedPositions();
    }

    const double mean = sum / masked;
    std::vector<double> weights(static_cast<std::size_t>(n), 0.0);
    for (std::int32_t i = 0; i < n; ++i) {
        if (x_t.mask_flags[i]) {
            weights[i] = base_w * dist[i] / mean;
        }
    }
    return weights;
}

}  // namespace driftlab

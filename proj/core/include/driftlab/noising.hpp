#pragma once

#include <cstdint>
#include <vector>

#include "driftlab/rng.hpp"
#include "driftlab/schedule.hpp"
#include "driftlab/vocab.hpp"

namespace driftlab {

/// A corrupted sequence: MASK substituted at corrupted positions.
/// Positions below prompt_len are never masked.
struct NoisedSequence {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> mask_flags;
    double t = 0.0;
    std::int32_t prompt_len = 0;

    std::int32_t size() const { return static_cast<std::int32_t>(ids.size()); }
    std::int32_t masked_count() const;
};

/// Forward corruption q(x_t | x_0): each response position is independently
/// replaced by mask_id with probability 1 - alpha(t). t must lie in (0,1].
NoisedSequence forward_noise(const TokenSeq& x0, double t, const Schedule& schedule,
                             TokenId mask_id, Rng& rng);

/// Context-adaptive per-token weights for the masked positions of x_t.
///
/// The raw hardness score of a masked position is its distance to the nearest
/// unmasked position, capped at `window` (and `window` when nothing is
/// unmasked). Scores are normalized so the returned weights average exactly
/// base_w over the masked positions. The result has one entry per sequence
/// position; unmasked positions hold 0.
std::vector<double> cart_weights(const NoisedSequence& x_t, double base_w, int window);

}  // namespace driftlab

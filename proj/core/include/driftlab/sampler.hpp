#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "driftlab/model.hpp"

namespace driftlab {

/// How the sampler picks which masked positions to commit each step.
///  - confidence:    highest max-probability first
///  - entropy:       lowest distribution entropy first
///  - random:        uniformly random order
///  - left_to_right: lowest position index first
enum class Strategy { confidence, entropy, random, left_to_right };

struct SampleConfig {
    int gen_len = 64;
    int steps = 16;
    Strategy strategy = Strategy::confidence;
    double temperature = 0.0;     // 0 is exact argmax with lowest-id tie break
    double pad_penalty_p0 = 0.0;  // initial PAD logit penalty, decays linearly
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-response-position decode record: the step at which each position was
/// frozen and the token it was frozen to.
struct OrderTrace {
    std::vector<std::int32_t> commit_step;
    std::vector<TokenId> committed;
};

/// Linearly decaying PAD logit penalty at step s of S.
double pad_penalty(int step, int steps, double p0);

/// Iterative any-order decoding. The response region starts fully masked;
/// each step runs one full forward pass, subtracts the PAD penalty, forms a
/// per-position categorical at the configured temperature, and freezes a
/// near-uniform number of positions chosen by the strategy score. Uncommitted
/// positions are re-masked for the next step. Returns the full sequence
/// (prompt + response) and the trace.
template <typename T>
std::pair<TokenSeq, OrderTrace> generate(const DenoiserModel<T>& model, const TokenSeq& prompt,
                                         const SampleConfig& cfg, Rng& rng);

enum class PatternLabel { left_to_right, sketch_first, interleaved };

struct PatternStats {
    double kendall_tau = 0.0;
    PatternLabel label = PatternLabel::interleaved;
};

/// Classifies a trace: tau >= 0.8 reads as left_to_right; otherwise a trace
/// whose earliest fifth of commits spans at least half the response is
/// sketch_first; anything else is interleaved. Tau is the tie-corrected
/// (tau-b) correlation between position and commit step.
PatternStats order_stats(const OrderTrace& trace);

const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);
const char* to_string(PatternLabel label);

}  // namespace driftlab

#pragma once

#include <cstdint>
#include <vector>

#include "driftlab/batch.hpp"
#include "driftlab/model.hpp"
#include "driftlab/noising.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

/// Per-token weighting of the masked cross-entropy: a single w(t) factor, or
/// the context-adaptive per-position weights normalized to average w(t).
enum class LossMode { uniform_w, cart };

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int warmup_steps = 100;
    int total_steps = 0;  // 0 means constant lr after warmup, else cosine decay
    double lr_min = 0.0;
};

template <typename T>
struct OptimState {
    AdamConfig config;
    std::int64_t step = 0;
    ParamSet<T> m, v;
};

template <typename T>
OptimState<T> make_optim_state(const DenoiserModel<T>& model, const AdamConfig& config);

double lr_at_step(const AdamConfig& config, std::int64_t step);

/// One adaptive-moment update. Increments the step counter.
template <typename T>
void apply_adam(DenoiserModel<T>& model, OptimState<T>& optim, const ParamSet<T>& grads);

/// Weighted masked cross-entropy objective for one noised sequence. The
/// weight vector has one entry per position (zero off the masked set); the
/// loss is sum_i w_i * -log p(x0_i). Loss math runs in double regardless of T.
template <typename T>
LogitsObjective<T> masked_ce_objective(const TokenSeq& x0, const std::vector<double>& weights);

struct LossStats {
    double loss = 0.0;
    double masked_fraction = 0.0;
};

/// The training objective over a batch: per sequence, sample t ~ U(0,1],
/// corrupt with forward_noise, and score the masked positions with weight
/// w(t) (mode uniform_w) or context-adaptive weights averaging w(t) (mode
/// cart). A sequence whose draw masks nothing is re-noised once, then
/// contributes zero. Returns the batch-mean loss and accumulates d(loss)/d(theta)
/// into grads.
template <typename T>
LossStats diffusion_loss_grad(const DenoiserModel<T>& model, const Batch& batch,
                              const Schedule& schedule, LossMode mode, int cart_window,
                              Rng& rng, ParamSet<T>& grads, int threads = 1);

/// Per-batch response-length equalization: each response may be cut to the
/// content length of a uniformly drawn batch member (only ever shortened) and
/// re-terminated with EOS. Prompts are untouched; the batch is re-padded.
Batch random_truncate(const Batch& batch, TokenId eos, TokenId pad, Rng& rng);

/// One optimizer transaction: loss, gradients, Adam update. A non-finite
/// loss aborts before any parameter changes.
template <typename T>
LossStats train_step(DenoiserModel<T>& model, OptimState<T>& optim, const Batch& batch,
                     const Schedule& schedule, LossMode mode, int cart_window, Rng& rng,
                     int threads = 1);

LossMode loss_mode_from_string(const std::string& name);
const char* to_string(LossMode mode);

}  // namespace driftlab

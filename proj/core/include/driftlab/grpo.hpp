#pragma once

#include <cstdint>
#include <vector>

#include "driftlab/model.hpp"
#include "driftlab/sampler.hpp"
#include "driftlab/tasks.hpp"
#include "driftlab/trainer.hpp"
#include "driftlab/vocab.hpp"

namespace driftlab {

struct GrpoConfig {
    int group_size = 8;
    double eps_low = 0.2;
    double eps_high = 0.28;
    SampleConfig rollout;
    double t_estimate = 0.5;  // recorded noise level for likelihood passes
    int inner_epochs = 1;

    void validate() const;
};

/// Complementary mask pair over response positions: in_m[n] == 1 puts
/// position n in M, otherwise in the complement.
struct MaskPair {
    std::vector<std::uint8_t> in_m;
};

/// Group-normalized advantages with the population standard deviation.
/// A zero-variance group yields all zeros.
std::vector<double> compute_advantages(const std::vector<double>& rewards);

/// Each position joins M independently with probability 1/2.
MaskPair coupled_masks(int response_len, Rng& rng);

struct PosLogProb {
    std::int32_t pos = 0;  // response-relative
    double logp = 0.0;
};

/// Token log-likelihood estimates for the positions where estimate_at is
/// set: those positions are masked (prompt and the rest of the response stay
/// visible), one forward pass scores them all. Throws EmptyMask when no
/// position is selected.
template <typename T>
std::vector<PosLogProb> token_logprobs(const DenoiserModel<T>& model, const TokenSeq& prompt,
                                       const std::vector<TokenId>& response,
                                       const std::vector<std::uint8_t>& estimate_at,
                                       double t_estimate);

/// min(rho*A, clip(rho, 1-eps_low, 1+eps_high)*A)
double grpo_term(double rho, double advantage, double eps_low, double eps_high);

struct GrpoTokenGrad {
    double term = 0.0;
    double d_new_lp = 0.0;  // d term / d new_lp at rho = exp(new_lp - old_lp)
    bool clipped = false;   // the clipped branch strictly won the min
};

GrpoTokenGrad grpo_token_grad(double new_lp, double old_lp, double advantage, double eps_low,
                              double eps_high);

struct GrpoObjectiveStats {
    double objective = 0.0;
    double clip_fraction = 0.0;
};

/// The negated (minimization-ready) GRPO contribution of one likelihood pass:
/// positions with sel set score their clipped term against old_lp, scaled by
/// `factor`. Optional counters receive token/clip tallies.
template <typename T>
LogitsObjective<T> grpo_mask_objective(std::vector<TokenId> response,
                                       std::vector<std::uint8_t> sel, int prompt_len,
                                       std::vector<double> old_lp, double advantage,
                                       double eps_low, double eps_high, double factor,
                                       long long* token_count = nullptr,
                                       long long* clip_count = nullptr);

/// The scalar GRPO objective over aligned per-sample token log-probs:
/// mean over samples of the length-normalized sum of clipped terms. No
/// entropy or KL term exists anywhere in this computation.
GrpoObjectiveStats grpo_objective(const std::vector<std::vector<double>>& new_lp,
                                  const std::vector<std::vector<double>>& old_lp,
                                  const std::vector<double>& advantages, const GrpoConfig& cfg);

struct RolloutSample {
    std::vector<TokenId> response;
    double reward = 0.0;
    double advantage = 0.0;
    MaskPair masks;
    std::vector<double> old_lp;    // one estimate per response position
    std::size_t source_group = 0;  // group whose prompt conditioned this sample
};

struct RolloutGroup {
    TokenSeq prompt;
    std::size_t task_index = 0;
    std::vector<RolloutSample> members;
    bool zero_variance = false;
};

struct SubstitutionResult {
    int substituted = 0;
    bool skip_update = false;
};

/// Replaces every member of a zero-variance group with a duplicate of the
/// batch's largest-|advantage| sample (ties: lowest group, then member,
/// index). A batch that is entirely zero-variance is returned unchanged with
/// skip_update set.
SubstitutionResult informative_substitute(std::vector<RolloutGroup>& batch);

struct RlStepStats {
    double mean_reward = 0.0;
    double clip_frac = 0.0;
    int substituted = 0;
    bool skip_update = false;
    double objective = 0.0;
};

/// One GRPO update: G rollouts per task, verifier rewards, normalized
/// advantages, coupled-mask likelihood records, substitution, and a single
/// gradient-ascent step per inner epoch.
template <typename T>
RlStepStats rl_step(DenoiserModel<T>& model, OptimState<T>& optim,
                    const std::vector<Task>& tasks, const std::vector<std::size_t>& task_indices,
                    const GrpoConfig& cfg, const Limits& limits, const Vocab& vocab, Rng& rng,
                    int threads = 1);

}  // namespace driftlab

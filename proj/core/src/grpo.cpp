#include "driftlab/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "driftlab/util.hpp"

namespace driftlab {

void GrpoConfig::validate() const {
    if (group_size < 2) {
        throw InvalidConfig("grpo config: group_size must be >= 2");
    }
    if (!(eps_low > 0.0 && eps_low < 1.0 && eps_high > 0.0 && eps_high < 1.0)) {
        throw InvalidConfig("grpo config: eps bounds must lie in (0,1)");
    }
    if (!(t_estimate > 0.0 && t_estimate < 1.0)) {
        throw InvalidConfig("grpo config: t_estimate must lie in (0,1)");
    }
    if (inner_epochs < 1) {
        throw InvalidConfig("grpo config: inner_epochs must be >= 1");
    }
    rollout.validate();
}

std::vector<double> compute_advantages(const std::vector<double>& rewards) {
    const std::size_t g = rewards.size();
    if (g < 2) {
        throw GroupTooSmall("advantages need a group of at least 2");
    }
    bool all_equal = true;
    for (std::size_t i = 1; i < g; ++i) {
        if (rewards[i] != rewards[0]) {
            all_equal = false;
            break;
        }
    }
    if (all_equal) {
        return std::vector<double>(g, 0.0);
    }
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) {
        var += (r - mean) * (r - mean);
    }
    const double std_dev = std::sqrt(var / static_cast<double>(g));
    std::vector<double> adv(g);
    for (std::size_t i = 0; i < g; ++i) {
        adv[i] = (rewards[i] - mean) / std_dev;
    }
    return adv;
}

MaskPair coupled_masks(int response_len, Rng& rng) {
    if (response_len < 1) {
        throw InvalidConfig("coupled_masks: response_len must be >= 1");
    }
    MaskPair pair;
    pair.in_m.resize(static_cast<std::size_t>(response_len));
    for (auto& bit : pair.in_m) {
        bit = rng.uniform() < 0.5 ? 1 : 0;
    }
    return pair;
}

template <typename T>
std::vector<PosLogProb> token_logprobs(const DenoiserModel<T>& model, const TokenSeq& prompt,
                                       const std::vector<TokenId>& response,
                                       const std::vector<std::uint8_t>& estimate_at,
                                       double t_estimate) {
    if (estimate_at.size() != response.size()) {
        throw ShapeMismatch("token_logprobs: mask and response lengths differ");
    }
    if (std::find(estimate_at.begin(), estimate_at.end(), 1) == estimate_at.end()) {
        throw EmptyMask();
    }
    const TokenId mask_id = model.config.vocab_size - 4;
    const int prompt_len = prompt.size();
    const int resp_len = static_cast<int>(response.size());

    NoisedSequence x_t;
    x_t.ids = prompt.ids;
    x_t.ids.insert(x_t.ids.end(), response.begin(), response.end());
    x_t.mask_flags.assign(x_t.ids.size(), 0);
    x_t.prompt_len = prompt_len;
    x_t.t = t_estimate;
    for (int n = 0; n < resp_len; ++n) {
        if (estimate_at[static_cast<std::size_t>(n)]) {
            x_t.ids[static_cast<std::size_t>(prompt_len + n)] = mask_id;
            x_t.mask_flags[static_cast<std::size_t>(prompt_len + n)] = 1;
        }
    }

    const Mat<T> logits = forward(model, x_t);
    std::vector<PosLogProb> out;
    for (int n = 0; n < resp_len; ++n) {
        if (!estimate_at[static_cast<std::size_t>(n)]) {
            continue;
        }
        const int row = prompt_len + n;
        double mx = -1e308;
        for (int j = 0; j < model.config.vocab_size; ++j) {
            mx = std::max(mx, static_cast<double>(logits(row, j)));
        }
        double denom = 0.0;
        for (int j = 0; j < model.config.vocab_size; ++j) {
            denom += std::exp(static_cast<double>(logits(row, j)) - mx);
        }
        const TokenId target = response[static_cast<std::size_t>(n)];
        const double logp = static_cast<double>(logits(row, target)) - mx - std::log(denom);
        out.push_back({n, logp});
    }
    return out;
}

double grpo_term(double rho, double advantage, double eps_low, double eps_high) {
    const double clipped_rho = std::clamp(rho, 1.0 - eps_low, 1.0 + eps_high);
    return std::min(rho * advantage, clipped_rho * advantage);
}

GrpoTokenGrad grpo_token_grad(double new_lp, double old_lp, double advantage, double eps_low,
                              double eps_high) {
    const double rho = std::exp(new_lp - old_lp);
    const double clipped_rho = std::clamp(rho, 1.0 - eps_low, 1.0 + eps_high);
    const double unclipped = rho * advantage;
    const double clipped = clipped_rho * advantage;
    GrpoTokenGrad out;
    if (unclipped <= clipped) {
        out.term = unclipped;
        out.d_new_lp = advantage * rho;  // d rho / d new_lp = rho
    } else {
        out.term = clipped;
        out.clipped = true;
        // Gradient flows only while the clamp is inactive; a saturated clamp
        // is flat in new_lp.
        out.d_new_lp = (clipped_rho == rho) ? advantage * rho : 0.0;
    }
    return out;
}

template <typename T>
LogitsObjective<T> grpo_mask_objective(std::vector<TokenId> response,
                                       std::vector<std::uint8_t> sel, int prompt_len,
                                       std::vector<double> old_lp, double advantage,
                                       double eps_low, double eps_high, double factor,
                                       long long* token_count, long long* clip_count) {
    return [response = std::move(response), sel = std::move(sel), prompt_len,
            old_lp = std::move(old_lp), advantage, eps_low, eps_high, factor, token_count,
            clip_count](const Mat<T>& logits, Mat<T>& dlogits) -> double {
        const int v = static_cast<int>(logits.cols());
        const int gen_len = static_cast<int>(response.size());
        double value = 0.0;
        std::vector<double> prob(static_cast<std::size_t>(v));
        for (int n = 0; n < gen_len; ++n) {
            if (!sel[static_cast<std::size_t>(n)]) {
                continue;
            }
            const int row = prompt_len + n;
            double mx = -1e308;
            for (int j = 0; j < v; ++j) {
                mx = std::max(mx, static_cast<double>(logits(row, j)));
            }
            double denom = 0.0;
            for (int j = 0; j < v; ++j) {
                prob[static_cast<std::size_t>(j)] =
                    std::exp(static_cast<double>(logits(row, j)) - mx);
                denom += prob[static_cast<std::size_t>(j)];
            }
            const TokenId target = response[static_cast<std::size_t>(n)];
            const double new_lp =
                static_cast<double>(logits(row, target)) - mx - std::log(denom);
            const GrpoTokenGrad tg = grpo_token_grad(new_lp, old_lp[static_cast<std::size_t>(n)],
                                                     advantage, eps_low, eps_high);
            if (token_count != nullptr) {
                *token_count += 1;
            }
            if (clip_count != nullptr && tg.clipped) {
                *clip_count += 1;
            }
            // Gradient ascent on the term is descent on its negation.
            value -= factor * tg.term;
            const double coef = -factor * tg.d_new_lp;
            for (int j = 0; j < v; ++j) {
                const double p = prob[static_cast<std::size_t>(j)] / denom;
                const double onehot = (j == target) ? 1.0 : 0.0;
                dlogits(row, j) += static_cast<T>(coef * (onehot - p));
            }
        }
        return value;
    };
}

GrpoObjectiveStats grpo_objective(const std::vector<std::vector<double>>& new_lp,
                                  const std::vector<std::vector<double>>& old_lp,
                                  const std::vector<double>& advantages, const GrpoConfig& cfg) {
    if (new_lp.size() != old_lp.size() || new_lp.size() != advantages.size()) {
        throw ShapeMismatch("grpo_objective: sample counts differ");
    }
    if (new_lp.empty()) {
        throw ShapeMismatch("grpo_objective: no samples");
    }
    GrpoObjectiveStats stats;
    long long tokens = 0, clipped = 0;
    for (std::size_t i = 0; i < new_lp.size(); ++i) {
        if (new_lp[i].size() != old_lp[i].size()) {
            throw ShapeMismatch("grpo_objective: token counts differ at sample " +
                                std::to_string(i));
        }
        if (new_lp[i].empty()) {
            throw ShapeMismatch("grpo_objective: empty sample " + std::to_string(i));
        }
        double acc = 0.0;
        for (std::size_t t = 0; t < new_lp[i].size(); ++t) {
            const GrpoTokenGrad g = grpo_token_grad(new_lp[i][t], old_lp[i][t], advantages[i],
                                                    cfg.eps_low, cfg.eps_high);
            acc += g.term;
            ++tokens;
            clipped += g.clipped ? 1 : 0;
        }
        stats.objective += acc / static_cast<double>(new_lp[i].size());
    }
    stats.objective /= static_cast<double>(new_lp.size());
    stats.clip_fraction = tokens > 0 ? static_cast<double>(clipped) / tokens : 0.0;
    return stats;
}

SubstitutionResult informative_substitute(std::vector<RolloutGroup>& batch) {
    SubstitutionResult result;
    const RolloutSample* donor = nullptr;
    double best = -1.0;
    for (const RolloutGroup& group : batch) {
        if (group.zero_variance) {
            continue;
        }
        for (const RolloutSample& s : group.members) {
            if (std::abs(s.advantage) > best) {
                best = std::abs(s.advantage);
                donor = &s;
            }
        }
    }
    if (donor == nullptr) {
        result.skip_update = true;
        return result;
    }
    const RolloutSample donor_copy = *donor;  // donor may live in a mutated group
    for (RolloutGroup& group : batch) {
        if (!group.zero_variance) {
            continue;
        }
        for (RolloutSample& s : group.members) {
            s = donor_copy;
            ++result.substituted;
        }
    }
    return result;
}

template <typename T>
RlStepStats rl_step(DenoiserModel<T>& model, OptimState<T>& optim,
                    const std::vector<Task>& tasks, const std::vector<std::size_t>& task_indices,
                    const GrpoConfig& cfg, const Limits& limits, const Vocab& vocab, Rng& rng,
                    int threads) {
    cfg.validate();
    if (task_indices.empty()) {
        throw ConfigError("rl_step: no tasks");
    }
    const int g = cfg.group_size;
    const int gen_len = cfg.rollout.gen_len;

    // Rollouts: fork one rng per member up front so parallel generation does
    // not depend on scheduling.
    std::vector<RolloutGroup> groups(task_indices.size());
    std::vector<Rng> member_rngs;
    member_rngs.reserve(task_indices.size() * static_cast<std::size_t>(g));
    for (std::size_t gi = 0; gi < task_indices.size(); ++gi) {
        groups[gi].task_index = task_indices[gi];
        groups[gi].prompt = vocab.encode(tasks.at(task_indices[gi]).prompt);
        groups[gi].prompt.prompt_len = groups[gi].prompt.size();
        groups[gi].members.resize(static_cast<std::size_t>(g));
        for (int m = 0; m < g; ++m) {
            member_rngs.push_back(rng.fork());
        }
    }
    const int total_samples = static_cast<int>(member_rngs.size());
    parallel_for(total_samples, threads, [&](int idx, int) {
        const std::size_t gi = static_cast<std::size_t>(idx) / static_cast<std::size_t>(g);
        const std::size_t mi = static_cast<std::size_t>(idx) % static_cast<std::size_t>(g);
        RolloutGroup& group = groups[gi];
        Rng local = member_rngs[static_cast<std::size_t>(idx)];
        auto [seq, trace] = generate(model, group.prompt, cfg.rollout, local);
        RolloutSample& s = group.members[mi];
        s.source_group = gi;
        s.response.assign(seq.ids.begin() + group.prompt.size(), seq.ids.end());
        const Task& task = tasks.at(group.task_index);
        s.reward = score(extract_program(vocab, s.response), task, limits);
    });

    RlStepStats stats;
    for (RolloutGroup& group : groups) {
        std::vector<double> rewards;
        rewards.reserve(static_cast<std::size_t>(g));
        for (const RolloutSample& s : group.members) {
            rewards.push_back(s.reward);
            stats.mean_reward += s.reward;
        }
        const std::vector<double> adv = compute_advantages(rewards);
        group.zero_variance = std::all_of(adv.begin(), adv.end(), [](double a) { return a == 0.0; });
        for (int m = 0; m < g; ++m) {
            group.members[static_cast<std::size_t>(m)].advantage = adv[static_cast<std::size_t>(m)];
        }
    }
    stats.mean_reward /= static_cast<double>(total_samples);

    // Old-policy log-probs under coupled masks, recorded before any update.
    for (RolloutGroup& group : groups) {
        for (RolloutSample& s : group.members) {
            s.masks = coupled_masks(gen_len, rng);
        }
    }
    parallel_for(total_samples, threads, [&](int idx, int) {
        const std::size_t gi = static_cast<std::size_t>(idx) / static_cast<std::size_t>(g);
        const std::size_t mi = static_cast<std::size_t>(idx) % static_cast<std::size_t>(g);
        RolloutSample& s = groups[gi].members[mi];
        s.old_lp.assign(static_cast<std::size_t>(gen_len), 0.0);
        for (int half = 0; half < 2; ++half) {
            std::vector<std::uint8_t> sel = s.masks.in_m;
            if (half == 1) {
                for (auto& b : sel) {
                    b = b ? 0 : 1;
                }
            }
            if (std::find(sel.begin(), sel.end(), 1) == sel.end()) {
                continue;  // the complement covers every position
            }
            for (const PosLogProb& pl :
                 token_logprobs(model, groups[gi].prompt, s.response, sel, cfg.t_estimate)) {
                s.old_lp[static_cast<std::size_t>(pl.pos)] = pl.logp;
            }
        }
    });

    const SubstitutionResult sub = informative_substitute(groups);
    stats.substituted = sub.substituted;
    stats.skip_update = sub.skip_update;
    if (sub.skip_update) {
        return stats;
    }

    // Gradient ascent on the clipped objective (Adam minimizes its negation).
    const double sample_norm = 1.0 / static_cast<double>(total_samples);
    for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
        const int workers = effective_workers(total_samples, threads);
        std::vector<ParamSet<T>> worker_grads;
        worker_grads.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            worker_grads.push_back(zeros_like(model.params));
        }
        std::vector<double> worker_obj(static_cast<std::size_t>(workers), 0.0);
        std::vector<long long> worker_tokens(static_cast<std::size_t>(workers), 0);
        std::vector<long long> worker_clipped(static_cast<std::size_t>(workers), 0);

        parallel_for(total_samples, threads, [&](int idx, int w) {
            const std::size_t gi = static_cast<std::size_t>(idx) / static_cast<std::size_t>(g);
            const std::size_t mi = static_cast<std::size_t>(idx) % static_cast<std::size_t>(g);
            const RolloutSample& s = groups[gi].members[mi];
            const TokenSeq& prompt = groups[s.source_group].prompt;
            const int prompt_len = prompt.size();
            const double factor = sample_norm / static_cast<double>(gen_len);

            for (int half = 0; half < 2; ++half) {
                std::vector<std::uint8_t> sel = s.masks.in_m;
                if (half == 1) {
                    for (auto& b : sel) {
                        b = b ? 0 : 1;
                    }
                }
                if (std::find(sel.begin(), sel.end(), 1) == sel.end()) {
                    continue;
                }

                NoisedSequence x_t;
                x_t.ids = prompt.ids;
                x_t.ids.insert(x_t.ids.end(), s.response.begin(), s.response.end());
                x_t.mask_flags.assign(x_t.ids.size(), 0);
                x_t.prompt_len = prompt_len;
                x_t.t = cfg.t_estimate;
                const TokenId mask_id = model.config.vocab_size - 4;
                for (int n = 0; n < gen_len; ++n) {
                    if (sel[static_cast<std::size_t>(n)]) {
                        x_t.ids[static_cast<std::size_t>(prompt_len + n)] = mask_id;
                        x_t.mask_flags[static_cast<std::size_t>(prompt_len + n)] = 1;
                    }
                }

                auto objective = grpo_mask_objective<T>(
                    s.response, sel, prompt_len, s.old_lp, s.advantage, cfg.eps_low,
                    cfg.eps_high, factor, &worker_tokens[static_cast<std::size_t>(w)],
                    &worker_clipped[static_cast<std::size_t>(w)]);
                worker_obj[static_cast<std::size_t>(w)] +=
                    accumulate_grad<T>(model, x_t, objective, worker_grads[static_cast<std::size_t>(w)]);
            }
        });

        ParamSet<T> grads = zeros_like(model.params);
        auto sinks = named_params(grads);
        double obj = 0.0;
        long long tokens = 0, clipped_count = 0;
        for (int w = 0; w < workers; ++w) {
            obj += worker_obj[static_cast<std::size_t>(w)];
            tokens += worker_tokens[static_cast<std::size_t>(w)];
            clipped_count += worker_clipped[static_cast<std::size_t>(w)];
            auto srcs = named_params(worker_grads[static_cast<std::size_t>(w)]);
            for (std::size_t k = 0; k < sinks.size(); ++k) {
                *sinks[k].second += *srcs[k].second;
            }
        }
        if (!std::isfinite(obj)) {
            throw NonFiniteLoss("grpo objective is not finite");
        }
        stats.objective = -obj;
        stats.clip_frac = tokens > 0 ? static_cast<double>(clipped_count) / tokens : 0.0;
        apply_adam(model, optim, grads);
    }
    return stats;
}

#define DRIFTLAB_INSTANTIATE(T)                                                               \
    template std::vector<PosLogProb> token_logprobs<T>(                                       \
        const DenoiserModel<T>&, const TokenSeq&, const std::vector<TokenId>&,                \
        const std::vector<std::uint8_t>&, double);                                           \
    template LogitsObjective<T> grpo_mask_objective<T>(                                       \
        std::vector<TokenId>, std::vector<std::uint8_t>, int, std::vector<double>, double,    \
        double, double, double, long long*, long long*);                                     \
    template RlStepStats rl_step<T>(DenoiserModel<T>&, OptimState<T>&,                        \
                                    const std::vector<Task>&, const std::vector<std::size_t>&, \
                                    const GrpoConfig&, const Limits&, const Vocab&, Rng&, int);

DRIFTLAB_INSTANTIATE(float)
DRIFTLAB_INSTANTIATE(double)

#undef DRIFTLAB_INSTANTIATE

}  // namespace driftlab

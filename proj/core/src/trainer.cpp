#include "driftlab/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "driftlab/util.hpp"

namespace driftlab {

template <typename T>
OptimState<T> make_optim_state(const DenoiserModel<T>& model, const AdamConfig& config) {
    OptimState<T> s;
    s.config = config;
    s.m = zeros_like(model.params);
    s.v = zeros_like(model.params);
    return s;
}

double lr_at_step(const AdamConfig& c, std::int64_t step) {
    if (c.warmup_steps > 0 && step <= c.warmup_steps) {
        return c.lr * static_cast<double>(step) / c.warmup_steps;
    }
    if (c.total_steps <= 0 || c.total_steps <= c.warmup_steps) {
        return c.lr;
    }
    if (step >= c.total_steps) {
        return c.lr_min;
    }
    const double progress =
        static_cast<double>(step - c.warmup_steps) / (c.total_steps - c.warmup_steps);
    return c.lr_min + 0.5 * (c.lr - c.lr_min) * (1.0 + std::cos(progress * M_PI));
}

template <typename T>
void apply_adam(DenoiserModel<T>& model, OptimState<T>& optim, const ParamSet<T>& grads) {
    optim.step += 1;
    const auto& c = optim.config;
    const double lr = lr_at_step(c, optim.step);
    const T b1 = static_cast<T>(c.beta1);
    const T b2 = static_cast<T>(c.beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(c.beta1, static_cast<double>(optim.step)));
    const T bc2 = static_cast<T>(1.0 - std::pow(c.beta2, static_cast<double>(optim.step)));
    const T eps = static_cast<T>(c.eps);
    const T step_size = static_cast<T>(lr);

    auto ps = named_params(model.params);
    auto gs = named_params(const_cast<ParamSet<T>&>(grads));
    auto ms = named_params(optim.m);
    auto vs = named_params(optim.v);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto& p = *ps[i].second;
        const auto& g = *gs[i].second;
        auto& m = *ms[i].second;
        auto& v = *vs[i].second;
        m = b1 * m + (static_cast<T>(1) - b1) * g;
        v.array() = b2 * v.array() + (static_cast<T>(1) - b2) * g.array().square();
        p.array() -=
            step_size * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    }
}

template <typename T>
LogitsObjective<T> masked_ce_objective(const TokenSeq& x0, const std::vector<double>& weights) {
    std::vector<TokenId> targets = x0.ids;
    return [targets, weights](const Mat<T>& logits, Mat<T>& grad) -> double {
        if (static_cast<std::size_t>(logits.rows()) != targets.size() ||
            weights.size() != targets.size()) {
            throw ShapeMismatch("masked_ce_objective: logits/targets/weights disagree");
        }
        const Eigen::Index v = logits.cols();
        double loss = 0.0;
        std::vector<double> probs(static_cast<std::size_t>(v));
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            const double w = weights[static_cast<std::size_t>(i)];
            if (w == 0.0) {
                continue;
            }
            // log-sum-exp in double for tight loss oracles
            double mx = -1e308;
            for (Eigen::Index j = 0; j < v; ++j) {
                mx = std::max(mx, static_cast<double>(logits(i, j)));
            }
            double denom = 0.0;
            for (Eigen::Index j = 0; j < v; ++j) {
                const double e = std::exp(static_cast<double>(logits(i, j)) - mx);
                probs[static_cast<std::size_t>(j)] = e;
                denom += e;
            }
            const TokenId target = targets[static_cast<std::size_t>(i)];
            const double logp =
                static_cast<double>(logits(i, target)) - mx - std::log(denom);
            loss -= w * logp;
            for (Eigen::Index j = 0; j < v; ++j) {
                const double p = probs[static_cast<std::size_t>(j)] / denom;
                const double onehot = (j == target) ? 1.0 : 0.0;
                grad(i, j) += static_cast<T>(w * (p - onehot));
            }
        }
        return loss;
    };
}

template <typename T>
LossStats diffusion_loss_grad(const DenoiserModel<T>& model, const Batch& batch,
                              const Schedule& schedule, LossMode mode, int cart_window,
                              Rng& rng, ParamSet<T>& grads, int threads) {
    if (batch.size() == 0) {
        throw ConfigError("diffusion_loss: empty batch");
    }
    const TokenId mask_id = model.config.vocab_size - 4;
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    // Noising draws happen sequentially so the rng stream does not depend on
    // the thread count; only the model passes run in parallel.
    struct Item {
        NoisedSequence x_t;
        std::vector<double> weights;
        bool active = false;
    };
    std::vector<Item> items(batch.size());
    double masked_frac = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const TokenSeq& x0 = batch.seqs[i];
        Item& item = items[i];
        double t = 1.0 - rng.uniform();
        item.x_t = forward_noise(x0, t, schedule, mask_id, rng);
        if (item.x_t.masked_count() == 0) {
            t = 1.0 - rng.uniform();
            item.x_t = forward_noise(x0, t, schedule, mask_id, rng);
        }
        const std::int32_t masked = item.x_t.masked_count();
        if (masked == 0) {
            continue;  // contributes zero this step
        }
        const std::int32_t resp = x0.size() - x0.prompt_len;
        masked_frac += resp > 0 ? static_cast<double>(masked) / resp : 0.0;
        const double w = schedule.loss_weight(t);
        if (mode == LossMode::cart) {
            item.weights = cart_weights(item.x_t, w, cart_window);
        } else {
            item.weights.assign(item.x_t.ids.size(), 0.0);
            for (std::size_t p = 0; p < item.weights.size(); ++p) {
                if (item.x_t.mask_flags[p]) {
                    item.weights[p] = w;
                }
            }
        }
        for (auto& wi : item.weights) {
            wi *= inv_b;
        }
        item.active = true;
    }

    const int n = static_cast<int>(batch.size());
    const int workers = effective_workers(n, threads);
    std::vector<ParamSet<T>> worker_grads;
    std::vector<double> worker_loss(static_cast<std::size_t>(workers), 0.0);
    worker_grads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        worker_grads.push_back(zeros_like(model.params));
    }
    parallel_for(n, threads, [&](int i, int w) {
        const Item& item = items[static_cast<std::size_t>(i)];
        if (!item.active) {
            return;
        }
        auto obj = masked_ce_objective<T>(batch.seqs[static_cast<std::size_t>(i)], item.weights);
        worker_loss[static_cast<std::size_t>(w)] +=
            accumulate_grad(model, item.x_t, obj, worker_grads[static_cast<std::size_t>(w)]);
    });

    LossStats stats;
    auto sinks = named_params(grads);
    for (int w = 0; w < workers; ++w) {
        stats.loss += worker_loss[static_cast<std::size_t>(w)];
        auto srcs = named_params(worker_grads[static_cast<std::size_t>(w)]);
        for (std::size_t k = 0; k < sinks.size(); ++k) {
            *sinks[k].second += *srcs[k].second;
        }
    }
    stats.masked_fraction = masked_frac * inv_b;
    if (!std::isfinite(stats.loss)) {
        throw NonFiniteLoss("diffusion loss is not finite");
    }
    return stats;
}

Batch random_truncate(const Batch& batch, TokenId eos, TokenId pad, Rng& rng) {
    Batch out = batch;
    const std::size_t b = batch.size();
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(b));
        const std::int32_t li = batch.response_len[i];
        const std::int32_t lj = batch.response_len[j];
        if (lj >= li) {
            continue;
        }
        TokenSeq& seq = out.seqs[i];
        seq.ids.resize(static_cast<std::size_t>(seq.prompt_len + lj));
        seq.ids.push_back(eos);
        out.response_len[i] = lj;
    }
    std::int32_t max_len = 0;
    for (const auto& s : out.seqs) {
        max_len = std::max(max_len, s.size());
    }
    for (auto& s : out.seqs) {
        s.ids.resize(static_cast<std::size_t>(max_len), pad);
    }
    return out;
}

template <typename T>
LossStats train_step(DenoiserModel<T>& model, OptimState<T>& optim, const Batch& batch,
                     const Schedule& schedule, LossMode mode, int cart_window, Rng& rng,
                     int threads) {
    ParamSet<T> grads = zeros_like(model.params);
    LossStats stats =
        diffusion_loss_grad(model, batch, schedule, mode, cart_window, rng, grads, threads);
    apply_adam(model, optim, grads);
    return stats;
}

LossMode loss_mode_from_string(const std::string& name) {
    if (name == "uniform_w") return LossMode::uniform_w;
    if (name == "cart") return LossMode::cart;
    throw ConfigError("unknown loss mode: " + name);
}

const char* to_string(LossMode mode) {
    return mode == LossMode::cart ? "cart" : "uniform_w";
}

#define DRIFTLAB_INSTANTIATE(T)                                                            \
    template OptimState<T> make_optim_state<T>(const DenoiserModel<T>&, const AdamConfig&); \
    template void apply_adam<T>(DenoiserModel<T>&, OptimState<T>&, const ParamSet<T>&);    \
    template LogitsObjective<T> masked_ce_objective<T>(const TokenSeq&,                    \
                                                       const std::vector<double>&);       \
    template LossStats diffusion_loss_grad<T>(const DenoiserModel<T>&, const Batch&,       \
                                              const Schedule&, LossMode, int, Rng&,       \
                                              ParamSet<T>&, int);                         \
    template LossStats train_step<T>(DenoiserModel<T>&, OptimState<T>&, const Batch&,     \
                                     const Schedule&, LossMode, int, Rng&, int);

DRIFTLAB_INSTANTIATE(float)
DRIFTLAB_INSTANTIATE(double)

#undef DRIFTLAB_INSTANTIATE

}  // namespace driftlab

#include "driftlab/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace driftlab {

void SampleConfig::validate() const {
    if (gen_len < 1) {
        throw ConfigError("sample config: gen_len must be >= 1");
    }
    if (steps < 1 || steps > gen_len * 4) {
        throw ConfigError("sample config: steps must be in [1, gen_len*4]");
    }
    if (temperature < 0.0) {
        throw ConfigError("sample config: temperature must be >= 0");
    }
    if (pad_penalty_p0 < 0.0) {
        throw ConfigError("sample config: pad penalty must be >= 0");
    }
}

double pad_penalty(int step, int steps, double p0) {
    return p0 * (1.0 - static_cast<double>(step) / static_cast<double>(steps));
}

namespace {

struct Candidate {
    std::int32_t pos;   // response-relative
    TokenId token;
    double score;       // higher commits earlier
};

}  // namespace

template <typename T>
std::pair<TokenSeq, OrderTrace> generate(const DenoiserModel<T>& model, const TokenSeq& prompt,
                                         const SampleConfig& cfg, Rng& rng) {
    cfg.validate();
    const int prompt_len = prompt.size();
    const int total = prompt_len + cfg.gen_len;
    if (total > model.config.max_len) {
        throw ConfigError("generate: prompt_len + gen_len exceeds max_len");
    }
    const int v = model.config.vocab_size;
    const TokenId mask_id = v - 4;
    const TokenId pad_id = v - 3;

    NoisedSequence work;
    work.ids = prompt.ids;
    work.ids.resize(static_cast<std::size_t>(total), mask_id);
    work.mask_flags.assign(static_cast<std::size_t>(total), 0);
    for (int i = prompt_len; i < total; ++i) {
        work.mask_flags[static_cast<std::size_t>(i)] = 1;
    }
    work.prompt_len = prompt_len;
    work.t = 1.0;

    OrderTrace trace;
    trace.commit_step.assign(static_cast<std::size_t>(cfg.gen_len), -1);
    trace.committed.assign(static_cast<std::size_t>(cfg.gen_len), mask_id);

    std::vector<double> probs(static_cast<std::size_t>(v));
    int committed = 0;
    for (int s = 0; s < cfg.steps && committed < cfg.gen_len; ++s) {
        const int remaining = cfg.gen_len - committed;
        const int commit_now =
            (remaining + (cfg.steps - s) - 1) / (cfg.steps - s);  // ceil split
        const double penalty = pad_penalty(s, cfg.steps, cfg.pad_penalty_p0);

        const Mat<T> logits = forward(model, work);

        std::vector<Candidate> cands;
        cands.reserve(static_cast<std::size_t>(remaining));
        for (int r = 0; r < cfg.gen_len; ++r) {
            const int pos = prompt_len + r;
            if (!work.mask_flags[static_cast<std::size_t>(pos)]) {
                continue;
            }
            // Categorical over the vocabulary; MASK can never be emitted.
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < v; ++j) {
                double z = static_cast<double>(logits(pos, j));
                if (j == pad_id) {
                    z -= penalty;
                }
                probs[static_cast<std::size_t>(j)] = z;
                if (j != mask_id) {
                    mx = std::max(mx, z);
                }
            }
            const double temp = cfg.temperature > 0.0 ? cfg.temperature : 1.0;
            double denom = 0.0;
            for (int j = 0; j < v; ++j) {
                double& p = probs[static_cast<std::size_t>(j)];
                p = (j == mask_id) ? 0.0 : std::exp((p - mx) / temp);
                denom += p;
            }

            TokenId pick = 0;
            double best = -1.0;
            double max_p = 0.0;
            double entropy = 0.0;
            for (int j = 0; j < v; ++j) {
                const double p = probs[static_cast<std::size_t>(j)] / denom;
                max_p = std::max(max_p, p);
                if (p > 0.0) {
                    entropy -= p * std::log(p);
                }
                if (p > best) {
                    best = p;
                    pick = j;
                }
            }
            if (cfg.temperature > 0.0) {
                const double u = rng.uniform() * denom;
                double acc = 0.0;
                for (int j = 0; j < v; ++j) {
                    acc += probs[static_cast<std::size_t>(j)];
                    if (u < acc) {
                        pick = j;
                        break;
                    }
                }
            }

            double score = 0.0;
            switch (cfg.strategy) {
                case Strategy::confidence:
                    score = max_p;
                    break;
                case Strategy::entropy:
                    score = -entropy;
                    break;
                case Strategy::random:
                    score = rng.uniform();
                    break;
                case Strategy::left_to_right:
                    score = -static_cast<double>(r);
                    break;
            }
            cands.push_back({r, pick, score});
        }

        // Highest score first; ties resolve to the lowest position.
        std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            if (a.score != b.score) {
                return a.score > b.score;
            }
            return a.pos < b.pos;
        });
        const int take = std::min<int>(commit_now, static_cast<int>(cands.size()));
        for (int i = 0; i < take; ++i) {
            const Candidate& c = cands[static_cast<std::size_t>(i)];
            const int pos = prompt_len + c.pos;
            work.ids[static_cast<std::size_t>(pos)] = c.token;
            work.mask_flags[static_cast<std::size_t>(pos)] = 0;
            trace.commit_step[static_cast<std::size_t>(c.pos)] = s;
            trace.committed[static_cast<std::size_t>(c.pos)] = c.token;
            ++committed;
        }
    }

    TokenSeq out;
    out.ids = std::move(work.ids);
    out.prompt_len = prompt_len;
    return {std::move(out), std::move(trace)};
}

PatternStats order_stats(const OrderTrace& trace) {
    PatternStats stats;
    const std::int32_t n = static_cast<std::int32_t>(trace.commit_step.size());
    if (n < 2) {
        stats.kendall_tau = 1.0;
        stats.label = PatternLabel::left_to_right;
        return stats;
    }

    // Kendall tau-b between position (all distinct) and commit step (tied
    // within a step).
    long long concordant = 0, discordant = 0, ties_y = 0;
    for (std::int32_t i = 0; i < n; ++i) {
        for (std::int32_t j = i + 1; j < n; ++j) {
            const std::int32_t a = trace.commit_step[static_cast<std::size_t>(i)];
            const std::int32_t b = trace.commit_step[static_cast<std::size_t>(j)];
            if (a == b) {
                ++ties_y;
            } else if (a < b) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double n0 = 0.5 * static_cast<double>(n) * (n - 1);
    const double denom = std::sqrt(n0 * (n0 - static_cast<double>(ties_y)));
    stats.kendall_tau =
        denom > 0.0 ? static_cast<double>(concordant - discordant) / denom : 0.0;

    if (stats.kendall_tau >= 0.8) {
        stats.label = PatternLabel::left_to_right;
        return stats;
    }

    // Earliest fifth of commits, by (step, position); their positional span
    // decides sketch-first.
    std::vector<std::int32_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        return trace.commit_step[static_cast<std::size_t>(a)] <
               trace.commit_step[static_cast<std::size_t>(b)];
    });
    const std::int32_t head = std::max<std::int32_t>(1, (n + 4) / 5);
    std::int32_t lo = n, hi = -1;
    for (std::int32_t i = 0; i < head; ++i) {
        lo = std::min(lo, order[static_cast<std::size_t>(i)]);
        hi = std::max(hi, order[static_cast<std::size_t>(i)]);
    }
    const double dispersion = static_cast<double>(hi - lo);
    stats.label = dispersion >= 0.5 * n ? PatternLabel::sketch_first : PatternLabel::interleaved;
    return stats;
}

const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::confidence:
            return "confidence";
        case Strategy::entropy:
            return "entropy";
        case Strategy::random:
            return "random";
        case Strategy::left_to_right:
            return "left_to_right";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& name) {
    if (name == "confidence") return Strategy::confidence;
    if (name == "entropy") return Strategy::entropy;
    if (name == "random") return Strategy::random;
    if (name == "left_to_right") return Strategy::left_to_right;
    throw ConfigError("unknown strategy: " + name);
}

const char* to_string(PatternLabel label) {
    switch (label) {
        case PatternLabel::left_to_right:
            return "left_to_right";
        case PatternLabel::sketch_first:
            return "sketch_first";
        case PatternLabel::interleaved:
            return "interleaved";
    }
    return "?";
}

template std::pair<TokenSeq, OrderTrace> generate<float>(const DenoiserModel<float>&,
                                                         const TokenSeq&, const SampleConfig&,
                                                         Rng&);
template std::pair<TokenSeq, OrderTrace> generate<double>(const DenoiserModel<double>&,
                                                          const TokenSeq&, const SampleConfig&,
                                                          Rng&);

}  // namespace driftlab

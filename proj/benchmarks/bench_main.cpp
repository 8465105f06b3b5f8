#include <benchmark/benchmark.h>

#include "driftlab/grpo.hpp"
#include "driftlab/ministack.hpp"
#include "driftlab/model.hpp"
#include "driftlab/noising.hpp"
#include "driftlab/sampler.hpp"
#include "driftlab/tasks.hpp"
#include "driftlab/trainer.hpp"

namespace {

using namespace driftlab;

DenoiserModel<float> bench_model(int len_budget) {
    ModelConfig c;
    c.layers = 2;
    c.heads = 4;
    c.model_dim = 128;
    c.ff_dim = 512;
    c.max_len = len_budget;
    c.vocab_size = pipeline_vocab().size();
    Rng rng(1);
    return init_model<float>(c, rng);
}

NoisedSequence bench_input(int len, int vocab) {
    NoisedSequence x;
    Rng rng(2);
    for (int i = 0; i < len; ++i) {
        const bool masked = rng.uniform() < 0.5;
        x.ids.push_back(masked ? vocab - 4 : static_cast<TokenId>(rng.below(10)));
        x.mask_flags.push_back(masked ? 1 : 0);
    }
    x.t = 0.5;
    return x;
}

void BM_Forward(benchmark::State& state) {
    const int len = static_cast<int>(state.range(0));
    auto model = bench_model(256);
    auto x = bench_input(len, model.config.vocab_size);
    for (auto _ : state) {
        auto logits = forward(model, x);
        benchmark::DoNotOptimize(logits);
    }
    state.SetItemsProcessed(state.iterations() * len);
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

void BM_LossAndGrad(benchmark::State& state) {
    const int len = static_cast<int>(state.range(0));
    auto model = bench_model(256);
    auto x = bench_input(len, model.config.vocab_size);
    TokenSeq x0;
    std::vector<double> weights;
    Rng rng(3);
    for (int i = 0; i < len; ++i) {
        x0.ids.push_back(static_cast<TokenId>(rng.below(10)));
        weights.push_back(x.mask_flags[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
    }
    auto obj = masked_ce_objective<float>(x0, weights);
    ParamSet<float> grads = zeros_like(model.params);
    for (auto _ : state) {
        benchmark::DoNotOptimize(accumulate_grad(model, x, obj, grads));
    }
    state.SetItemsProcessed(state.iterations() * len);
}
BENCHMARK(BM_LossAndGrad)->Arg(32)->Arg(64)->Arg(128);

void BM_Generate(benchmark::State& state) {
    auto model = bench_model(64);
    const Vocab vocab = pipeline_vocab();
    TokenSeq prompt = vocab.encode("task add 3. eg 4>7. eg 9>12. ans:");
    prompt.prompt_len = prompt.size();
    SampleConfig cfg;
    cfg.gen_len = 8;
    cfg.steps = static_cast<int>(state.range(0));
    cfg.temperature = 1.0;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        Rng rng(seed++);
        auto out = generate(model, prompt, cfg, rng);
        benchmark::DoNotOptimize(out);
    }
    state.SetItemsProcessed(state.iterations() * cfg.gen_len);
}
BENCHMARK(BM_Generate)->Arg(2)->Arg(4)->Arg(8);

void BM_MiniStack(benchmark::State& state) {
    const Limits limits;
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_program("9d*7+3s-d*p4+", {12, 5}, limits));
    }
}
BENCHMARK(BM_MiniStack);

void BM_CartWeights(benchmark::State& state) {
    auto x = bench_input(static_cast<int>(state.range(0)), 48);
    if (x.masked_count() == 0) {
        x.mask_flags[0] = 1;
        x.ids[0] = 44;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(cart_weights(x, 1.0, 8));
    }
}
BENCHMARK(BM_CartWeights)->Arg(256)->Arg(4096);

}  // namespace

BENCHMARK_MAIN();

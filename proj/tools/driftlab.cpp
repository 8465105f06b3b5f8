// driftlab -- desk-scale masked-diffusion language-model lab.
//
// Subcommands: gen-data, pretrain, sft, rl, sample, eval, curate, trace.
// Every run is reproducible from its flags and seed; each subcommand prints
// a single-line JSON summary to stdout. Exit codes: 0 ok, 1 runtime error,
// 2 usage error.

#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "driftlab/batch.hpp"
#include "driftlab/checkpoint.hpp"
#include "driftlab/grpo.hpp"
#include "driftlab/model.hpp"
#include "driftlab/sampler.hpp"
#include "driftlab/tasks.hpp"
#include "driftlab/trace_render.hpp"
#include "driftlab/trainer.hpp"
#include "driftlab/util.hpp"
#include "driftlab/vocab.hpp"

namespace {

using driftlab::Batch;
using driftlab::DenoiserModel;
using driftlab::GrpoConfig;
using driftlab::Limits;
using driftlab::LossMode;
using driftlab::ModelConfig;
using driftlab::OrderTrace;
using driftlab::Rng;
using driftlab::SampleConfig;
using driftlab::Schedule;
using driftlab::Task;
using driftlab::TaskFamily;
using driftlab::TokenId;
using driftlab::TokenSeq;
using driftlab::TraceFile;
using driftlab::Vocab;
using json = nlohmann::json;

using Model = DenoiserModel<float>;

void print_summary(const json& j) {
    std::cout << j.dump() << std::endl;
}

std::string format_fixed(double value, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
    return buf;
}

Model load_model_with_vocab(const std::string& path, Vocab& vocab_out) {
    std::optional<Vocab> vocab;
    Model model = driftlab::load_checkpoint<float>(path, &vocab);
    if (!vocab) {
        throw driftlab::Error("checkpoint carries no vocabulary: " + path);
    }
    vocab_out = *vocab;
    return model;
}

std::vector<Task> gen_family_tasks(const std::string& family, int n, Rng& rng) {
    if (family == "mixed") {
        static const TaskFamily kRound[3] = {TaskFamily::add_k, TaskFamily::affine,
                                             TaskFamily::dup_square};
        std::vector<Task> tasks;
        tasks.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            auto one = driftlab::gen_tasks(kRound[i % 3], 1, rng);
            tasks.push_back(std::move(one.front()));
        }
        return tasks;
    }
    return driftlab::gen_tasks(driftlab::task_family_from_string(family), n, rng);
}

// ---------------------------------------------------------------- options

struct CommonModelOpts {
    int layers = 2;
    int heads = 4;
    int model_dim = 128;
    int ff_dim = 512;
    int max_len = 256;

    void attach(CLI::App& cmd) {
        cmd.add_option("--layers", layers, "Transformer layers")->capture_default_str();
        cmd.add_option("--heads", heads, "Attention heads")->capture_default_str();
        cmd.add_option("--model-dim", model_dim, "Residual width")->capture_default_str();
        cmd.add_option("--ff-dim", ff_dim, "Feed-forward width")->capture_default_str();
        cmd.add_option("--max-len", max_len, "Maximum sequence length")->capture_default_str();
    }

    ModelConfig config(int vocab_size) const {
        ModelConfig c;
        c.layers = layers;
        c.heads = heads;
        c.model_dim = model_dim;
        c.ff_dim = ff_dim;
        c.max_len = max_len;
        c.vocab_size = vocab_size;
        return c;
    }
};

struct TrainOpts {
    std::string data;
    std::string out;
    std::string metrics;
    std::string init;
    int steps = 1000;
    int batch_size = 16;
    double lr = 3e-4;
    int warmup = 100;
    std::string weight_mode = "elbo";
    std::string loss_mode = "uniform_w";
    int cart_window = 8;

    void attach(CLI::App& cmd, bool sft) {
        cmd.add_option("--data", data, sft ? "JSONL {prompt, response} corpus"
                                           : "JSONL {text} corpus")
            ->required();
        cmd.add_option("--out", out, "Checkpoint output path")->required();
        cmd.add_option("--metrics", metrics, "CSV metrics output path");
        cmd.add_option("--init", init, "Checkpoint to continue from");
        cmd.add_option("--steps", steps, "Optimizer steps")->capture_default_str();
        cmd.add_option("--batch-size", batch_size, "Sequences per step")->capture_default_str();
        cmd.add_option("--lr", lr, "Peak learning rate")->capture_default_str();
        cmd.add_option("--warmup", warmup, "Warmup steps")->capture_default_str();
        cmd.add_option("--weight-mode", weight_mode, "uniform | elbo | linear_t")
            ->capture_default_str();
        cmd.add_option("--loss-mode", loss_mode, "uniform_w | cart")->capture_default_str();
        cmd.add_option("--cart-window", cart_window, "Distance cap for cart weights")
            ->capture_default_str();
    }
};

struct SamplerOpts {
    int gen_len = 8;
    int steps = 8;
    std::string strategy = "confidence";
    double temperature = 0.0;
    double pad_penalty = 0.0;

    void attach(CLI::App& cmd) {
        cmd.add_option("--gen-len", gen_len, "Response length")->capture_default_str();
        cmd.add_option("--steps", steps, "Decode steps")->capture_default_str();
        cmd.add_option("--strategy", strategy, "confidence | entropy | random | left_to_right")
            ->capture_default_str();
        cmd.add_option("--temperature", temperature, "0 is greedy")->capture_default_str();
        cmd.add_option("--pad-penalty", pad_penalty, "Initial PAD logit penalty")
            ->capture_default_str();
    }

    SampleConfig config(std::uint64_t seed) const {
        SampleConfig c;
        c.gen_len = gen_len;
        c.steps = steps;
        c.strategy = driftlab::strategy_from_string(strategy);
        c.temperature = temperature;
        c.pad_penalty_p0 = pad_penalty;
        c.seed = seed;
        return c;
    }
};

// ---------------------------------------------------------------- training

int run_training(bool sft, const TrainOpts& opts, const CommonModelOpts& dims,
                 std::uint64_t seed, int threads, bool truncate) {
    const Vocab vocab = driftlab::pipeline_vocab();
    Schedule schedule;
    schedule.weight_mode = driftlab::weight_mode_from_string(opts.weight_mode);
    const LossMode mode = driftlab::loss_mode_from_string(opts.loss_mode);

    Rng rng(seed);
    Model model = [&] {
        if (!opts.init.empty()) {
            Vocab ignored = vocab;
            return load_model_with_vocab(opts.init, ignored);
        }
        Rng init_rng(driftlab::derive_seed(seed, 0xD1F7));
        return driftlab::init_model<float>(dims.config(vocab.size()), init_rng);
    }();

    driftlab::AdamConfig adam;
    adam.lr = opts.lr;
    adam.warmup_steps = opts.warmup;
    adam.total_steps = opts.steps;
    auto optim = driftlab::make_optim_state(model, adam);

    std::vector<driftlab::PretrainExample> pretrain_corpus;
    std::vector<driftlab::SftExample> sft_corpus;
    std::size_t corpus_size = 0;
    if (sft) {
        sft_corpus = driftlab::load_sft_jsonl(opts.data);
        corpus_size = sft_corpus.size();
    } else {
        pretrain_corpus = driftlab::load_pretrain_jsonl(opts.data);
        corpus_size = pretrain_corpus.size();
    }
    if (corpus_size == 0) {
        throw driftlab::Error("empty corpus: " + opts.data);
    }

    std::ofstream csv;
    if (!opts.metrics.empty()) {
        csv.open(opts.metrics, std::ios::trunc);
        if (!csv) {
            throw driftlab::Error("cannot open metrics file: " + opts.metrics);
        }
        csv << "step,loss,masked_fraction,weight_mode\n";
    }

    double last_loss = 0.0;
    for (int step = 1; step <= opts.steps; ++step) {
        std::vector<std::size_t> indices(static_cast<std::size_t>(opts.batch_size));
        for (auto& idx : indices) {
            idx = static_cast<std::size_t>(rng.below(corpus_size));
        }
        Batch batch = sft ? driftlab::make_sft_batch(vocab, sft_corpus, indices)
                          : driftlab::make_pretrain_batch(vocab, pretrain_corpus, indices);
        if (sft && truncate) {
            batch = driftlab::random_truncate(batch, vocab.eos_id(), vocab.pad_id(), rng);
        }
        const auto stats = driftlab::train_step(model, optim, batch, schedule, mode,
                                                opts.cart_window, rng, threads);
        last_loss = stats.loss;
        if (csv.is_open()) {
            csv << step << ',' << format_fixed(stats.loss, 6) << ','
                << format_fixed(stats.masked_fraction, 4) << ',' << opts.weight_mode << '\n';
        }
    }

    driftlab::save_checkpoint(model, opts.out, &vocab);
    print_summary(json{{"cmd", sft ? "sft" : "pretrain"},
                       {"steps", opts.steps},
                       {"final_loss", format_fixed(last_loss, 6)},
                       {"ckpt", opts.out}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"driftlab: a desk-scale masked-diffusion language-model laboratory"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Read defaults from a key=value file");
    app.allow_config_extras(CLI::config_extras_mode::error);

    std::uint64_t seed = 1;
    int threads = 1;
    app.add_option("--seed", seed, "Seed for every stochastic choice")
        ->envname("DRIFTLAB_SEED")
        ->capture_default_str();
    app.add_option("--threads", threads, "Internal parallelism cap")->capture_default_str();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate task/SFT/pretraining corpora");
    std::string gen_kind = "tasks", gen_family = "mixed", gen_out, gen_vocab_out;
    int gen_n = 100;
    gen->add_option("--kind", gen_kind, "tasks | sft | pretrain")->capture_default_str();
    gen->add_option("--family", gen_family, "add_k | affine | dup_square | mixed")
        ->capture_default_str();
    gen->add_option("--n", gen_n, "Number of examples")->capture_default_str();
    gen->add_option("--out", gen_out, "Output JSONL path")->required();
    gen->add_option("--vocab-out", gen_vocab_out, "Also write the pipeline vocab JSON here");

    // pretrain / sft
    auto* pretrain = app.add_subcommand("pretrain", "Masked-diffusion pretraining");
    TrainOpts pre_opts;
    CommonModelOpts pre_dims;
    pre_opts.attach(*pretrain, /*sft=*/false);
    pre_dims.attach(*pretrain);

    auto* sft = app.add_subcommand("sft", "Supervised fine-tuning with random truncation");
    TrainOpts sft_opts;
    CommonModelOpts sft_dims;
    sft_opts.attach(*sft, /*sft=*/true);
    sft_dims.attach(*sft);
    bool no_truncate = false;
    sft->add_flag("--no-truncate", no_truncate, "Disable random response truncation");

    // rl
    auto* rl = app.add_subcommand("rl", "GRPO reinforcement learning on verifiable tasks");
    std::string rl_ckpt, rl_tasks, rl_out, rl_log;
    int rl_steps = 200, rl_group = 8, rl_prompts = 8, rl_inner = 1;
    double rl_lr = 1e-4, rl_eps_low = 0.2, rl_eps_high = 0.28, rl_t_estimate = 0.5;
    SamplerOpts rl_sampler;
    rl_sampler.temperature = 1.0;
    rl->add_option("--ckpt", rl_ckpt, "Initial checkpoint")->required();
    rl->add_option("--tasks", rl_tasks, "Task JSONL")->required();
    rl->add_option("--out", rl_out, "Checkpoint output path")->required();
    rl->add_option("--log", rl_log, "JSONL step log");
    rl->add_option("--rl-steps", rl_steps, "GRPO steps")->capture_default_str();
    rl->add_option("--group-size", rl_group, "Rollouts per prompt (G)")->capture_default_str();
    rl->add_option("--prompts-per-step", rl_prompts, "Prompts per step")->capture_default_str();
    rl->add_option("--inner-epochs", rl_inner, "Optimizer epochs per batch")
        ->capture_default_str();
    rl->add_option("--lr", rl_lr, "Learning rate")->capture_default_str();
    rl->add_option("--eps-low", rl_eps_low, "Lower clip bound")->capture_default_str();
    rl->add_option("--eps-high", rl_eps_high, "Upper clip bound")->capture_default_str();
    rl->add_option("--t-estimate", rl_t_estimate, "Noise level for likelihood passes")
        ->capture_default_str();
    rl_sampler.attach(*rl);

    // sample
    auto* sample = app.add_subcommand("sample", "Decode one prompt and write the trace");
    std::string sample_ckpt, sample_prompt, sample_out;
    SamplerOpts sample_sampler;
    sample->add_option("--ckpt", sample_ckpt, "Checkpoint")->required();
    sample->add_option("--prompt", sample_prompt, "Prompt text")->required();
    sample->add_option("--out", sample_out, "Trace JSON output path")->required();
    sample_sampler.attach(*sample);

    // eval
    auto* eval = app.add_subcommand("eval", "pass@1 over a task file");
    std::string eval_ckpt, eval_tasks;
    SamplerOpts eval_sampler;
    eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
    eval->add_option("--tasks", eval_tasks, "Task JSONL")->required();
    eval_sampler.attach(*eval);

    // curate
    auto* curate = app.add_subcommand("curate", "Three-phase task filtering");
    std::string cur_tasks, cur_ckpt, cur_out;
    SamplerOpts cur_sampler;
    cur_sampler.temperature = 1.0;
    curate->add_option("--tasks", cur_tasks, "Task JSONL input")->required();
    curate->add_option("--ckpt", cur_ckpt, "Checkpoint for difficulty calibration")->required();
    curate->add_option("--out", cur_out, "Filtered task JSONL output")->required();
    cur_sampler.attach(*curate);

    // trace
    auto* trace = app.add_subcommand("trace", "Render a trace file");
    std::string trace_in, trace_html;
    bool trace_ansi = false;
    trace->add_option("--in", trace_in, "Trace JSON")->required();
    trace->add_option("--html", trace_html, "Write static HTML here");
    trace->add_flag("--ansi", trace_ansi, "Print ANSI rendering to stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            Rng rng(seed);
            if (gen_kind != "tasks" && gen_kind != "sft" && gen_kind != "pretrain") {
                throw driftlab::ConfigError("unknown gen-data kind: " + gen_kind);
            }
            const std::vector<Task> tasks = gen_family_tasks(gen_family, gen_n, rng);
            if (gen_kind == "tasks") {
                driftlab::save_tasks_jsonl(tasks, gen_out);
            } else {
                std::ofstream out(gen_out, std::ios::trunc);
                if (!out) {
                    throw driftlab::Error("cannot open output: " + gen_out);
                }
                for (const Task& t : tasks) {
                    if (gen_kind == "sft") {
                        out << json{{"prompt", t.prompt}, {"response", t.solution}}.dump()
                            << '\n';
                    } else {
                        out << json{{"text", t.prompt + t.solution}}.dump() << '\n';
                    }
                }
            }
            if (!gen_vocab_out.empty()) {
                std::ofstream vout(gen_vocab_out, std::ios::trunc);
                vout << driftlab::pipeline_vocab().to_json() << '\n';
            }
            print_summary(json{{"cmd", "gen-data"},
                               {"kind", gen_kind},
                               {"family", gen_family},
                               {"n", gen_n},
                               {"out", gen_out}});
        } else if (*pretrain) {
            return run_training(false, pre_opts, pre_dims, seed, threads, false);
        } else if (*sft) {
            return run_training(true, sft_opts, sft_dims, seed, threads, !no_truncate);
        } else if (*rl) {
            Vocab vocab = driftlab::pipeline_vocab();
            Model model = load_model_with_vocab(rl_ckpt, vocab);
            const std::vector<Task> tasks = driftlab::load_tasks_jsonl(rl_tasks);
            if (tasks.empty()) {
                throw driftlab::Error("no tasks in " + rl_tasks);
            }
            GrpoConfig cfg;
            cfg.group_size = rl_group;
            cfg.eps_low = rl_eps_low;
            cfg.eps_high = rl_eps_high;
            cfg.t_estimate = rl_t_estimate;
            cfg.inner_epochs = rl_inner;
            cfg.rollout = rl_sampler.config(seed);
            driftlab::AdamConfig adam;
            adam.lr = rl_lr;
            adam.warmup_steps = 0;
            auto optim = driftlab::make_optim_state(model, adam);
            const Limits limits;

            std::ofstream log;
            if (!rl_log.empty()) {
                log.open(rl_log, std::ios::trunc);
                if (!log) {
                    throw driftlab::Error("cannot open log: " + rl_log);
                }
            }
            Rng rng(seed);
            double last_reward = 0.0;
            for (int step = 1; step <= rl_steps; ++step) {
                std::vector<std::size_t> picks(static_cast<std::size_t>(rl_prompts));
                for (auto& p : picks) {
                    p = static_cast<std::size_t>(rng.below(tasks.size()));
                }
                const auto stats =
                    driftlab::rl_step(model, optim, tasks, picks, cfg, limits, vocab, rng, threads);
                last_reward = stats.mean_reward;
                if (log.is_open()) {
                    log << json{{"step", step},
                                {"mean_reward", stats.mean_reward},
                                {"clip_frac", stats.clip_frac},
                                {"substituted", stats.substituted},
                                {"skip_update", stats.skip_update}}
                               .dump()
                        << '\n';
                }
            }
            driftlab::save_checkpoint(model, rl_out, &vocab);
            print_summary(json{{"cmd", "rl"},
                               {"steps", rl_steps},
                               {"mean_reward_last", last_reward},
                               {"ckpt", rl_out}});
        } else if (*sample) {
            Vocab vocab = driftlab::pipeline_vocab();
            Model model = load_model_with_vocab(sample_ckpt, vocab);
            TokenSeq prompt = vocab.encode(sample_prompt);
            prompt.prompt_len = prompt.size();
            const SampleConfig cfg = sample_sampler.config(seed);
            Rng rng(seed);
            auto [seq, order] = driftlab::generate(model, prompt, cfg, rng);

            TraceFile tf;
            tf.config = cfg;
            tf.commit_step = order.commit_step;
            for (int i = prompt.size(); i < seq.size(); ++i) {
                tf.tokens.push_back(vocab.token_text(seq.ids[static_cast<std::size_t>(i)]));
            }
            driftlab::write_trace(tf, sample_out);
            const auto stats = driftlab::order_stats(order);
            std::vector<TokenId> response(seq.ids.begin() + prompt.size(), seq.ids.end());
            print_summary(json{{"cmd", "sample"},
                               {"text", vocab.decode(response)},
                               {"label", driftlab::to_string(stats.label)},
                               {"tau", format_fixed(stats.kendall_tau, 4)},
                               {"out", sample_out}});
        } else if (*eval) {
            Vocab vocab = driftlab::pipeline_vocab();
            Model model = load_model_with_vocab(eval_ckpt, vocab);
            const std::vector<Task> tasks = driftlab::load_tasks_jsonl(eval_tasks);
            if (tasks.empty()) {
                throw driftlab::Error("no tasks in " + eval_tasks);
            }
            const Limits limits;
            Rng rng(seed);
            std::vector<Rng> task_rngs;
            task_rngs.reserve(tasks.size());
            for (std::size_t i = 0; i < tasks.size(); ++i) {
                task_rngs.push_back(rng.fork());
            }
            std::vector<int> passed(tasks.size(), 0);
            driftlab::parallel_for(static_cast<int>(tasks.size()), threads, [&](int i, int) {
                const Task& task = tasks[static_cast<std::size_t>(i)];
                TokenSeq prompt = vocab.encode(task.prompt);
                prompt.prompt_len = prompt.size();
                Rng local = task_rngs[static_cast<std::size_t>(i)];
                const SampleConfig cfg = eval_sampler.config(local.seed());
                auto [seq, order] = driftlab::generate(model, prompt, cfg, local);
                std::vector<TokenId> response(seq.ids.begin() + prompt.size(), seq.ids.end());
                passed[static_cast<std::size_t>(i)] =
                    driftlab::score(driftlab::extract_program(vocab, response), task, limits);
            });
            int passes = 0;
            for (int p : passed) {
                passes += p;
            }
            const double rate = static_cast<double>(passes) / static_cast<double>(tasks.size());
            print_summary(json{{"cmd", "eval"},
                               {"pass_at_1", format_fixed(rate, 4)},
                               {"passes", passes},
                               {"total", tasks.size()}});
        } else if (*curate) {
            Vocab vocab = driftlab::pipeline_vocab();
            Model model = load_model_with_vocab(cur_ckpt, vocab);
            const std::vector<Task> tasks = driftlab::load_tasks_jsonl(cur_tasks);
            driftlab::CurateStats stats;
            Rng rng(seed);
            const Limits limits;
            const auto kept = driftlab::curate(tasks, model, vocab, cur_sampler.config(seed),
                                               limits, rng, &stats);
            driftlab::save_tasks_jsonl(kept, cur_out);
            print_summary(json{{"cmd", "curate"},
                               {"kept", stats.kept},
                               {"dropped_tests", stats.dropped_tests},
                               {"dropped_dup", stats.dropped_dup},
                               {"dropped_solved", stats.dropped_solved},
                               {"out", cur_out}});
        } else if (*trace) {
            const TraceFile tf = driftlab::read_trace(trace_in);
            if (!trace_html.empty()) {
                std::ofstream out(trace_html, std::ios::trunc);
                if (!out) {
                    throw driftlab::Error("cannot open html output: " + trace_html);
                }
                out << driftlab::render_trace_html(tf);
            }
            if (trace_ansi) {
                std::cout << driftlab::render_trace_ansi(tf);
            }
            OrderTrace ot;
            ot.commit_step = tf.commit_step;
            ot.committed.assign(tf.commit_step.size(), 0);
            const auto stats = driftlab::order_stats(ot);
            print_summary(json{{"cmd", "trace"},
                               {"tokens", tf.tokens.size()},
                               {"label", driftlab::to_string(stats.label)},
                               {"tau", format_fixed(stats.kendall_tau, 4)}});
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}

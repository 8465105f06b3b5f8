#include <doctest.h>

#include <algorithm>

#include "driftlab/ministack.hpp"
#include "driftlab/tasks.hpp"

using namespace driftlab;

namespace {
const Limits kLimits;

template <typename T>
DenoiserModel<T> zero_model(int vocab) {
    ModelConfig c;
    c.layers = 1;
    c.heads = 2;
    c.model_dim = 16;
    c.ff_dim = 32;
    c.max_len = 64;
    c.vocab_size = vocab;
    Rng rng(1);
    auto model = init_model<T>(c, rng);
    for (auto& [name, mat] : named_params(model.params)) {
        mat->setZero();
    }
    return model;
}
}  // namespace

TEST_CASE("basic arithmetic programs") {
    CHECK(run_program("34+", {}, kLimits).value == 7);
    CHECK(run_program("5", {}, kLimits).value == 5);
    CHECK(run_program("34-", {}, kLimits).value == -1);
    CHECK(run_program("34*", {}, kLimits).value == 12);
    CHECK(run_program("3d+", {}, kLimits).value == 6);   // dup
    CHECK(run_program("34s-", {}, kLimits).value == 1);  // swap: 4-3
    CHECK(run_program("34p", {}, kLimits).value == 3);   // pop
}

TEST_CASE("programs read the input stack") {
    CHECK(run_program("3+", {5}, kLimits).value == 8);
    CHECK(run_program("d*", {7}, kLimits).value == 49);
    CHECK(run_program("", {42}, kLimits).value == 42);
}

TEST_CASE("interpreter error outcomes") {
    CHECK(run_program("+", {}, kLimits).status == RunStatus::stack_underflow);
    CHECK(run_program("p", {}, kLimits).status == RunStatus::stack_underflow);
    CHECK(run_program("", {}, kLimits).status == RunStatus::empty_result);

    const RunResult parse = run_program("3x+", {}, kLimits);
    CHECK(parse.status == RunStatus::parse_error);
    CHECK(parse.error_pos == 1);

    Limits small;
    small.max_stack = 3;
    CHECK(run_program("1111", {}, small).status == RunStatus::stack_overflow);

    Limits few_steps;
    few_steps.max_steps = 4;
    CHECK(run_program("11111", {}, few_steps).status == RunStatus::step_limit);
}

TEST_CASE("repeated squaring trips the overflow guard instead of wrapping") {
    const RunResult r = run_program("9d*d*d*d*d*d*d*d*", {}, kLimits);
    CHECK(r.status == RunStatus::value_overflow);
}

TEST_CASE("identical runs give identical results") {
    for (int i = 0; i < 10; ++i) {
        const RunResult a = run_program("34+d*", {2}, kLimits);
        const RunResult b = run_program("34+d*", {2}, kLimits);
        CHECK(a.status == b.status);
        CHECK(a.value == b.value);
    }
}

TEST_CASE("score is binary all-tests-pass") {
    Rng rng(5);
    const auto tasks = gen_tasks(TaskFamily::add_k, 3, rng);
    for (const Task& t : tasks) {
        CHECK(score(t.solution, t, kLimits) == 1);
        CHECK(score("", t, kLimits) == 0);
    }
}

TEST_CASE("one failing test zeroes the reward") {
    Task t;
    t.prompt = "p";
    t.solution = "3+";
    for (int i = 0; i < 4; ++i) {
        t.tests.push_back({{i}, i + 3});
    }
    t.tests.push_back({{10}, 999});  // wrong expectation
    CHECK(score("3+", t, kLimits) == 0);
}

TEST_CASE("generated tasks carry at least 5 verified tests") {
    Rng rng(7);
    for (TaskFamily fam : {TaskFamily::add_k, TaskFamily::affine, TaskFamily::dup_square}) {
        const auto tasks = gen_tasks(fam, 5, rng);
        REQUIRE(tasks.size() == 5);
        for (const Task& t : tasks) {
            REQUIRE(t.tests.size() >= 5);
            REQUIRE(score(t.solution, t, kLimits) == 1);
            REQUIRE(t.family == to_string(fam));
        }
    }
}

TEST_CASE("task generation is deterministic in the seed") {
    Rng a(11), b(11);
    const auto ta = gen_tasks(TaskFamily::affine, 8, a);
    const auto tb = gen_tasks(TaskFamily::affine, 8, b);
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta[i].prompt == tb[i].prompt);
        CHECK(ta[i].solution == tb[i].solution);
        REQUIRE(ta[i].tests.size() == tb[i].tests.size());
        for (std::size_t k = 0; k < ta[i].tests.size(); ++k) {
            CHECK(ta[i].tests[k].input == tb[i].tests[k].input);
            CHECK(ta[i].tests[k].expect == tb[i].tests[k].expect);
        }
    }
}

TEST_CASE("prompts stay within the pipeline vocabulary") {
    const Vocab vocab = pipeline_vocab();
    Rng rng(13);
    for (TaskFamily fam : {TaskFamily::add_k, TaskFamily::affine, TaskFamily::dup_square}) {
        for (const Task& t : gen_tasks(fam, 10, rng)) {
            CHECK_NOTHROW(vocab.encode(t.prompt));
            CHECK_NOTHROW(vocab.encode(t.solution));
        }
    }
}

TEST_CASE("extract_program cuts at the first control token") {
    const Vocab vocab = pipeline_vocab();
    std::vector<TokenId> ids = vocab.encode("3+").ids;
    ids.push_back(vocab.eos_id());
    ids.push_back(vocab.pad_id());
    ids.push_back(vocab.encode("9").ids[0]);
    CHECK(extract_program(vocab, ids) == "3+");
    CHECK(extract_program(vocab, {vocab.pad_id()}) == "");
}

TEST_CASE("jaccard3 similarity") {
    CHECK(jaccard3("task add 3.", "task add 3.") == 1.0);
    CHECK(jaccard3("abcdef", "uvwxyz") == 0.0);
    CHECK(jaccard3("task add 3. eg 1>4.", "task add 3. eg 2>5.") > 0.3);
    CHECK(jaccard3("task add 3. eg 1>4.", "task add 3. eg 2>5.") < 0.9);
}

TEST_CASE("tasks jsonl round trip") {
    Rng rng(17);
    const auto tasks = gen_tasks(TaskFamily::dup_square, 4, rng);
    const std::string path = "test_tasks_rt.jsonl";
    save_tasks_jsonl(tasks, path);
    const auto loaded = load_tasks_jsonl(path);
    REQUIRE(loaded.size() == tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        CHECK(loaded[i].prompt == tasks[i].prompt);
        CHECK(loaded[i].solution == tasks[i].solution);
        CHECK(loaded[i].tests.size() == tasks[i].tests.size());
    }
    std::remove(path.c_str());
}

TEST_CASE("curation drops small, duplicate, and fully solved tasks") {
    const Vocab vocab = pipeline_vocab();
    auto model = zero_model<float>(vocab.size());

    Rng gen_rng(19);
    std::vector<Task> tasks = gen_tasks(TaskFamily::add_k, 2, gen_rng);

    Task small = tasks[0];
    small.tests.resize(4);  // phase 1 victim

    Task duplicate = tasks[1];  // byte-identical prompt, phase 2 victim

    // The zeroed model greedily emits "000...": a task expecting 0 substitutes
    // as trivially solvable, so phase 3 drops it.
    Task trivial;
    trivial.prompt = "task zero. ans:";
    trivial.solution = "0";
    for (int i = 0; i < 6; ++i) {
        trivial.tests.push_back({{i}, 0});
    }
    REQUIRE(score("00000000", trivial, kLimits) == 1);

    std::vector<Task> input = {small, tasks[0], tasks[1], duplicate, trivial};
    SampleConfig cfg;
    cfg.gen_len = 8;
    cfg.steps = 4;
    cfg.temperature = 0.0;
    CurateStats stats;
    Rng rng(23);
    const auto kept = curate(input, model, vocab, cfg, kLimits, rng, &stats);
    CHECK(stats.dropped_tests == 1);
    CHECK(stats.dropped_dup == 1);
    CHECK(stats.dropped_solved == 1);
    CHECK(stats.kept == 2);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].prompt == tasks[0].prompt);
    CHECK(kept[1].prompt == tasks[1].prompt);
}

TEST_CASE("exact duplicates keep exactly one survivor under permutation") {
    const Vocab vocab = pipeline_vocab();
    auto model = zero_model<float>(vocab.size());
    Rng gen_rng(29);
    auto base = gen_tasks(TaskFamily::affine, 2, gen_rng);
    std::vector<Task> input = {base[0], base[1], base[0]};
    SampleConfig cfg;
    cfg.gen_len = 8;
    cfg.steps = 4;

    CurateStats s1, s2;
    Rng r1(31), r2(31);
    const auto k1 = curate(input, model, vocab, cfg, kLimits, r1, &s1);
    std::vector<Task> permuted = {base[0], base[0], base[1]};
    const auto k2 = curate(permuted, model, vocab, cfg, kLimits, r2, &s2);
    CHECK(k1.size() == k2.size());
    CHECK(s1.dropped_dup == 1);
    CHECK(s2.dropped_dup == 1);
}

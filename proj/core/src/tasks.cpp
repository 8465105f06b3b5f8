#include "driftlab/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <unordered_set>

namespace driftlab {

namespace {

constexpr int kTestsPerTask = 6;
constexpr int kMinTests = 5;
constexpr int kDifficultyCandidates = 8;
constexpr double kDedupThreshold = 0.9;

std::int64_t draw_distinct(Rng& rng, std::int64_t lo, std::int64_t hi,
                           std::set<std::int64_t>& used) {
    for (;;) {
        const std::int64_t v =
            lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
        if (used.insert(v).second) {
            return v;
        }
    }
}

std::string worked_examples(Rng& rng, const std::string& solution, const Limits& limits) {
    std::set<std::int64_t> used;
    std::string out;
    for (int e = 0; e < 2; ++e) {
        const std::int64_t x = draw_distinct(rng, 0, 9, used);
        const RunResult r = run_program(solution, {x}, limits);
        out += "eg " + std::to_string(x) + ">" + std::to_string(r.value) + ". ";
    }
    return out;
}

Task finish_task(std::string head, std::string solution, TaskFamily family, Rng& rng,
                 std::int64_t test_input_max) {
    const Limits limits;
    Task task;
    task.solution = std::move(solution);
    task.family = to_string(family);
    task.prompt = std::move(head) + worked_examples(rng, task.solution, limits) + "ans:";

    std::set<std::int64_t> used;
    for (int k = 0; k < kTestsPerTask; ++k) {
        TestCase tc;
        tc.input = {draw_distinct(rng, 0, test_input_max, used)};
        const RunResult r = run_program(task.solution, tc.input, limits);
        if (!r.ok()) {
            throw Error("task generation produced a failing reference solution");
        }
        tc.expect = r.value;
        task.tests.push_back(std::move(tc));
    }
    if (score(task.solution, task, limits) != 1) {
        throw Error("reference solution does not pass its own tests");
    }
    return task;
}

}  // namespace

int score(std::string_view program, const Task& task, const Limits& limits) {
    for (const TestCase& tc : task.tests) {
        const RunResult r = run_program(program, tc.input, limits);
        if (!r.ok() || r.value != tc.expect) {
            return 0;
        }
    }
    return 1;
}

std::vector<Task> gen_tasks(TaskFamily family, int n, Rng& rng) {
    if (n < 1) {
        throw ConfigError("gen_tasks: n must be >= 1");
    }
    std::vector<Task> tasks;
    tasks.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        switch (family) {
            case TaskFamily::add_k: {
                const int k = 1 + static_cast<int>(rng.below(9));
                tasks.push_back(finish_task("task add " + std::to_string(k) + ". ",
                                            std::to_string(k) + "+", family, rng, 99));
                break;
            }
            case TaskFamily::affine: {
                const int a = 1 + static_cast<int>(rng.below(9));
                const int b = 1 + static_cast<int>(rng.below(9));
                tasks.push_back(finish_task(
                    "task mul " + std::to_string(a) + " add " + std::to_string(b) + ". ",
                    std::to_string(a) + "*" + std::to_string(b) + "+", family, rng, 99));
                break;
            }
            case TaskFamily::dup_square: {
                const int c = static_cast<int>(rng.below(10));
                std::string head = c == 0 ? std::string("task sqr. ")
                                          : "task sqr add " + std::to_string(c) + ". ";
                std::string solution = c == 0 ? std::string("d*") : "d*" + std::to_string(c) + "+";
                tasks.push_back(finish_task(std::move(head), std::move(solution), family, rng, 9));
                break;
            }
        }
    }
    return tasks;
}

Vocab pipeline_vocab() {
    std::vector<std::string> tokens;
    for (char c = '0'; c <= '9'; ++c) {
        tokens.emplace_back(1, c);
    }
    for (char c = 'a'; c <= 'z'; ++c) {
        tokens.emplace_back(1, c);
    }
    for (char c : {' ', '.', '>', ':', '+', '-', '*', '?'}) {
        tokens.emplace_back(1, c);
    }
    return Vocab::build(tokens);
}

std::string extract_program(const Vocab& vocab, const std::vector<TokenId>& response_ids) {
    std::string out;
    for (TokenId id : response_ids) {
        if (vocab.is_special(id)) {
            break;
        }
        out += vocab.token_text(id);
    }
    return out;
}

double jaccard3(const std::string& a, const std::string& b) {
    if (a == b) {
        return 1.0;
    }
    const auto grams = [](const std::string& s) {
        std::unordered_set<std::string> g;
        for (std::size_t i = 0; i + 3 <= s.size(); ++i) {
            g.insert(s.substr(i, 3));
        }
        return g;
    };
    const auto ga = grams(a);
    const auto gb = grams(b);
    if (ga.empty() || gb.empty()) {
        return 0.0;
    }
    std::size_t inter = 0;
    for (const auto& g : ga) {
        inter += gb.count(g);
    }
    const std::size_t uni = ga.size() + gb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

template <typename T>
std::vector<Task> curate(const std::vector<Task>& tasks, const DenoiserModel<T>& model,
                         const Vocab& vocab, const SampleConfig& sampler_cfg,
                         const Limits& limits, Rng& rng, CurateStats* stats) {
    CurateStats local;
    std::vector<Task> kept;
    std::vector<std::string> kept_prompts;
    for (const Task& task : tasks) {
        if (static_cast<int>(task.tests.size()) < kMinTests) {
            ++local.dropped_tests;
            continue;
        }
        bool duplicate = false;
        for (const std::string& earlier : kept_prompts) {
            if (jaccard3(task.prompt, earlier) > kDedupThreshold) {
                duplicate = true;
                break;
            }
        }
        if (duplicate) {
            ++local.dropped_dup;
            continue;
        }
        const TokenSeq prompt_seq = [&] {
            TokenSeq seq = vocab.encode(task.prompt);
            seq.prompt_len = seq.size();
            return seq;
        }();
        int solved = 0;
        for (int c = 0; c < kDifficultyCandidates; ++c) {
            Rng child = rng.fork();
            auto [out, trace] = generate(model, prompt_seq, sampler_cfg, child);
            std::vector<TokenId> response(out.ids.begin() + prompt_seq.size(), out.ids.end());
            solved += score(extract_program(vocab, response), task, limits);
        }
        if (solved == kDifficultyCandidates) {
            ++local.dropped_solved;
            continue;
        }
        kept.push_back(task);
        kept_prompts.push_back(task.prompt);
        ++local.kept;
    }
    if (stats != nullptr) {
        *stats = local;
    }
    return kept;
}

std::vector<Task> load_tasks_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open task file: " + path);
    }
    std::vector<Task> tasks;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            Task t;
            t.prompt = j.at("prompt").get<std::string>();
            for (const auto& jt : j.at("tests")) {
                TestCase tc;
                tc.input = jt.at("input").get<std::vector<std::int64_t>>();
                tc.expect = jt.at("expect").get<std::int64_t>();
                t.tests.push_back(std::move(tc));
            }
            t.solution = j.value("solution", std::string());
            t.family = j.value("family", std::string());
            tasks.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return tasks;
}

void save_tasks_jsonl(const std::vector<Task>& tasks, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open task file for writing: " + path);
    }
    for (const Task& t : tasks) {
        nlohmann::json tests = nlohmann::json::array();
        for (const TestCase& tc : t.tests) {
            tests.push_back({{"input", tc.input}, {"expect", tc.expect}});
        }
        nlohmann::json j{{"prompt", t.prompt},
                         {"tests", tests},
                         {"solution", t.solution},
                         {"family", t.family}};
        out << j.dump() << '\n';
    }
}

const char* to_string(TaskFamily family) {
    switch (family) {
        case TaskFamily::add_k:
            return "add_k";
        case TaskFamily::affine:
            return "affine";
        case TaskFamily::dup_square:
            return "dup_square";
    }
    return "?";
}

TaskFamily task_family_from_string(const std::string& name) {
    if (name == "add_k") return TaskFamily::add_k;
    if (name == "affine") return TaskFamily::affine;
    if (name == "dup_square") return TaskFamily::dup_square;
    throw ConfigError("unknown task family: " + name);
}

template std::vector<Task> curate<float>(const std::vector<Task>&, const DenoiserModel<float>&,
                                         const Vocab&, const SampleConfig&, const Limits&, Rng&,
                                         CurateStats*);
template std::vector<Task> curate<double>(const std::vector<Task>&, const DenoiserModel<double>&,
                                          const Vocab&, const SampleConfig&, const Limits&, Rng&,
                                          CurateStats*);

}  // namespace driftlab

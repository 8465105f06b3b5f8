#pragma once

#include <string>
#include <vector>

#include "driftlab/ministack.hpp"
#include "driftlab/model.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/sampler.hpp"
#include "driftlab/vocab.hpp"

namespace driftlab {

struct TestCase {
    std::vector<std::int64_t> input;
    std::int64_t expect = 0;
};

/// A verifiable-reward unit: prompt text, hidden reference solution, and the
/// unit tests that define the binary reward.
struct Task {
    std::string prompt;
    std::vector<TestCase> tests;
    std::string solution;
    std::string family;
};

enum class TaskFamily { add_k, affine, dup_square };

/// Binary all-tests-pass reward; any interpreter error scores 0.
int score(std::string_view program, const Task& task, const Limits& limits);

/// Deterministic task generation. Every task carries at least 5 unit tests
/// and a reference solution verified against them.
std::vector<Task> gen_tasks(TaskFamily family, int n, Rng& rng);

/// The character vocabulary covering every prompt this module can render
/// plus the MiniStack program alphabet.
Vocab pipeline_vocab();

/// Decoded-model-output to program text: tokens up to the first control
/// token (EOS/PAD terminate a response).
std::string extract_program(const Vocab& vocab, const std::vector<TokenId>& response_ids);

/// Character-3-gram Jaccard similarity, the dedup measure for prompts.
double jaccard3(const std::string& a, const std::string& b);

struct CurateStats {
    int kept = 0;
    int dropped_tests = 0;
    int dropped_dup = 0;
    int dropped_solved = 0;
};

/// Three-phase filter: (1) drop tasks with fewer than 5 tests; (2) drop a
/// task whose prompt 3-gram Jaccard with an earlier kept prompt exceeds 0.9;
/// (3) sample 8 candidates per task from the model and drop tasks all 8
/// solve.
template <typename T>
std::vector<Task> curate(const std::vector<Task>& tasks, const DenoiserModel<T>& model,
                         const Vocab& vocab, const SampleConfig& sampler_cfg,
                         const Limits& limits, Rng& rng, CurateStats* stats = nullptr);

std::vector<Task> load_tasks_jsonl(const std::string& path);
void save_tasks_jsonl(const std::vector<Task>& tasks, const std::string& path);

const char* to_string(TaskFamily family);
TaskFamily task_family_from_string(const std::string& name);

}  // namespace driftlab

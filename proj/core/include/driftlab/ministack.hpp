#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace driftlab {

/// Execution bounds standing in for a sandbox: every run terminates within
/// max_steps interpreter steps and max_stack stack slots.
struct Limits {
    int max_steps = 256;
    int max_stack = 64;
};

enum class RunStatus {
    ok,
    parse_error,
    stack_underflow,
    stack_overflow,
    step_limit,
    value_overflow,
    empty_result,
};

struct RunResult {
    RunStatus status = RunStatus::ok;
    std::int64_t value = 0;    // top of stack when status == ok
    std::int32_t error_pos = -1;  // program index for parse/runtime errors

    bool ok() const { return status == RunStatus::ok; }
};

/// Runs a MiniStack program over the input stack (last element on top).
/// Tokens: '0'..'9' push the digit, '+'/'-'/'*' pop two and push the result,
/// 'd' duplicates the top, 's' swaps the top two, 'p' pops. The result is the
/// final top of stack. Deterministic; never throws.
RunResult run_program(std::string_view program, const std::vector<std::int64_t>& input_stack,
                      const Limits& limits);

const char* to_string(RunStatus status);

}  // namespace driftlab

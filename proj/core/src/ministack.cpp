#include "driftlab/ministack.hpp"

namespace driftlab {

RunResult run_program(std::string_view program, const std::vector<std::int64_t>& input_stack,
                      const Limits& limits) {
    // Validate the whole program before touching the stack.
    for (std::size_t i = 0; i < program.size(); ++i) {
        const char c = program[i];
        const bool known = (c >= '0' && c <= '9') || c == '+' || c == '-' || c == '*' ||
                           c == 'd' || c == 's' || c == 'p';
        if (!known) {
            return {RunStatus::parse_error, 0, static_cast<std::int32_t>(i)};
        }
    }

    std::vector<std::int64_t> stack = input_stack;
    if (static_cast<int>(stack.size()) > limits.max_stack) {
        return {RunStatus::stack_overflow, 0, -1};
    }

    int steps = 0;
    for (std::size_t i = 0; i < program.size(); ++i) {
        if (++steps > limits.max_steps) {
            return {RunStatus::step_limit, 0, static_cast<std::int32_t>(i)};
        }
        const char c = program[i];
        const auto pos = static_cast<std::int32_t>(i);
        if (c >= '0' && c <= '9') {
            if (static_cast<int>(stack.size()) >= limits.max_stack) {
                return {RunStatus::stack_overflow, 0, pos};
            }
            stack.push_back(c - '0');
        } else if (c == '+' || c == '-' || c == '*') {
            if (stack.size() < 2) {
                return {RunStatus::stack_underflow, 0, pos};
            }
            const std::int64_t b = stack.back();
            stack.pop_back();
            const std::int64_t a = stack.back();
            stack.pop_back();
            std::int64_t r = 0;
            bool overflow = false;
            switch (c) {
                case '+':
                    overflow = __builtin_add_overflow(a, b, &r);
                    break;
                case '-':
                    overflow = __builtin_sub_overflow(a, b, &r);
                    break;
                default:
                    overflow = __builtin_mul_overflow(a, b, &r);
                    break;
            }
            if (overflow) {
                return {RunStatus::value_overflow, 0, pos};
            }
            stack.push_back(r);
        } else if (c == 'd') {
            if (stack.empty()) {
                return {RunStatus::stack_underflow, 0, pos};
            }
            if (static_cast<int>(stack.size()) >= limits.max_stack) {
                return {RunStatus::stack_overflow, 0, pos};
            }
            stack.push_back(stack.back());
        } else if (c == 's') {
            if (stack.size() < 2) {
                return {RunStatus::stack_underflow, 0, pos};
            }
            std::swap(stack[stack.size() - 1], stack[stack.size() - 2]);
        } else {  // 'p'
            if (stack.empty()) {
                return {RunStatus::stack_underflow, 0, pos};
            }
            stack.pop_back();
        }
    }

    if (stack.empty()) {
        return {RunStatus::empty_result, 0, -1};
    }
    return {RunStatus::ok, stack.back(), -1};
}

const char* to_string(RunStatus status) {
    switch (status) {
        case RunStatus::ok:
            return "ok";
        case RunStatus::parse_error:
            return "parse_error";
        case RunStatus::stack_underflow:
            return "stack_underflow";
        case RunStatus::stack_overflow:
            return "stack_overflow";
        case RunStatus::step_limit:
            return "step_limit";
        case RunStatus::value_overflow:
            return "value_overflow";
        case RunStatus::empty_result:
            return "empty_result";
    }
    return "?";
}

}  // namespace driftlab

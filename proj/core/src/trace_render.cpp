#include "driftlab/trace_render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

namespace driftlab {

namespace {

using nlohmann::json;

struct Rgb {
    int r, g, b;
};

// Light-to-dark blue ramp; every channel is non-increasing in u.
Rgb ramp(double u) {
    u = std::clamp(u, 0.0, 1.0);
    const auto lerp = [u](int from, int to) {
        return static_cast<int>(std::lround(from + (to - from) * u));
    };
    return {lerp(0xEF, 0x08), lerp(0xF6, 0x30), lerp(0xFB, 0x6B)};
}

std::string html_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&':
                out += "&amp;";
                break;
            case '<':
                out += "&lt;";
                break;
            case '>':
                out += "&gt;";
                break;
            case '"':
                out += "&quot;";
                break;
            case ' ':
                out += "&nbsp;";
                break;
            default:
                out += c;
        }
    }
    return out;
}

void check_aligned(const TraceFile& trace) {
    if (trace.tokens.size() != trace.commit_step.size()) {
        throw LengthMismatch("trace tokens and commit_step lengths differ");
    }
    if (trace.tokens.empty()) {
        throw LengthMismatch("trace is empty");
    }
}

PatternStats stats_of(const TraceFile& trace) {
    OrderTrace ot;
    ot.commit_step = trace.commit_step;
    ot.committed.assign(trace.commit_step.size(), 0);
    return order_stats(ot);
}

int max_step(const TraceFile& trace) {
    return *std::max_element(trace.commit_step.begin(), trace.commit_step.end());
}

}  // namespace

std::string trace_to_json(const TraceFile& trace) {
    json j;
    j["tokens"] = trace.tokens;
    j["commit_step"] = trace.commit_step;
    j["config"] = {{"gen_len", trace.config.gen_len},
                   {"steps", trace.config.steps},
                   {"strategy", to_string(trace.config.strategy)},
                   {"temperature", trace.config.temperature},
                   {"pad_penalty_p0", trace.config.pad_penalty_p0},
                   {"seed", trace.config.seed}};
    return j.dump();
}

TraceFile trace_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    TraceFile t;
    t.tokens = j.at("tokens").get<std::vector<std::string>>();
    t.commit_step = j.at("commit_step").get<std::vector<std::int32_t>>();
    const json& c = j.at("config");
    t.config.gen_len = c.at("gen_len").get<int>();
    t.config.steps = c.at("steps").get<int>();
    t.config.strategy = strategy_from_string(c.at("strategy").get<std::string>());
    t.config.temperature = c.at("temperature").get<double>();
    t.config.pad_penalty_p0 = c.at("pad_penalty_p0").get<double>();
    t.config.seed = c.at("seed").get<std::uint64_t>();
    if (t.tokens.size() != t.commit_step.size()) {
        throw LengthMismatch("trace tokens and commit_step lengths differ");
    }
    return t;
}

void write_trace(const TraceFile& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open trace for writing: " + path);
    }
    out << trace_to_json(trace) << '\n';
}

TraceFile read_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open trace: " + path);
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return trace_from_json(text);
}

std::string render_trace_html(const TraceFile& trace) {
    check_aligned(trace);
    const PatternStats stats = stats_of(trace);
    const double denom = std::max(1, max_step(trace));

    std::string out;
    out += "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n";
    out += "<style>body{font-family:monospace;font-size:16px}"
           ".trace span{padding:1px;border-radius:2px}"
           ".caption{margin-top:8px;color:#444;font-size:13px}</style>\n";
    out += "</head><body>\n<div class=\"trace\">";
    char buf[96];
    for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
        const int step = trace.commit_step[i];
        const Rgb c = ramp(step / denom);
        const bool dark = (c.r + c.g + c.b) < 3 * 110;
        std::snprintf(buf, sizeof(buf),
                      "<span style=\"background-color:#%02x%02x%02x;color:%s\" title=\"step %d\">",
                      c.r, c.g, c.b, dark ? "#fff" : "#000", step);
        out += buf;
        out += html_escape(trace.tokens[i]);
        out += "</span>";
    }
    out += "</div>\n";
    char cap[128];
    std::snprintf(cap, sizeof(cap),
                  "<div class=\"caption\">pattern: %s (kendall tau %.4f, %d steps)</div>\n",
                  to_string(stats.label), stats.kendall_tau, trace.config.steps);
    out += cap;
    out += "</body></html>\n";
    return out;
}

std::string render_trace_ansi(const TraceFile& trace) {
    check_aligned(trace);
    const PatternStats stats = stats_of(trace);
    const double denom = std::max(1, max_step(trace));

    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
        const Rgb c = ramp(trace.commit_step[i] / denom);
        const bool dark = (c.r + c.g + c.b) < 3 * 110;
        std::snprintf(buf, sizeof(buf), "\x1b[48;2;%d;%d;%dm\x1b[38;2;%d;%d;%dm", c.r, c.g, c.b,
                      dark ? 255 : 0, dark ? 255 : 0, dark ? 255 : 0);
        out += buf;
        out += trace.tokens[i];
    }
    out += "\x1b[0m\n";
    std::snprintf(buf, sizeof(buf), "pattern: %s (tau %.4f)\n", to_string(stats.label),
                  stats.kendall_tau);
    out += buf;
    return out;
}

}  // namespace driftlab

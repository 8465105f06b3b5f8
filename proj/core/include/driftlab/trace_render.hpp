#pragma once

#include <string>
#include <vector>

#include "driftlab/sampler.hpp"

namespace driftlab {

/// On-disk decode trace: one token string and one commit step per response
/// position, plus the sampler configuration that produced it.
struct TraceFile {
    std::vector<std::string> tokens;
    std::vector<std::int32_t> commit_step;
    SampleConfig config;
};

std::string trace_to_json(const TraceFile& trace);
TraceFile trace_from_json(const std::string& json_text);

void write_trace(const TraceFile& trace, const std::string& path);
TraceFile read_trace(const std::string& path);

/// Static HTML: one span per token, background on a light-to-dark ramp that
/// is monotone in commit step, with the pattern label in a caption.
std::string render_trace_html(const TraceFile& trace);

/// The same view as ANSI-colored terminal text.
std::string render_trace_ansi(const TraceFile& trace);

}  // namespace driftlab

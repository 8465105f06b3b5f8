#pragma once

#include <string>
#include <vector>

#include "driftlab/vocab.hpp"

namespace driftlab {

/// A padded training batch. Every sequence has the same physical length;
/// PAD fills the tail after the response content and its EOS terminator.
/// response_len counts content tokens only (no EOS, no PAD).
struct Batch {
    std::vector<TokenSeq> seqs;
    std::vector<std::int32_t> response_len;

    std::size_t size() const { return seqs.size(); }
};

struct PretrainExample {
    std::string text;
};

struct SftExample {
    std::string prompt;
    std::string response;
};

/// JSON-lines loaders: {"text": ...} and {"prompt": ..., "response": ...}.
std::vector<PretrainExample> load_pretrain_jsonl(const std::string& path);
std::vector<SftExample> load_sft_jsonl(const std::string& path);

/// Pretraining batch: raw text tokens, prompt_len 0, PAD to the batch max.
Batch make_pretrain_batch(const Vocab& vocab, const std::vector<PretrainExample>& corpus,
                          const std::vector<std::size_t>& indices);

/// SFT batch: prompt + response + EOS, PAD to the batch max.
Batch make_sft_batch(const Vocab& vocab, const std::vector<SftExample>& corpus,
                     const std::vector<std::size_t>& indices);

}  // namespace driftlab

#include "driftlab/batch.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>

namespace driftlab {

namespace {

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open data file: " + path);
    }
    std::vector<nlohmann::json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            rows.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

void pad_to(Batch& batch, TokenId pad) {
    std::int32_t max_len = 0;
    for (const auto& s : batch.seqs) {
        max_len = std::max(max_len, s.size());
    }
    for (auto& s : batch.seqs) {
        s.ids.resize(static_cast<std::size_t>(max_len), pad);
    }
}

}  // namespace

std::vector<PretrainExample> load_pretrain_jsonl(const std::string& path) {
    std::vector<PretrainExample> out;
    for (const auto& row : read_jsonl(path)) {
        out.push_back({row.at("text").get<std::string>()});
    }
    return out;
}

std::vector<SftExample> load_sft_jsonl(const std::string& path) {
    std::vector<SftExample> out;
    for (const auto& row : read_jsonl(path)) {
        out.push_back({row.at("prompt").get<std::string>(),
                       row.at("response").get<std::string>()});
    }
    return out;
}

Batch make_pretrain_batch(const Vocab& vocab, const std::vector<PretrainExample>& corpus,
                          const std::vector<std::size_t>& indices) {
    Batch batch;
    for (std::size_t idx : indices) {
        TokenSeq seq = vocab.encode(corpus.at(idx).text);
        seq.prompt_len = 0;
        batch.response_len.push_back(seq.size());
        batch.seqs.push_back(std::move(seq));
    }
    pad_to(batch, vocab.pad_id());
    return batch;
}

Batch make_sft_batch(const Vocab& vocab, const std::vector<SftExample>& corpus,
                     const std::vector<std::size_t>& indices) {
    Batch batch;
    for (std::size_t idx : indices) {
        const SftExample& ex = corpus.at(idx);
        TokenSeq seq = vocab.encode(ex.prompt);
        seq.prompt_len = seq.size();
        const TokenSeq resp = vocab.encode(ex.response);
        batch.response_len.push_back(resp.size());
        seq.ids.insert(seq.ids.end(), resp.ids.begin(), resp.ids.end());
        seq.ids.push_back(vocab.eos_id());
        batch.seqs.push_back(std::move(seq));
    }
    pad_to(batch, vocab.pad_id());
    return batch;
}

}  // namespace driftlab

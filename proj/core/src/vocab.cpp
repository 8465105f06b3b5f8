#include "driftlab/vocab.hpp"

#include <nlohmann/json.hpp>

namespace driftlab {

namespace {
const char* kSpecialNames[4] = {"[MASK]", "[PAD]", "[BOS]", "[EOS]"};
}

Vocab Vocab::build(const std::vector<std::string>& tokens) {
    if (tokens.empty()) {
        throw InvalidConfig("vocabulary needs at least one base token");
    }
    Vocab v;
    v.tokens_.reserve(tokens.size() + 4);
    for (const auto& tok : tokens) {
        if (v.index_.count(tok)) {
            throw DuplicateToken(tok);
        }
        v.index_.emplace(tok, static_cast<TokenId>(v.tokens_.size()));
        v.tokens_.push_back(tok);
    }
    for (const char* name : kSpecialNames) {
        if (v.index_.count(name)) {
            throw DuplicateToken(name);
        }
        v.index_.emplace(name, static_cast<TokenId>(v.tokens_.size()));
        v.tokens_.push_back(name);
    }
    return v;
}

const std::string& Vocab::token_text(TokenId id) const {
    if (id < 0 || id >= size()) {
        throw OutOfRange("token id " + std::to_string(id) + " outside vocab of size " +
                         std::to_string(size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

TokenSeq Vocab::encode(const std::string& text) const {
    TokenSeq seq;
    seq.ids.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        const std::string tok(1, text[i]);
        auto it = index_.find(tok);
        if (it == index_.end() || is_special(it->second)) {
            throw UnknownToken(tok, i);
        }
        seq.ids.push_back(it->second);
    }
    return seq;
}

std::string Vocab::decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (TokenId id : ids) {
        out += token_text(id);
    }
    return out;
}

std::string Vocab::decode(const TokenSeq& seq) const {
    return decode(seq.ids);
}

std::string Vocab::to_json() const {
    nlohmann::json j;
    j["tokens"] = tokens_;
    j["specials"] = {{"mask", mask_id()}, {"pad", pad_id()}, {"bos", bos_id()}, {"eos", eos_id()}};
    return j.dump();
}

Vocab Vocab::from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    std::vector<std::string> all = j.at("tokens").get<std::vector<std::string>>();
    if (all.size() < 5) {
        throw InvalidConfig("vocab json must list the base tokens plus 4 control tokens");
    }
    std::vector<std::string> base(all.begin(), all.end() - 4);
    Vocab v = build(base);
    const auto& sp = j.at("specials");
    if (sp.at("mask").get<TokenId>() != v.mask_id() || sp.at("pad").get<TokenId>() != v.pad_id() ||
        sp.at("bos").get<TokenId>() != v.bos_id() || sp.at("eos").get<TokenId>() != v.eos_id()) {
        throw InvalidConfig("vocab json specials do not match trailing-id layout");
    }
    return v;
}

}  // namespace driftlab

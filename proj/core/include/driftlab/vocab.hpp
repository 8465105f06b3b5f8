#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "driftlab/errors.hpp"

namespace driftlab {

using TokenId = std::int32_t;

/// A token sequence with an optional prompt region [0, prompt_len).
struct TokenSeq {
    std::vector<TokenId> ids;
    std::int32_t prompt_len = 0;

    std::int32_t size() const { return static_cast<std::int32_t>(ids.size()); }
    std::int32_t response_len() const { return size() - prompt_len; }
};

/// Token table. Base tokens occupy ids [0, base_size); the four control
/// tokens MASK, PAD, BOS, EOS occupy the highest ids, in that order.
class Vocab {
public:
    static Vocab build(const std::vector<std::string>& tokens);

    std::int32_t size() const { return static_cast<std::int32_t>(tokens_.size()); }
    std::int32_t base_size() const { return size() - 4; }

    TokenId mask_id() const { return base_size() + 0; }
    TokenId pad_id() const { return base_size() + 1; }
    TokenId bos_id() const { return base_size() + 2; }
    TokenId eos_id() const { return base_size() + 3; }
    bool is_special(TokenId id) const { return id >= base_size(); }

    const std::string& token_text(TokenId id) const;

    /// Character-level encode. Every character must name a base token.
    TokenSeq encode(const std::string& text) const;

    /// Inverse of encode on sequences that contain no control tokens;
    /// control tokens render as their bracketed names.
    std::string decode(const TokenSeq& seq) const;
    std::string decode(const std::vector<TokenId>& ids) const;

    std::string to_json() const;
    static Vocab from_json(const std::string& json_text);

private:
    Vocab() = default;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

}  // namespace driftlab

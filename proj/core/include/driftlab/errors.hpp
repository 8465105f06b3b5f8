#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace driftlab {

/// Base class for all driftlab error conditions.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DuplicateToken : Error {
    explicit DuplicateToken(const std::string& tok)
        : Error("duplicate token: \"" + tok + "\""), token(tok) {}
    std::string token;
};

struct UnknownToken : Error {
    UnknownToken(const std::string& tok, std::size_t pos)
        : Error("unknown token \"" + tok + "\" at position " + std::to_string(pos)),
          token(tok),
          position(pos) {}
    std::string token;
    std::size_t position;
};

struct OutOfRange : Error {
    using Error::Error;
};

struct NoMaskedPositions : Error {
    NoMaskedPositions() : Error("sequence has no masked positions") {}
};

struct InvalidConfig : Error {
    using Error::Error;
};

struct SequenceTooLong : Error {
    using Error::Error;
};

struct NonFiniteLoss : Error {
    using Error::Error;
};

struct CorruptCheckpoint : Error {
    CorruptCheckpoint(const std::string& sec, const std::string& detail)
        : Error("corrupt checkpoint [" + sec + "]: " + detail), section(sec) {}
    std::string section;
};

struct ConfigError : Error {
    using Error::Error;
};

struct GroupTooSmall : Error {
    using Error::Error;
};

struct EmptyMask : Error {
    EmptyMask() : Error("token_logprobs called with an empty mask") {}
};

struct ShapeMismatch : Error {
    using Error::Error;
};

struct LengthMismatch : Error {
    using Error::Error;
};

}  // namespace driftlab

#pragma once

#include <optional>
#include <string>

#include "driftlab/model.hpp"
#include "driftlab/vocab.hpp"

namespace driftlab {

/// Checkpoint layout: 8-byte magic, u32 version, u64 header length, JSON
/// header (config, dtype, optional vocab, array manifest with shapes and
/// byte offsets), then a raw little-endian IEEE-754 payload.
inline constexpr char kCheckpointMagic[8] = {'D', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const DenoiserModel<T>& model, const std::string& path,
                     const Vocab* vocab = nullptr);

/// Loads a checkpoint saved with the same scalar type. Throws
/// CorruptCheckpoint naming the failing section on any malformed input.
template <typename T>
DenoiserModel<T> load_checkpoint(const std::string& path,
                                 std::optional<Vocab>* vocab_out = nullptr);

}  // namespace driftlab

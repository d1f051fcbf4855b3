// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container, all integers and floats little-endian:
//
//   magic "LATNMTCK", u32 version
//   u64 source vocab fingerprint, u64 target vocab fingerprint
//   u32 count, then (u32 key length, key, u32 value length, value) settings
//   u64 count, then per tensor:
//     u32 name length, name, u32 rank, u64 dims[rank], f64 values (row-major)
//   u8 optimizer flag; when 1: u64 step, then the tensor section again for
//     the "n/<name>" and "m/<name>" accumulators
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "latnmt/model.hpp"
#include "latnmt/training.hpp"
#include "latnmt/vocab.hpp"

namespace latnmt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  Hyperparams hp;
  ParameterStore params;
  std::optional<RmspropState> optimizer;
  std::uint64_t src_fingerprint = 0;
  std::uint64_t tgt_fingerprint = 0;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError (with byte offset) or VersionError.
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// When vocabularies are given, their fingerprints must match the stored
/// ones or FingerprintError is thrown.
Checkpoint load_checkpoint(const std::string& path, const Vocab* src = nullptr,
                           const Vocab* tgt = nullptr);

}  // namespace latnmt

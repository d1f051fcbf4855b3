// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace latnmt {

using TokenId = std::uint32_t;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kUnk = 2;
inline constexpr std::size_t kReservedTokens = 3;

/// Dense token ids in rank order. Ids 0-2 are BOS, EOS and UNK; unknown
/// strings map to UNK.
class Vocab {
 public:
  Vocab();
  /// `ranked` lists the non-reserved tokens, most frequent first.
  explicit Vocab(std::vector<std::string> ranked);

  TokenId lookup(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  /// Non-reserved tokens in rank order.
  std::span<const std::string> ranked() const {
    return std::span<const std::string>(tokens_).subspan(kReservedTokens);
  }

  /// FNV-1a over the vocab file bytes; stored in checkpoints.
  std::uint64_t fingerprint() const;

  /// One token per line, reserved tokens omitted.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Reserved ids first, then tokens by descending count with lexicographic
/// tie-break, truncated to `size` entries in total. Throws EmptyCorpusError
/// when the stream has no tokens.
Vocab build_vocab(std::span<const std::string> token_stream, std::size_t size);

std::vector<TokenId> to_ids(const Vocab& vocab, std::span<const std::string> tokens);
std::vector<std::string> to_tokens(const Vocab& vocab, std::span<const TokenId> ids);

}  // namespace latnmt

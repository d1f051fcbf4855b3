// SPDX-License-Identifier: Apache-2.0
#include "latnmt/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "latnmt/errors.hpp"

namespace latnmt {

namespace {

const std::vector<std::string>& reserved_names() {
  static const std::vector<std::string> names = {"<s>", "</s>", "<unk>"};
  return names;
}

}  // namespace

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> ranked) : tokens_(reserved_names()) {
  tokens_.reserve(kReservedTokens + ranked.size());
  for (auto& t : ranked) tokens_.push_back(std::move(t));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw DataError("empty token in vocabulary");
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary token \"" + tokens_[i] + "\"");
    }
  }
}

TokenId Vocab::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) throw DimensionError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::uint64_t Vocab::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& t : ranked()) {
    for (char c : t) mix(static_cast<unsigned char>(c));
    mix('\n');
  }
  return h;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& t : ranked()) out << t << '\n';
  if (!out) throw IoError("failed writing " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> ranked;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError(lineno, "empty vocabulary entry in " + path);
    if (line.find(' ') != std::string::npos) {
      throw ParseError(lineno, "vocabulary entry contains a space in " + path);
    }
    ranked.push_back(line);
  }
  try {
    return Vocab(std::move(ranked));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

Vocab build_vocab(std::span<const std::string> token_stream, std::size_t size) {
  if (size < kReservedTokens + 1) throw DataError("vocabulary size must be at least 4");
  if (token_stream.empty()) throw EmptyCorpusError("cannot build a vocabulary from no tokens");
  std::map<std::string, std::size_t> counts;
  const auto& reserved = reserved_names();
  for (const auto& t : token_stream) {
    if (std::find(reserved.begin(), reserved.end(), t) != reserved.end()) continue;
    ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is ordered lexicographically, so a stable sort by count keeps the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), size - kReservedTokens);
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(std::move(ranked[i].first));
  return Vocab(std::move(tokens));
}

std::vector<TokenId> to_ids(const Vocab& vocab, std::span<const std::string> tokens) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.lookup(t));
  return ids;
}

std::vector<std::string> to_tokens(const Vocab& vocab, std::span<const TokenId> ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(vocab.token(id));
  return out;
}

}  // namespace latnmt

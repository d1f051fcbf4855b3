// SPDX-License-Identifier: Apache-2.0
#include "latnmt/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "latnmt/errors.hpp"

namespace latnmt {

double token_accuracy(std::span<const std::vector<std::string>> hyps,
                      std::span<const std::vector<std::string>> refs) {
  if (hyps.size() != refs.size()) {
    throw LengthMismatchError("hypothesis has " + std::to_string(hyps.size()) +
                              " sentences, reference has " + std::to_string(refs.size()));
  }
  std::size_t matched = 0;
  std::size_t total = 0;
  for (std::size_t s = 0; s < refs.size(); ++s) {
    total += refs[s].size();
    const std::size_t n = std::min(hyps[s].size(), refs[s].size());
    for (std::size_t i = 0; i < n; ++i) {
      if (hyps[s][i] == refs[s][i]) ++matched;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(matched) / static_cast<double>(total);
}

std::vector<std::vector<std::string>> read_token_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> tokens;
    std::istringstream fields(line);
    for (std::string t; fields >> t;) tokens.push_back(t);
    out.push_back(std::move(tokens));
  }
  return out;
}

double evaluate_accuracy(const std::string& hyp_path, const std::string& ref_path) {
  const auto hyps = read_token_file(hyp_path);
  const auto refs = read_token_file(ref_path);
  if (hyps.size() != refs.size()) {
    throw LengthMismatchError(hyp_path + " has " + std::to_string(hyps.size()) + " lines but " +
                              ref_path + " has " + std::to_string(refs.size()));
  }
  return token_accuracy(hyps, refs);
}

}  // namespace latnmt

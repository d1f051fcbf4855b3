// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

namespace latnmt {

/// Matching tokens at matching positions (up to the shorter length) divided
/// by the total number of reference tokens. Throws LengthMismatchError when
/// the sentence counts differ.
double token_accuracy(std::span<const std::vector<std::string>> hyps,
                      std::span<const std::vector<std::string>> refs);

/// Reads one sentence per line, tokens separated by single spaces.
std::vector<std::vector<std::string>> read_token_file(const std::string& path);

double evaluate_accuracy(const std::string& hyp_path, const std::string& ref_path);

}  // namespace latnmt

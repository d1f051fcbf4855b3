// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

namespace latnmt::utf8 {

/// Decodes UTF-8 into Unicode scalar values. Throws DataError on malformed input
/// (overlong forms, surrogates, truncated sequences).
std::u32string decode(std::string_view bytes);

std::string encode(std::u32string_view scalars);

/// Number of scalar values in a UTF-8 string.
std::size_t length(std::string_view bytes);

}  // namespace latnmt::utf8

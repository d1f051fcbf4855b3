// SPDX-License-Identifier: Apache-2.0
//
// Helpers shared by the unit tests and the acceptance runner.
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "latnmt/lattice.hpp"
#include "latnmt/numerics.hpp"
#include "latnmt/utf8.hpp"

namespace latnmt::testing {

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? worst : INFINITY;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

inline Vector random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& x : m.values()) x = rng.uniform(-scale, scale);
  return m;
}

// Mixed one-, two-, three- and four-byte characters.
inline CharSeq random_chars(Rng& rng, std::size_t n) {
  static constexpr char32_t pool[] = {U'a', U'b', U'c', U'z', U'é', U'一',
                                      U'中', U'文', U'\U0001F600'};
  CharSeq s(n, U'a');
  for (auto& c : s) c = pool[rng.below(std::size(pool))];
  return s;
}

// Random split of `chars` into words of 1..max_word characters.
inline Tokenization random_tokenization(Rng& rng, const CharSeq& chars, std::size_t max_word = 4) {
  Tokenization tok;
  std::size_t i = 0;
  while (i < chars.size()) {
    std::size_t len = 1 + rng.below(std::min(max_word, chars.size() - i));
    tok.push_back(utf8::encode(std::u32string_view(chars).substr(i, len)));
    i += len;
  }
  return tok;
}

struct RandomLattice {
  CharSeq chars;
  std::vector<Tokenization> toks;
  WordLattice lattice;
};

inline RandomLattice random_lattice(Rng& rng, std::size_t min_len, std::size_t max_len,
                                    std::size_t max_segmenters = 3) {
  CharSeq chars = random_chars(rng, min_len + rng.below(max_len - min_len + 1));
  std::vector<Tokenization> toks;
  std::size_t k = 1 + rng.below(max_segmenters);
  for (std::size_t i = 0; i < k; ++i) toks.push_back(random_tokenization(rng, chars));
  WordLattice lat = build_lattice(chars, toks);
  return {std::move(chars), std::move(toks), std::move(lat)};
}

}  // namespace latnmt::testing

#include <atomic>
#include <filesystem>
#include <unistd.h>

namespace latnmt::testing {

// A scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("latnmt_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace latnmt::testing

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>
#include <utility>

#include "latnmt/errors.hpp"
#include "latnmt/lattice.hpp"
#include "support.hpp"

using namespace latnmt;
using latnmt::testing::random_lattice;

namespace {

using Span = std::pair<std::size_t, std::size_t>;

std::vector<Span> spans(std::span<const LatticeEdge> edges) {
  std::vector<Span> out;
  for (const auto& e : edges) out.emplace_back(e.start, e.end);
  return out;
}

std::set<Span> span_set(std::span<const LatticeEdge> edges) {
  auto v = spans(edges);
  return {v.begin(), v.end()};
}

const std::vector<Tokenization> kAbcdToks = {{"ab", "cd"}, {"a", "bcd"}, {"ab", "c", "d"}};

WordLattice abcd() { return build_lattice(U"abcd", kAbcdToks); }

bool has_rule(const std::vector<Violation>& vs, Violation::Rule rule) {
  return std::any_of(vs.begin(), vs.end(), [&](const Violation& v) { return v.rule == rule; });
}

std::string serialize(std::span<const WordLattice> lats) {
  std::ostringstream out;
  write_lattices(out, lats);
  return out.str();
}

std::vector<WordLattice> parse(const std::string& text) {
  std::istringstream in(text);
  return read_lattices(in);
}

}  // namespace

TEST_CASE("chain_from_tokenization follows token boundaries") {
  auto lat = chain_from_tokenization(U"abcd", {"ab", "cd"});
  REQUIRE(lat.edges().size() == 2);
  CHECK(lat.edges()[0] == LatticeEdge{0, 2, "ab"});
  CHECK(lat.edges()[1] == LatticeEdge{2, 4, "cd"});
  CHECK(lat.is_chain());

  auto single = chain_from_tokenization(U"a", {"a"});
  REQUIRE(single.edges().size() == 1);
  CHECK(single.edges()[0] == LatticeEdge{0, 1, "a"});

  CHECK_THROWS_AS(chain_from_tokenization(U"abcd", {"ab", "c"}), MismatchError);
}

TEST_CASE("build_lattice merges the abcd segmentations into six edges") {
  auto lat = abcd();
  std::set<Span> expected{{0, 2}, {2, 4}, {0, 1}, {1, 4}, {2, 3}, {3, 4}};
  CHECK(lat.edges().size() == 6);
  CHECK(span_set(lat.edges()) == expected);
  CHECK(lat.edges()[lat.find(0, 2)].surface == "ab");
  CHECK(lat.edges()[lat.find(1, 4)].surface == "bcd");
  CHECK(validate(lat).empty());
  CHECK_FALSE(lat.is_chain());
}

TEST_CASE("shared spans from two segmenters become one edge, both ending at v_3") {
  std::vector<Tokenization> toks = {{"abc", "d"}, {"abc", "d"}, {"a", "bc", "d"}};
  auto lat = build_lattice(U"abcd", toks);
  CHECK(span_set(lat.edges()) == std::set<Span>{{0, 3}, {3, 4}, {0, 1}, {1, 3}});
  auto in3 = incoming_edges(lat, 3);
  REQUIRE(in3.size() == 2);
  CHECK(in3[0] == LatticeEdge{0, 3, "abc"});
  CHECK(in3[1] == LatticeEdge{1, 3, "bc"});
}

TEST_CASE("build_lattice with one tokenization equals the chain") {
  Tokenization tok{"一中", "文", "z"};
  std::vector<Tokenization> one{tok};
  CHECK(build_lattice(U"一中文z", one) == chain_from_tokenization(U"一中文z", tok));
}

TEST_CASE("build_lattice errors") {
  CHECK_THROWS_AS(build_lattice(U"abcd", std::vector<Tokenization>{}), EmptyInputError);
  std::vector<Tokenization> toks = {{"ab", "cd"}, {"ab", "c"}};
  try {
    build_lattice(U"abcd", toks);
    FAIL("expected MismatchError");
  } catch (const MismatchError& e) {
    CHECK(std::string(e.what()).find("tokenization 1") != std::string::npos);
  }
}

TEST_CASE("validate reports gaps and surface mismatches") {
  WordLattice gap(U"abc", {{0, 1, "a"}, {2, 3, "c"}});
  auto vs = validate(gap);
  CHECK(has_rule(vs, Violation::Rule::stranded_edge));
  CHECK(has_rule(vs, Violation::Rule::no_path));

  WordLattice bad(U"ab", {{0, 2, "ax"}});
  vs = validate(bad);
  REQUIRE(vs.size() == 1);
  CHECK(vs[0].rule == Violation::Rule::surface);
  CHECK(vs[0].message.find("0") != std::string::npos);

  CHECK(validate(abcd()).empty());
}

TEST_CASE("reverse mirrors spans and surfaces") {
  auto chain = chain_from_tokenization(U"abcd", {"ab", "cd"});
  CHECK(reverse(chain) == chain_from_tokenization(U"dcba", {"dc", "ba"}));

  auto one = chain_from_tokenization(U"a", {"a"});
  CHECK(reverse(one) == one);

  auto r = reverse(abcd());
  std::set<Span> expected{{2, 4}, {0, 2}, {3, 4}, {0, 3}, {1, 2}, {0, 1}};
  CHECK(span_set(r.edges()) == expected);
  CHECK(r.edges()[r.find(0, 3)].surface == "dcb");
  CHECK(reverse(r) == abcd());

  // Multi-byte surfaces reverse by scalar, not by byte.
  auto cjk = chain_from_tokenization(U"一中\U0001F600", {"一中", "\U0001F600"});
  CHECK(reverse(cjk).edges()[1].surface == "中一");

  CHECK_THROWS_AS(reverse(WordLattice(U"abc", {{0, 1, "a"}, {2, 3, "c"}})), InvalidLatticeError);
}

TEST_CASE("incoming_edges orders by start") {
  auto lat = abcd();
  CHECK(incoming_edges(lat, 0).empty());
  CHECK(spans(incoming_edges(lat, 4)) == std::vector<Span>{{1, 4}, {2, 4}, {3, 4}});
}

TEST_CASE("lattice text format") {
  std::vector<WordLattice> lats{abcd()};
  CHECK(parse(serialize(lats)) == lats);

  SUBCASE("block without edges") {
    try {
      parse("LATTICE 2\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.reason() == "lattice with no edges");
    }
  }
  SUBCASE("edge with end <= start names its line") {
    try {
      parse("LATTICE 2\nEDGE 0 2 ab\nEDGE 1 1 b\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("edges in any order are normalized") {
    auto got = parse("LATTICE 2\nEDGE 1 2 b\nEDGE 0 1 a\nEDGE 0 2 ab\n");
    REQUIRE(got.size() == 1);
    CHECK(spans(got[0].edges()) == std::vector<Span>{{0, 1}, {0, 2}, {1, 2}});
  }
  SUBCASE("malformed header") { CHECK_THROWS_AS(parse("LATICE 2\nEDGE 0 2 ab\n"), ParseError); }
}

TEST_CASE("property: random lattices are valid and round-trip byte-exactly") {
  Rng rng(2024);
  std::vector<WordLattice> all;
  for (int trial = 0; trial < 1000; ++trial) {
    auto r = random_lattice(rng, 1, 16);
    const auto& lat = r.lattice;
    CHECK(validate(lat).empty());

    // Edge-count bounds over the segmenters' token counts.
    std::size_t sum = 0, most = 0;
    std::set<Span> distinct;
    for (const auto& tok : r.toks) {
      sum += tok.size();
      most = std::max(most, tok.size());
      auto chain = chain_from_tokenization(r.chars, tok);
      for (const auto& e : chain.edges()) distinct.emplace(e.start, e.end);
    }
    CHECK(lat.edges().size() <= sum);
    CHECK(lat.edges().size() >= most);
    CHECK(lat.edges().size() == distinct.size());

    // Each tokenization walks a path of existing edges spelling its tokens.
    for (const auto& tok : r.toks) {
      std::size_t at = 0;
      for (const auto& word : tok) {
        std::size_t len = utf8::length(word);
        std::size_t id = lat.find(at, at + len);
        REQUIRE(id != WordLattice::npos);
        CHECK(lat.edges()[id].surface == word);
        at += len;
      }
      CHECK(at == lat.length());
    }

    auto rev = reverse(lat);
    CHECK(reverse(rev) == lat);
    std::size_t n = lat.length();
    for (std::size_t v = 0; v <= n; ++v) {
      std::set<Span> mirrored;
      for (std::size_t id : lat.outgoing(v)) {
        const auto& e = lat.edges()[id];
        mirrored.emplace(n - e.end, n - e.start);
      }
      CHECK(span_set(incoming_edges(rev, n - v)) == mirrored);
    }

    std::vector<WordLattice> one{lat};
    std::string text = serialize(one);
    auto back = parse(text);
    CHECK(back == one);
    CHECK(serialize(back) == text);
    all.push_back(lat);
  }
  std::string text = serialize(all);
  auto back = parse(text);
  CHECK(back == all);
  CHECK(serialize(back) == text);
}

// SPDX-License-Identifier: Apache-2.0
//
// Word lattices over character-boundary nodes. Node v_i sits between
// character i and i+1 (v_0 before the first character, v_N after the last);
// an edge (i, j) covers characters i+1..j and carries that word's surface.
#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace latnmt {

/// Unicode scalar values of one source sentence.
using CharSeq = std::u32string;
using NodeIndex = std::size_t;
/// One segmenter's output: tokens whose concatenation is the sentence.
using Tokenization = std::vector<std::string>;

struct LatticeEdge {
  NodeIndex start = 0;
  NodeIndex end = 0;
  std::string surface;  // UTF-8

  friend bool operator==(const LatticeEdge&, const LatticeEdge&) = default;
};

struct Violation {
  enum class Rule { span, surface, stranded_edge, no_path };
  Rule rule;
  std::string message;
};

/// Immutable after construction. Edges are kept sorted by (start, end) and
/// deduplicated by span; the first edge seen for a span wins.
class WordLattice {
 public:
  /// Does not validate; use validate() or the build functions for checked lattices.
  /// Throws EmptyInputError when `chars` is empty.
  WordLattice(CharSeq chars, std::vector<LatticeEdge> edges);

  const CharSeq& chars() const { return chars_; }
  /// Character count N; nodes are 0..N.
  std::size_t length() const { return chars_.size(); }
  std::size_t node_count() const { return chars_.size() + 1; }
  std::span<const LatticeEdge> edges() const { return edges_; }

  /// Indices into edges() of the edges ending at `v`, ascending by start node.
  std::span<const std::size_t> incoming(NodeIndex v) const;
  /// Indices into edges() of the edges leaving `v`, ascending by end node.
  std::span<const std::size_t> outgoing(NodeIndex v) const;

  /// Index of the edge with span (start, end), or npos.
  std::size_t find(NodeIndex start, NodeIndex end) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// True when no node has more than one incoming edge.
  bool is_chain() const;

  friend bool operator==(const WordLattice& a, const WordLattice& b) {
    return a.chars_ == b.chars_ && a.edges_ == b.edges_;
  }

 private:
  CharSeq chars_;
  std::vector<LatticeEdge> edges_;
  std::vector<std::vector<std::size_t>> incoming_;
  std::vector<std::vector<std::size_t>> outgoing_;
};

/// A single-path lattice with one edge per token. Throws MismatchError when
/// the tokens do not concatenate to `chars`.
WordLattice chain_from_tokenization(const CharSeq& chars, const Tokenization& tok);

/// Union of the chain edges of every tokenization, merged by span.
/// Throws EmptyInputError for no tokenizations and MismatchError (naming the
/// tokenization index) when one does not spell `chars`.
WordLattice build_lattice(const CharSeq& chars, std::span<const Tokenization> toks);

/// Empty iff every edge is well formed, lies on a v_0 -> v_N path, and such a path exists.
std::vector<Violation> validate(const WordLattice& lat);

/// The lattice over the reversed character sequence; edge (i, j, s) becomes
/// (N-j, N-i, reversed s). Throws InvalidLatticeError on invalid input.
WordLattice reverse(const WordLattice& lat);

/// Edges ending at `v` ordered by ascending start node.
std::vector<LatticeEdge> incoming_edges(const WordLattice& lat, NodeIndex v);

/// Text format: "LATTICE <N>" then one "EDGE <start> <end> <surface>" line per
/// edge; blocks separated by one blank line.
void write_lattices(std::ostream& out, std::span<const WordLattice> lats);
std::vector<WordLattice> read_lattices(std::istream& in);

void write_lattice_file(const std::string& path, std::span<const WordLattice> lats);
std::vector<WordLattice> read_lattice_file(const std::string& path);

/// Splits a line on single spaces; rejects empty tokens (double spaces,
/// leading or trailing space) with MismatchError.
Tokenization split_tokens(const std::string& line);

}  // namespace latnmt

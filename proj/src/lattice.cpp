// SPDX-License-Identifier: Apache-2.0
#include "latnmt/lattice.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>

#include "latnmt/errors.hpp"
#include "latnmt/utf8.hpp"

namespace latnmt {

WordLattice::WordLattice(CharSeq chars, std::vector<LatticeEdge> edges)
    : chars_(std::move(chars)) {
  if (chars_.empty()) {
    throw EmptyInputError("lattice over an empty character sequence");
  }
  std::stable_sort(edges.begin(), edges.end(), [](const LatticeEdge& a, const LatticeEdge& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  for (auto& e : edges) {
    if (!edges_.empty() && edges_.back().start == e.start && edges_.back().end == e.end) {
      continue;
    }
    edges_.push_back(std::move(e));
  }
  incoming_.resize(node_count());
  outgoing_.resize(node_count());
  // Edges are sorted by (start, end), so both adjacency lists come out ordered.
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const auto& e = edges_[i];
    if (e.end < node_count()) incoming_[e.end].push_back(i);
    if (e.start < node_count()) outgoing_[e.start].push_back(i);
  }
}

std::span<const std::size_t> WordLattice::incoming(NodeIndex v) const {
  if (v >= node_count()) throw DimensionError("node index out of range");
  return incoming_[v];
}

std::span<const std::size_t> WordLattice::outgoing(NodeIndex v) const {
  if (v >= node_count()) throw DimensionError("node index out of range");
  return outgoing_[v];
}

std::size_t WordLattice::find(NodeIndex start, NodeIndex end) const {
  auto it = std::lower_bound(edges_.begin(), edges_.end(), std::pair{start, end},
                             [](const LatticeEdge& e, const std::pair<NodeIndex, NodeIndex>& key) {
                               return e.start != key.first ? e.start < key.first
                                                           : e.end < key.second;
                             });
  if (it != edges_.end() && it->start == start && it->end == end) {
    return static_cast<std::size_t>(it - edges_.begin());
  }
  return npos;
}

bool WordLattice::is_chain() const {
  return std::all_of(incoming_.begin(), incoming_.end(),
                     [](const auto& in) { return in.size() <= 1; });
}

namespace {

std::string span_name(const LatticeEdge& e) {
  return "e_{" + std::to_string(e.start) + ":" + std::to_string(e.end) + "}";
}

std::string concat(const Tokenization& tok) {
  std::string s;
  for (const auto& t : tok) s += t;
  return s;
}

// Appends the chain edges of `tok` to `edges`; returns false on any mismatch.
bool append_chain(const CharSeq& chars, const Tokenization& tok, std::vector<LatticeEdge>& edges) {
  NodeIndex pos = 0;
  for (const auto& token : tok) {
    const std::u32string scalars = utf8::decode(token);
    if (scalars.empty() || pos + scalars.size() > chars.size() ||
        chars.compare(pos, scalars.size(), scalars) != 0) {
      return false;
    }
    edges.push_back({pos, pos + scalars.size(), token});
    pos += scalars.size();
  }
  return pos == chars.size();
}

}  // namespace

WordLattice chain_from_tokenization(const CharSeq& chars, const Tokenization& tok) {
  std::vector<LatticeEdge> edges;
  if (!append_chain(chars, tok, edges)) {
    throw MismatchError("tokenization \"" + concat(tok) + "\" does not spell \"" +
                        utf8::encode(chars) + "\"");
  }
  return WordLattice(chars, std::move(edges));
}

WordLattice build_lattice(const CharSeq& chars, std::span<const Tokenization> toks) {
  if (toks.empty()) throw EmptyInputError("no tokenizations to merge");
  std::vector<LatticeEdge> edges;
  for (std::size_t k = 0; k < toks.size(); ++k) {
    if (!append_chain(chars, toks[k], edges)) {
      throw MismatchError("tokenization " + std::to_string(k) + " (\"" + concat(toks[k]) +
                          "\") does not spell \"" + utf8::encode(chars) + "\"");
    }
  }
  return WordLattice(chars, std::move(edges));
}

std::vector<Violation> validate(const WordLattice& lat) {
  std::vector<Violation> out;
  const std::size_t n = lat.length();
  const auto edges = lat.edges();

  std::vector<bool> span_ok(edges.size(), false);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    if (e.start >= e.end || e.end > n) {
      out.push_back({Violation::Rule::span, span_name(e) + ": span must satisfy start < end <= " +
                                                std::to_string(n)});
      continue;
    }
    // Surface errors do not change the topology; the edge still counts for paths.
    span_ok[i] = true;
    std::u32string surface;
    try {
      surface = utf8::decode(e.surface);
    } catch (const DataError&) {
      out.push_back({Violation::Rule::surface, span_name(e) + ": surface is not valid UTF-8"});
      continue;
    }
    if (lat.chars().compare(e.start, e.end - e.start, surface) != 0) {
      out.push_back({Violation::Rule::surface,
                     span_name(e) + ": surface \"" + e.surface + "\" differs from characters \"" +
                         utf8::encode(lat.chars().substr(e.start, e.end - e.start)) + "\""});
    }
  }

  // Forward reachability from v_0 and backward reachability from v_N over
  // edges with valid spans. Edges point strictly rightward, so one sweep each way suffices.
  std::vector<bool> fwd(n + 1, false), bwd(n + 1, false);
  fwd[0] = true;
  bwd[n] = true;
  for (NodeIndex v = 0; v <= n; ++v) {
    if (!fwd[v]) continue;
    for (std::size_t i : lat.outgoing(v)) {
      if (span_ok[i]) fwd[edges[i].end] = true;
    }
  }
  for (NodeIndex v = n + 1; v-- > 0;) {
    if (!bwd[v]) continue;
    for (std::size_t i : lat.incoming(v)) {
      if (span_ok[i]) bwd[edges[i].start] = true;
    }
  }
  if (!fwd[n]) {
    NodeIndex frontier = 0;
    for (NodeIndex v = 0; v <= n; ++v) {
      if (fwd[v]) frontier = v;
    }
    out.push_back({Violation::Rule::no_path, "no path from v_0 to v_" + std::to_string(n) +
                                                 ": node v_" + std::to_string(frontier) +
                                                 " is not connected to v_" +
                                                 std::to_string(frontier + 1)});
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!span_ok[i]) continue;
    const auto& e = edges[i];
    if (!fwd[e.start] || !bwd[e.end]) {
      out.push_back({Violation::Rule::stranded_edge,
                     span_name(e) + ": stranded (" +
                         (!fwd[e.start] ? "not reachable from v_0" : "cannot reach v_" + std::to_string(n)) +
                         ")"});
    }
  }
  return out;
}


WordLattice reverse(const WordLattice& lat) {
  const auto violations = validate(lat);
  if (!violations.empty()) {
    throw InvalidLatticeError("cannot reverse an invalid lattice: " + violations.front().message);
  }
  const std::size_t n = lat.length();
  CharSeq chars(lat.chars().rbegin(), lat.chars().rend());
  std::vector<LatticeEdge> edges;
  edges.reserve(lat.edges().size());
  for (const auto& e : lat.edges()) {
    std::u32string s = utf8::decode(e.surface);
    std::reverse(s.begin(), s.end());
    edges.push_back({n - e.end, n - e.start, utf8::encode(s)});
  }
  return WordLattice(std::move(chars), std::move(edges));
}

std::vector<LatticeEdge> incoming_edges(const WordLattice& lat, NodeIndex v) {
  std::vector<LatticeEdge> out;
  for (std::size_t i : lat.incoming(v)) out.push_back(lat.edges()[i]);
  return out;
}

void write_lattices(std::ostream& out, std::span<const WordLattice> lats) {
  for (std::size_t k = 0; k < lats.size(); ++k) {
    const auto violations = validate(lats[k]);
    if (!violations.empty()) {
      throw InvalidLatticeError("lattice " + std::to_string(k) +
                                " is invalid: " + violations.front().message);
    }
    if (k > 0) out << '\n';
    out << "LATTICE " << lats[k].length() << '\n';
    for (const auto& e : lats[k].edges()) {
      out << "EDGE " << e.start << ' ' << e.end << ' ' << e.surface << '\n';
    }
  }
  if (!out) throw IoError("failed writing lattices");
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(' ', pos);
    fields.push_back(line.substr(pos, next == std::string_view::npos ? next : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return fields;
}

std::optional<std::size_t> parse_index(std::string_view s) {
  std::size_t value = 0;
  if (s.empty()) return std::nullopt;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

struct PendingBlock {
  std::size_t header_line = 0;
  std::size_t n = 0;
  std::vector<std::optional<char32_t>> chars;
  std::vector<LatticeEdge> edges;
};

WordLattice finish_block(PendingBlock& block) {
  if (block.edges.empty()) throw ParseError(block.header_line, "lattice with no edges");
  CharSeq chars;
  chars.reserve(block.n);
  for (std::size_t i = 0; i < block.n; ++i) {
    if (!block.chars[i]) {
      throw ParseError(block.header_line,
                       "character " + std::to_string(i + 1) + " is not covered by any edge");
    }
    chars.push_back(*block.chars[i]);
  }
  WordLattice lat(std::move(chars), std::move(block.edges));
  const auto violations = validate(lat);
  if (!violations.empty()) throw ParseError(block.header_line, violations.front().message);
  return lat;
}

}  // namespace

std::vector<WordLattice> read_lattices(std::istream& in) {
  std::vector<WordLattice> out;
  std::optional<PendingBlock> block;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!block) throw ParseError(lineno, "unexpected blank line");
      out.push_back(finish_block(*block));
      block.reset();
      continue;
    }
    const auto fields = split_fields(line);
    if (!block) {
      if (fields.size() != 2 || fields[0] != "LATTICE") {
        throw ParseError(lineno, "expected \"LATTICE <N>\"");
      }
      const auto n = parse_index(fields[1]);
      if (!n || *n == 0) throw ParseError(lineno, "character count must be a positive integer");
      block.emplace();
      block->header_line = lineno;
      block->n = *n;
      block->chars.assign(*n, std::nullopt);
      continue;
    }
    if (fields.size() != 4 || fields[0] != "EDGE") {
      throw ParseError(lineno, "expected \"EDGE <start> <end> <surface>\"");
    }
    const auto start = parse_index(fields[1]);
    const auto end = parse_index(fields[2]);
    if (!start || !end) throw ParseError(lineno, "edge endpoints must be non-negative integers");
    if (*end <= *start) throw ParseError(lineno, "edge end must be greater than start");
    if (*end > block->n) throw ParseError(lineno, "edge end exceeds character count");
    std::u32string surface;
    try {
      surface = utf8::decode(fields[3]);
    } catch (const DataError& e) {
      throw ParseError(lineno, e.what());
    }
    if (surface.size() != *end - *start) {
      throw ParseError(lineno, "surface length does not match the edge span");
    }
    for (std::size_t i = 0; i < surface.size(); ++i) {
      auto& slot = block->chars[*start + i];
      if (slot && *slot != surface[i]) {
        throw ParseError(lineno, "surface conflicts with an earlier edge at character " +
                                     std::to_string(*start + i + 1));
      }
      slot = surface[i];
    }
    for (const auto& e : block->edges) {
      if (e.start == *start && e.end == *end) throw ParseError(lineno, "duplicate edge span");
    }
    block->edges.push_back({*start, *end, std::string(fields[3])});
  }
  // A single trailing blank line is tolerated.
  if (block) out.push_back(finish_block(*block));
  return out;
}

void write_lattice_file(const std::string& path, std::span<const WordLattice> lats) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_lattices(out, lats);
}

std::vector<WordLattice> read_lattice_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  try {
    return read_lattices(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.reason() + " (" + path + ")");
  }
}

Tokenization split_tokens(const std::string& line) {
  Tokenization tok;
  for (auto field : split_fields(line)) {
    if (field.empty()) throw MismatchError("empty token in \"" + line + "\"");
    tok.emplace_back(field);
  }
  return tok;
}

}  // namespace latnmt

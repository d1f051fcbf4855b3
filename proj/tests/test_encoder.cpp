// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "latnmt/encoder.hpp"
#include "latnmt/errors.hpp"
#include "latnmt/training.hpp"
#include "support.hpp"

using namespace latnmt;
using namespace latnmt::testing;

namespace {

constexpr CellKind kKinds[] = {CellKind::gru, CellKind::swl, CellKind::dwl};
constexpr ComposeMode kModes[] = {ComposeMode::pool, ComposeMode::gate};

// Values from tests/oracles/reference.py.
const std::vector<Vector> kAbcdAnnotations = {
    {0.0017223986644683757, 0.013201155529227755, -0.014956950647930413, -0.02293053759893617,
     0.006572990201372672, -0.0017341070964406239, -0.0005749160509814768, -0.0026019707810115526},
    {-0.0502872938539356, -0.012527070011129144, 0.0014770969934407552, 0.0004994151911145785,
     -0.006403641684292834, -0.014049165210336879, 0.0079609870743136, 0.010558144538476592},
    {-0.016834541200378333, -0.011612086851042234, 0.017468111652013785, -0.0020467429923402666,
     0.0026487269713458142, -0.015019814133841106, 0.009289456137323517, 0.013351388409397784},
    {-0.013400998779666485, -0.0015593653242230577, -0.005318113413344253, -0.002492015142527723,
     0, 0, 0, 0}};
const Vector kAbcdBackwardStart{-0.004401124041836721, 0.038252045618074194, -0.02474567950518609,
                                -0.016603606823359367};

LatticeCellParams random_cell_params(Rng& rng, CellKind kind, ComposeMode mode, std::size_t e,
                                     std::size_t d) {
  auto p = LatticeCellParams::zeros(kind, mode, e, d);
  for (Matrix* m : {&p.cell.u, &p.cell.u_r, &p.cell.u_z, &p.cell.w, &p.cell.w_r, &p.cell.w_z}) {
    *m = random_matrix(rng, m->rows(), m->cols());
  }
  if (p.gate_input) p.gate_input = ComposeParams{random_matrix(rng, 1, e), random_matrix(rng, 1, 1)};
  if (p.gate_state) p.gate_state = ComposeParams{random_matrix(rng, 1, d), random_matrix(rng, 1, 1)};
  return p;
}

// Same cell matrices for every kind and mode; the gates, where present, are
// random so that a missing collapse would show.
EncoderParams encoder_for(CellKind kind, ComposeMode mode, const EncoderParams& base, Rng& rng) {
  EncoderParams ep{kind, mode, LatticeCellParams::zeros(kind, mode, 0, 0),
                   LatticeCellParams::zeros(kind, mode, 0, 0)};
  const std::size_t e = base.fwd.cell.input_dim(), d = base.fwd.cell.hidden_dim();
  for (auto [dst, src] : {std::pair{&ep.fwd, &base.fwd}, std::pair{&ep.bwd, &base.bwd}}) {
    *dst = random_cell_params(rng, kind, mode, e, d);
    dst->cell = src->cell;
  }
  return ep;
}

Vector swap_halves(const Vector& v) {
  Vector out(v.begin() + v.size() / 2, v.end());
  out.insert(out.end(), v.begin(), v.begin() + v.size() / 2);
  return out;
}

}  // namespace

TEST_CASE("embed_edge") {
  Vocab vocab(std::vector<std::string>{"a", "b", "c", "d", "ab"});
  Rng rng(1);
  Matrix table = random_matrix(rng, vocab.size(), 3);
  SourceEmbeddings emb{table, vocab};
  CHECK(vocab.lookup("ab") == 7);
  auto row = embed_edge({0, 2, "ab"}, emb);
  CHECK(std::equal(row.begin(), row.end(), table.row(7).begin()));
  auto unk = embed_edge({0, 2, "zz"}, emb);
  CHECK(std::equal(unk.begin(), unk.end(), table.row(kUnk).begin()));
  CHECK(embed_edge({0, 1, "a"}, emb) == embed_edge({5, 6, "a"}, emb));
}

TEST_CASE("chain lattice with gru is the sequential GRU") {
  Rng rng(3);
  auto lat = chain_from_tokenization(U"一中文z", {"一", "中文", "z"});
  Vocab vocab(std::vector<std::string>{"一", "中文", "z"});
  Matrix table = random_matrix(rng, vocab.size(), 3);
  auto p = random_cell_params(rng, CellKind::gru, ComposeMode::pool, 3, 4);
  auto states = encode_forward(lat, SourceEmbeddings{table, vocab}, p, CellKind::gru, ComposeMode::pool);
  REQUIRE(states.size() == 5);
  Vector h(4, 0.0);
  CHECK(states[0] == h);
  const std::pair<std::size_t, std::string> steps[] = {{1, "一"}, {3, "中文"}, {4, "z"}};
  for (const auto& [node, word] : steps) {
    auto x = table.row(vocab.lookup(word));
    h = gru_step(x, h, p.cell);
    CHECK(bitwise_equal(states[node], h));
  }
  // v_2 lies inside "中文": no incoming edge, zero state.
  CHECK(states[2] == Vector(4, 0.0));
}

TEST_CASE("gru rejects lattices with merges") {
  auto fx = abcd_fixture();
  Rng rng(1);
  auto p = random_cell_params(rng, CellKind::gru, ComposeMode::pool, 3, 4);
  CHECK_THROWS_AS(encode_forward(fx.lattice, SourceEmbeddings{fx.store.src_emb, fx.src}, p,
                                 CellKind::gru, ComposeMode::pool),
                  TopologyError);
}

TEST_CASE("abcd annotations match the reference") {
  auto fx = abcd_fixture();
  auto ann = encode_bidirectional(fx.source, fx.store.src_emb, fx.store.enc);
  REQUIRE(ann.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CAPTURE(i);
    REQUIRE(ann.h[i].size() == 8);
    CHECK(max_abs_diff(ann.h[i], kAbcdAnnotations[i]) <= 1e-15);
  }
  CHECK(max_abs_diff(ann.backward_start, kAbcdBackwardStart) <= 1e-15);

  // The lattice-level overload agrees with the prepared-source one.
  auto again = encode_bidirectional(fx.lattice, SourceEmbeddings{fx.store.src_emb, fx.src}, fx.store.enc);
  for (std::size_t i = 0; i < 4; ++i) CHECK(bitwise_equal(again.h[i], ann.h[i]));
}

TEST_CASE("single-character lattice") {
  auto lat = chain_from_tokenization(U"a", {"a"});
  Vocab vocab(std::vector<std::string>{"a"});
  auto store = ParameterStore::initialized({CellKind::dwl, ComposeMode::gate, vocab.size(), 5, 3, 4}, 1);
  auto ann = encode_bidirectional(lat, SourceEmbeddings{store.src_emb, vocab}, store.enc);
  REQUIRE(ann.size() == 1);
  CHECK(ann.h[0].size() == 8);
}

TEST_CASE("property: chain collapse across cell kinds") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    CharSeq chars = random_chars(rng, 1 + rng.below(20));
    auto lat = chain_from_tokenization(chars, random_tokenization(rng, chars));
    std::vector<std::string> surfaces;
    for (const auto& e : lat.edges()) surfaces.push_back(e.surface);
    std::sort(surfaces.begin(), surfaces.end());
    surfaces.erase(std::unique(surfaces.begin(), surfaces.end()), surfaces.end());
    Vocab vocab(surfaces);
    std::size_t e = 1 + rng.below(5), d = 1 + rng.below(5);
    Matrix table = random_matrix(rng, vocab.size(), e);
    EncoderParams base{CellKind::gru, ComposeMode::pool,
                       random_cell_params(rng, CellKind::gru, ComposeMode::pool, e, d),
                       random_cell_params(rng, CellKind::gru, ComposeMode::pool, e, d)};
    auto src = prepare_source(lat, vocab);
    auto ref = encode_bidirectional(src, table, base);
    CHECK(ref.size() == lat.length());
    for (auto kind : kKinds) {
      for (auto mode : kModes) {
        auto ann = encode_bidirectional(src, table, encoder_for(kind, mode, base, rng));
        for (std::size_t i = 0; i < ann.size(); ++i) CHECK(bitwise_equal(ann.h[i], ref.h[i]));
        CHECK(bitwise_equal(ann.backward_start, ref.backward_start));
      }
    }
  }
}

TEST_CASE("property: reverse symmetry, bounds and determinism") {
  Rng rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    auto r = random_lattice(rng, 1, 14);
    const auto& lat = r.lattice;
    auto rev = reverse(lat);
    // A vocabulary where a surface and its reversal share one embedding row.
    std::vector<std::string> words;
    for (const auto& e : lat.edges()) words.push_back(e.surface);
    for (const auto& e : rev.edges()) words.push_back(e.surface);
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    Vocab vocab(words);
    std::size_t e = 1 + rng.below(4), d = 1 + rng.below(4);
    Matrix table = random_matrix(rng, vocab.size(), e);
    for (std::size_t i = 0; i < lat.edges().size(); ++i) {
      auto from = table.row(vocab.lookup(lat.edges()[i].surface));
      const auto& mirrored = rev.edges()[rev.find(lat.length() - lat.edges()[i].end,
                                                   lat.length() - lat.edges()[i].start)];
      std::copy(from.begin(), from.end(), table.row(vocab.lookup(mirrored.surface)).begin());
    }
    for (auto kind : {CellKind::swl, CellKind::dwl}) {
      for (auto mode : kModes) {
        EncoderParams ep{kind, mode, random_cell_params(rng, kind, mode, e, d),
                         random_cell_params(rng, kind, mode, e, d)};
        for (Matrix* m : {&ep.fwd.cell.w, &ep.bwd.cell.u}) {
          for (auto& v : m->values()) v *= 10.0;
        }
        EncoderParams swapped{kind, mode, ep.bwd, ep.fwd};
        auto ann = encode_bidirectional(lat, SourceEmbeddings{table, vocab}, ep);
        auto mirrored = encode_bidirectional(rev, SourceEmbeddings{table, vocab}, swapped);
        const std::size_t n = lat.length();
        REQUIRE(ann.size() == n);
        REQUIRE(mirrored.size() == n);
        for (std::size_t i = 1; i < n; ++i) {
          CHECK(bitwise_equal(mirrored.h[i - 1], swap_halves(ann.h[n - i - 1])));
        }
        Vector last = ann.backward_start;
        last.resize(2 * d, 0.0);
        CHECK(bitwise_equal(mirrored.h[n - 1], last));
        CHECK(bitwise_equal(mirrored.backward_start, Vector(ann.h[n - 1].begin(), ann.h[n - 1].begin() + d)));

        for (const auto& h : ann.h) {
          for (double v : h) CHECK((v >= -1.0 && v <= 1.0));
        }
        auto again = encode_bidirectional(lat, SourceEmbeddings{table, vocab}, ep);
        for (std::size_t i = 0; i < n; ++i) CHECK(bitwise_equal(again.h[i], ann.h[i]));
      }
    }
  }
}

TEST_CASE("encoder and embedding gradients pass the finite-difference check") {
  for (auto kind : {CellKind::swl, CellKind::dwl}) {
    for (auto mode : kModes) {
      CAPTURE(to_string(kind));
      CAPTURE(to_string(mode));
      CHECK(sequence_grad_check(kind, mode, 4, 1) <= 1e-6);
    }
  }
  CHECK(sequence_grad_check(CellKind::gru, ComposeMode::pool, 4, 1) <= 1e-6);
}

// SPDX-License-Identifier: Apache-2.0
//
// The seeded "abcd" model used by the encoder and decoder oracle tests:
// dwl cells with gating, e=3, d=4, parameters initialized with seed 5 and
// gate tensors redrawn uniformly in [-1, 1] from seed 6.
#pragma once

#include <string>
#include <vector>

#include "latnmt/encoder.hpp"
#include "latnmt/lattice.hpp"
#include "latnmt/model.hpp"
#include "latnmt/vocab.hpp"

namespace latnmt::testing {

struct AbcdFixture {
  WordLattice lattice;
  Vocab src;
  Vocab tgt;
  ParameterStore store;
  SourceInstance source;
};

inline AbcdFixture abcd_fixture() {
  std::vector<Tokenization> toks = {{"ab", "cd"}, {"a", "bcd"}, {"ab", "c", "d"}};
  WordLattice lat = build_lattice(U"abcd", toks);
  std::vector<std::string> surfaces;
  for (const auto& e : lat.edges()) surfaces.push_back(e.surface);
  Vocab src(surfaces);
  Vocab tgt(std::vector<std::string>{"x", "y", "z"});
  auto store = ParameterStore::initialized({CellKind::dwl, ComposeMode::gate, src.size(), tgt.size(), 3, 4}, 5);
  Rng rng(6);
  for (auto& t : store.tensors()) {
    if (t.name.find(".gate_") == std::string::npos) continue;
    for (double& v : t.tensor->values()) v = rng.uniform(-1.0, 1.0);
  }
  SourceInstance source = prepare_source(lat, src);
  return {std::move(lat), std::move(src), std::move(tgt), std::move(store), std::move(source)};
}

}  // namespace latnmt::testing

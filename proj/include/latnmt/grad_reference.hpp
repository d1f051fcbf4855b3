// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient references. The forward computations here are
// written separately from the production cells, encoder and decoder and are
// templated on the scalar type, so the central differences can be taken in
// binary128 where float64 round-off would swamp small gradient entries.
#pragma once

#include <span>
#include <vector>

#include "latnmt/cells.hpp"
#include "latnmt/encoder.hpp"
#include "latnmt/model.hpp"
#include "latnmt/vocab.hpp"

namespace latnmt {

enum class OraclePrecision { binary64, binary128 };

/// A single cell application with the scalar objective <upstream, h_t>.
/// For the plain GRU, the k pairs are applied as k chained steps starting
/// from hs[0]; the other hs are unused.
struct CellCheckInstance {
  CellKind kind = CellKind::gru;
  ComposeMode mode = ComposeMode::pool;
  LatticeCellParams params;
  std::vector<Vector> xs;
  std::vector<Vector> hs;
  Vector upstream;
};

/// Entry order: u, u_r, u_z, w, w_r, w_z, then gate_input (b, u) and
/// gate_state (b, u) when present, then x_k and h_k for each k.
std::vector<std::span<const double>> cell_check_entries(const CellCheckInstance& inst);

/// Central differences (h = 1e-5) of the objective over every entry above.
std::vector<Vector> numeric_cell_gradients(const CellCheckInstance& inst, OraclePrecision precision);

/// Reference objective value, for cross-checking the production forward pass.
double reference_cell_objective(const CellCheckInstance& inst);

/// Central differences (h = 1e-5) of the teacher-forced sequence loss with
/// respect to every tensor of `store`, in name order.
std::vector<Vector> numeric_sequence_gradients(const SourceInstance& src,
                                               std::span<const TokenId> target,
                                               const ParameterStore& store,
                                               OraclePrecision precision);

double reference_sequence_loss(const SourceInstance& src, std::span<const TokenId> target,
                               const ParameterStore& store);

}  // namespace latnmt

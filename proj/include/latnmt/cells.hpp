// SPDX-License-Identifier: Apache-2.0
//
// The GRU family used by the encoder: the standard GRU, the shallow lattice
// GRU (compose inputs and predecessor states, then one GRU step) and the deep
// lattice GRU (one GRU step per incoming edge, then compose the results).
// Composition is either elementwise max pooling or normalized scalar gating.
#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "latnmt/numerics.hpp"

namespace latnmt {

enum class CellKind { gru, swl, dwl };
enum class ComposeMode { pool, gate };

std::string_view to_string(CellKind kind);
std::string_view to_string(ComposeMode mode);
/// Throws DataError on unknown names.
CellKind parse_cell_kind(std::string_view name);
ComposeMode parse_compose_mode(std::string_view name);

/// GRU weights without biases: input-side matrices are hidden x input,
/// recurrent ones hidden x hidden.
struct CellParams {
  Matrix u, u_r, u_z;
  Matrix w, w_r, w_z;

  static CellParams zeros(std::size_t input_dim, std::size_t hidden_dim);
  std::size_t input_dim() const { return w.cols(); }
  std::size_t hidden_dim() const { return u.rows(); }
};

/// Scalar gate sigma(u_g . v + b_g) used to weight each composed vector.
struct ComposeParams {
  Matrix u_g;  // 1 x dim
  Matrix b_g;  // 1 x 1

  static ComposeParams zeros(std::size_t dim);
  std::size_t dim() const { return u_g.cols(); }
  double bias() const { return b_g(0, 0); }
};

/// Parameters of one recurrent direction. In gate mode the shallow cell
/// composes inputs (dim e) and states (dim d) with separate gates; the deep
/// cell only composes states.
struct LatticeCellParams {
  CellParams cell;
  std::optional<ComposeParams> gate_input;
  std::optional<ComposeParams> gate_state;

  static LatticeCellParams zeros(CellKind kind, ComposeMode mode, std::size_t input_dim,
                                 std::size_t hidden_dim);
};

/// One incoming edge: its word vector and the hidden state at its start node.
struct StepInput {
  std::span<const double> x;
  std::span<const double> h_pre;
};

Vector gru_step(std::span<const double> x, std::span<const double> h_prev, const CellParams& p);

/// Elementwise maximum. Throws EmptyInputError for no vectors.
Vector compose_pool(std::span<const Vector> vs);

struct GateResult {
  Vector output;
  Vector weights;  // one per component, positive, summing to one
};
GateResult compose_gate(std::span<const Vector> vs, const ComposeParams& p);

// ---------------------------------------------------------------------------
// Recorded forward passes for reverse-mode differentiation.

struct GruTape {
  Vector x, h, r, z, cand, rh;
};

struct ComposeTape {
  std::vector<Vector> inputs;
  Vector raw;                      // gate: sigma values
  Vector weights;                  // gate: normalized weights
  std::vector<std::size_t> argmax; // pool: winning component per coordinate
};

struct StepTape {
  bool recorded = false;
  CellKind kind = CellKind::gru;
  ComposeMode mode = ComposeMode::pool;
  std::size_t k = 0;
  ComposeTape input_compose;
  ComposeTape state_compose;
  std::vector<GruTape> grus;
};

/// gru_step that records its intermediates.
Vector gru_step_recorded(std::span<const double> x, std::span<const double> h_prev,
                         const CellParams& p, GruTape& tape);
/// Reverse pass of one recorded GRU step: parameter gradients are added to
/// `grads`, input gradients overwrite dx and dh_prev.
void gru_step_backward(const GruTape& tape, const CellParams& p, std::span<const double> upstream,
                       CellParams& grads, Vector& dx, Vector& dh_prev);

Vector swl_gru_step(std::span<const StepInput> inputs, const LatticeCellParams& p, ComposeMode mode,
                    StepTape* tape = nullptr);
Vector dwl_gru_step(std::span<const StepInput> inputs, const LatticeCellParams& p, ComposeMode mode,
                    StepTape* tape = nullptr);

/// Dispatches on `kind`. The plain GRU accepts exactly one input and throws
/// TopologyError otherwise.
Vector cell_step(CellKind kind, ComposeMode mode, std::span<const StepInput> inputs,
                 const LatticeCellParams& p, StepTape* tape = nullptr);

struct StepInputGrads {
  std::vector<Vector> dx;
  std::vector<Vector> dh_pre;
};

/// Gradients of <upstream, h_t> for a recorded step. Parameter gradients are
/// accumulated into `grads`, input gradients returned. Throws StateError when
/// the tape was never recorded.
StepInputGrads cell_backward(const StepTape& tape, const LatticeCellParams& p,
                             std::span<const double> upstream, LatticeCellParams& grads);

/// Test hook: when set, cell_backward negates the candidate-state gradient so
/// that gradient checks can be shown to catch a planted bug.
void set_backward_fault_injection(bool enabled);

}  // namespace latnmt

// SPDX-License-Identifier: Apache-2.0
#include "latnmt/cells.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "latnmt/errors.hpp"

namespace latnmt {

namespace {

std::atomic<bool> g_fault_injection{false};

void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

void check_inputs(std::span<const StepInput> inputs, const CellParams& p) {
  if (inputs.empty()) throw EmptyInputError("cell step with no incoming edges");
  for (const auto& in : inputs) {
    require_dim(in.x.size(), p.input_dim(), "cell input");
    require_dim(in.h_pre.size(), p.hidden_dim(), "cell predecessor state");
  }
}

void check_components(std::span<const Vector> vs) {
  if (vs.empty()) throw EmptyInputError("composition of zero vectors");
  for (const auto& v : vs) require_dim(v.size(), vs.front().size(), "composition component");
}

const ComposeParams& require_gate(const std::optional<ComposeParams>& gate, const char* which) {
  if (!gate) throw InternalError(std::string("gate mode requires ") + which + " compose params");
  return *gate;
}

Vector gru_forward(std::span<const double> x, std::span<const double> h, const CellParams& p,
                   GruTape* tape) {
  require_dim(x.size(), p.input_dim(), "GRU input");
  require_dim(h.size(), p.hidden_dim(), "GRU state");
  const std::size_t d = p.hidden_dim();

  Vector r(d, 0.0), z(d, 0.0), cand(d, 0.0);
  affine_accumulate(p.w_r, x, r);
  affine_accumulate(p.u_r, h, r);
  affine_accumulate(p.w_z, x, z);
  affine_accumulate(p.u_z, h, z);
  for (std::size_t i = 0; i < d; ++i) {
    r[i] = sigmoid(r[i]);
    z[i] = sigmoid(z[i]);
  }
  Vector rh = hadamard(r, h);
  affine_accumulate(p.w, x, cand);
  affine_accumulate(p.u, rh, cand);
  Vector out(d);
  for (std::size_t i = 0; i < d; ++i) {
    cand[i] = std::tanh(cand[i]);
    out[i] = z[i] * h[i] + (1.0 - z[i]) * cand[i];
  }
  if (tape) {
    tape->x.assign(x.begin(), x.end());
    tape->h.assign(h.begin(), h.end());
    tape->r = std::move(r);
    tape->z = std::move(z);
    tape->cand = std::move(cand);
    tape->rh = std::move(rh);
  }
  return out;
}

// Accumulates parameter gradients and writes input gradients into dx, dh.
void gru_backward(const GruTape& t, const CellParams& p, std::span<const double> dout,
                  CellParams& g, Vector& dx, Vector& dh) {
  const std::size_t d = p.hidden_dim();
  dx.assign(p.input_dim(), 0.0);
  dh.assign(d, 0.0);
  const double sign = g_fault_injection.load(std::memory_order_relaxed) ? -1.0 : 1.0;

  Vector dpre_c(d), dpre_z(d), dpre_r(d), drh(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double dz = dout[i] * (t.h[i] - t.cand[i]);
    const double dcand = sign * dout[i] * (1.0 - t.z[i]);
    dh[i] = dout[i] * t.z[i];
    dpre_c[i] = dcand * (1.0 - t.cand[i] * t.cand[i]);
    dpre_z[i] = dz * t.z[i] * (1.0 - t.z[i]);
  }
  outer_accumulate(g.w, dpre_c, t.x);
  outer_accumulate(g.u, dpre_c, t.rh);
  affine_transposed_accumulate(p.w, dpre_c, dx);
  affine_transposed_accumulate(p.u, dpre_c, drh);
  for (std::size_t i = 0; i < d; ++i) {
    const double dr = drh[i] * t.h[i];
    dh[i] += drh[i] * t.r[i];
    dpre_r[i] = dr * t.r[i] * (1.0 - t.r[i]);
  }
  outer_accumulate(g.w_z, dpre_z, t.x);
  outer_accumulate(g.u_z, dpre_z, t.h);
  affine_transposed_accumulate(p.w_z, dpre_z, dx);
  affine_transposed_accumulate(p.u_z, dpre_z, dh);
  outer_accumulate(g.w_r, dpre_r, t.x);
  outer_accumulate(g.u_r, dpre_r, t.h);
  affine_transposed_accumulate(p.w_r, dpre_r, dx);
  affine_transposed_accumulate(p.u_r, dpre_r, dh);
}

Vector pool_forward(std::span<const Vector> vs, ComposeTape* tape) {
  check_components(vs);
  const std::size_t n = vs.front().size();
  Vector out = vs.front();
  std::vector<std::size_t> argmax(n, 0);
  for (std::size_t k = 1; k < vs.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (vs[k][i] > out[i]) {
        out[i] = vs[k][i];
        argmax[i] = k;
      }
    }
  }
  if (tape) {
    tape->inputs.assign(vs.begin(), vs.end());
    tape->argmax = std::move(argmax);
  }
  return out;
}

GateResult gate_forward(std::span<const Vector> vs, const ComposeParams& p, ComposeTape* tape) {
  check_components(vs);
  require_dim(vs.front().size(), p.dim(), "gate input");
  const std::size_t k_count = vs.size();
  Vector raw(k_count);
  double total = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    raw[k] = sigmoid(dot(p.u_g.row(0), vs[k]) + p.bias());
    total += raw[k];
  }
  GateResult result;
  if (k_count == 1) {
    result.output = vs.front();
    result.weights = {1.0};
  } else {
    result.weights.resize(k_count);
    result.output.assign(vs.front().size(), 0.0);
    for (std::size_t k = 0; k < k_count; ++k) {
      result.weights[k] = raw[k] / total;
      axpy(result.weights[k], vs[k], result.output);
    }
  }
  if (tape) {
    tape->inputs.assign(vs.begin(), vs.end());
    tape->raw = std::move(raw);
    tape->weights = result.weights;
  }
  return result;
}

Vector compose_forward(ComposeMode mode, std::span<const Vector> vs,
                       const std::optional<ComposeParams>& gate, const char* which,
                       ComposeTape* tape) {
  if (mode == ComposeMode::pool) return pool_forward(vs, tape);
  return gate_forward(vs, require_gate(gate, which), tape).output;
}

std::vector<Vector> compose_backward(ComposeMode mode, const ComposeTape& t,
                                     const std::optional<ComposeParams>& gate,
                                     std::optional<ComposeParams>& gate_grad,
                                     std::span<const double> dout) {
  const std::size_t k_count = t.inputs.size();
  const std::size_t n = dout.size();
  std::vector<Vector> dv(k_count, Vector(n, 0.0));
  if (mode == ComposeMode::pool) {
    for (std::size_t i = 0; i < n; ++i) dv[t.argmax[i]][i] = dout[i];
    return dv;
  }
  const ComposeParams& p = *gate;
  ComposeParams& g = *gate_grad;
  // out = sum_k w_k v_k with w_k = raw_k / S and raw_k = sigma(u . v_k + b).
  double total = 0.0;
  for (double r : t.raw) total += r;
  Vector dw(k_count);
  double mean_dw = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    dw[k] = dot(dout, t.inputs[k]);
    mean_dw += t.weights[k] * dw[k];
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    axpy(t.weights[k], dout, dv[k]);
    const double draw = (dw[k] - mean_dw) / total;
    const double dpre = draw * t.raw[k] * (1.0 - t.raw[k]);
    axpy(dpre, p.u_g.row(0), dv[k]);
    axpy(dpre, t.inputs[k], g.u_g.row(0));
    g.b_g(0, 0) += dpre;
  }
  return dv;
}

}  // namespace

std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::gru: return "gru";
    case CellKind::swl: return "swl";
    case CellKind::dwl: return "dwl";
  }
  return "?";
}

std::string_view to_string(ComposeMode mode) {
  return mode == ComposeMode::pool ? "pool" : "gate";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "gru") return CellKind::gru;
  if (name == "swl") return CellKind::swl;
  if (name == "dwl") return CellKind::dwl;
  throw DataError("unknown cell kind \"" + std::string(name) + "\"");
}

ComposeMode parse_compose_mode(std::string_view name) {
  if (name == "pool") return ComposeMode::pool;
  if (name == "gate") return ComposeMode::gate;
  throw DataError("unknown composition mode \"" + std::string(name) + "\"");
}

CellParams CellParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  return {Matrix(hidden_dim, hidden_dim), Matrix(hidden_dim, hidden_dim),
          Matrix(hidden_dim, hidden_dim), Matrix(hidden_dim, input_dim),
          Matrix(hidden_dim, input_dim),  Matrix(hidden_dim, input_dim)};
}

ComposeParams ComposeParams::zeros(std::size_t dim) { return {Matrix(1, dim), Matrix(1, 1)}; }

LatticeCellParams LatticeCellParams::zeros(CellKind kind, ComposeMode mode, std::size_t input_dim,
                                           std::size_t hidden_dim) {
  LatticeCellParams p{CellParams::zeros(input_dim, hidden_dim), std::nullopt, std::nullopt};
  if (kind != CellKind::gru && mode == ComposeMode::gate) {
    p.gate_state = ComposeParams::zeros(hidden_dim);
    if (kind == CellKind::swl) p.gate_input = ComposeParams::zeros(input_dim);
  }
  return p;
}

Vector gru_step(std::span<const double> x, std::span<const double> h_prev, const CellParams& p) {
  return gru_forward(x, h_prev, p, nullptr);
}

Vector gru_step_recorded(std::span<const double> x, std::span<const double> h_prev,
                         const CellParams& p, GruTape& tape) {
  return gru_forward(x, h_prev, p, &tape);
}

void gru_step_backward(const GruTape& tape, const CellParams& p, std::span<const double> upstream,
                       CellParams& grads, Vector& dx, Vector& dh_prev) {
  require_dim(upstream.size(), p.hidden_dim(), "upstream gradient");
  gru_backward(tape, p, upstream, grads, dx, dh_prev);
}

Vector compose_pool(std::span<const Vector> vs) { return pool_forward(vs, nullptr); }

GateResult compose_gate(std::span<const Vector> vs, const ComposeParams& p) {
  return gate_forward(vs, p, nullptr);
}

Vector swl_gru_step(std::span<const StepInput> inputs, const LatticeCellParams& p, ComposeMode mode,
                    StepTape* tape) {
  check_inputs(inputs, p.cell);
  std::vector<Vector> xs, hs;
  xs.reserve(inputs.size());
  hs.reserve(inputs.size());
  for (const auto& in : inputs) {
    xs.emplace_back(in.x.begin(), in.x.end());
    hs.emplace_back(in.h_pre.begin(), in.h_pre.end());
  }
  const Vector x = compose_forward(mode, xs, p.gate_input, "input-side",
                                   tape ? &tape->input_compose : nullptr);
  const Vector h = compose_forward(mode, hs, p.gate_state, "state-side",
                                   tape ? &tape->state_compose : nullptr);
  if (tape) {
    tape->grus.assign(1, {});
    tape->kind = CellKind::swl;
    tape->mode = mode;
    tape->k = inputs.size();
    tape->recorded = true;
  }
  return gru_forward(x, h, p.cell, tape ? &tape->grus.front() : nullptr);
}

Vector dwl_gru_step(std::span<const StepInput> inputs, const LatticeCellParams& p, ComposeMode mode,
                    StepTape* tape) {
  check_inputs(inputs, p.cell);
  if (tape) tape->grus.assign(inputs.size(), {});
  std::vector<Vector> branch;
  branch.reserve(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    branch.push_back(
        gru_forward(inputs[k].x, inputs[k].h_pre, p.cell, tape ? &tape->grus[k] : nullptr));
  }
  Vector out = compose_forward(mode, branch, p.gate_state, "state-side",
                               tape ? &tape->state_compose : nullptr);
  if (tape) {
    tape->kind = CellKind::dwl;
    tape->mode = mode;
    tape->k = inputs.size();
    tape->recorded = true;
  }
  return out;
}

Vector cell_step(CellKind kind, ComposeMode mode, std::span<const StepInput> inputs,
                 const LatticeCellParams& p, StepTape* tape) {
  switch (kind) {
    case CellKind::swl:
      return swl_gru_step(inputs, p, mode, tape);
    case CellKind::dwl:
      return dwl_gru_step(inputs, p, mode, tape);
    case CellKind::gru:
      break;
  }
  check_inputs(inputs, p.cell);
  if (inputs.size() != 1) {
    throw TopologyError("standard GRU cannot consume " + std::to_string(inputs.size()) +
                        " incoming edges");
  }
  if (tape) {
    tape->grus.assign(1, {});
    tape->kind = CellKind::gru;
    tape->mode = mode;
    tape->k = 1;
    tape->recorded = true;
  }
  return gru_forward(inputs[0].x, inputs[0].h_pre, p.cell, tape ? &tape->grus.front() : nullptr);
}

StepInputGrads cell_backward(const StepTape& tape, const LatticeCellParams& p,
                             std::span<const double> upstream, LatticeCellParams& grads) {
  if (!tape.recorded) throw StateError("backward pass requested for an unrecorded step");
  require_dim(upstream.size(), p.cell.hidden_dim(), "upstream gradient");
  StepInputGrads out;
  switch (tape.kind) {
    case CellKind::gru: {
      out.dx.resize(1);
      out.dh_pre.resize(1);
      gru_backward(tape.grus.front(), p.cell, upstream, grads.cell, out.dx[0], out.dh_pre[0]);
      break;
    }
    case CellKind::swl: {
      Vector dx, dh;
      gru_backward(tape.grus.front(), p.cell, upstream, grads.cell, dx, dh);
      out.dx = compose_backward(tape.mode, tape.input_compose, p.gate_input, grads.gate_input, dx);
      out.dh_pre =
          compose_backward(tape.mode, tape.state_compose, p.gate_state, grads.gate_state, dh);
      break;
    }
    case CellKind::dwl: {
      const auto dbranch =
          compose_backward(tape.mode, tape.state_compose, p.gate_state, grads.gate_state, upstream);
      out.dx.resize(tape.k);
      out.dh_pre.resize(tape.k);
      for (std::size_t k = 0; k < tape.k; ++k) {
        gru_backward(tape.grus[k], p.cell, dbranch[k], grads.cell, out.dx[k], out.dh_pre[k]);
      }
      break;
    }
  }
  return out;
}

void set_backward_fault_injection(bool enabled) {
  g_fault_injection.store(enabled, std::memory_order_relaxed);
}

}  // namespace latnmt

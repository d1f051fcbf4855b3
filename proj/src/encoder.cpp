// SPDX-License-Identifier: Apache-2.0
#include "latnmt/encoder.hpp"

#include "latnmt/errors.hpp"

namespace latnmt {

Vector embed_edge(const LatticeEdge& edge, const SourceEmbeddings& emb) {
  const TokenId id = emb.vocab.lookup(edge.surface);
  if (id >= emb.table.rows()) throw DimensionError("embedding table smaller than vocabulary");
  const auto row = emb.table.row(id);
  return Vector(row.begin(), row.end());
}

namespace {

std::vector<TokenId> edge_ids(const WordLattice& lat, const Vocab& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(lat.edges().size());
  for (const auto& e : lat.edges()) ids.push_back(vocab.lookup(e.surface));
  return ids;
}

}  // namespace

SourceInstance prepare_source(const WordLattice& lat, const Vocab& vocab) {
  SourceInstance src{lat, reverse(lat), {}, {}};
  src.ids = edge_ids(src.lattice, vocab);
  // Reversed edge (a, b) is original edge (N-b, N-a) and keeps its word id.
  const std::size_t n = lat.length();
  src.reversed_ids.reserve(src.reversed.edges().size());
  for (const auto& e : src.reversed.edges()) {
    src.reversed_ids.push_back(src.ids[lat.find(n - e.end, n - e.start)]);
  }
  return src;
}

std::vector<Vector> encode_forward(const WordLattice& lat, std::span<const TokenId> ids,
                                   const Matrix& emb_table, const LatticeCellParams& p,
                                   CellKind kind, ComposeMode mode, DirectionTape* tape) {
  if (ids.size() != lat.edges().size()) throw DimensionError("one token id per edge required");
  if (emb_table.cols() != p.cell.input_dim()) {
    throw DimensionError("embedding width does not match the cell input");
  }
  if (kind == CellKind::gru && !lat.is_chain()) {
    throw TopologyError("the standard GRU encoder needs a chain lattice");
  }
  const std::size_t n = lat.length();
  const std::size_t d = p.cell.hidden_dim();
  std::vector<Vector> states(n + 1, Vector(d, 0.0));
  if (tape) {
    tape->steps.assign(n + 1, {});
    tape->dead.assign(n + 1, false);
  }
  std::vector<StepInput> inputs;
  for (NodeIndex t = 1; t <= n; ++t) {
    const auto incoming = lat.incoming(t);
    if (incoming.empty()) {
      if (tape) tape->dead[t] = true;
      continue;
    }
    inputs.clear();
    for (std::size_t i : incoming) {
      const TokenId id = ids[i];
      if (id >= emb_table.rows()) throw DimensionError("token id outside the embedding table");
      inputs.push_back({emb_table.row(id), states[lat.edges()[i].start]});
    }
    states[t] = cell_step(kind, mode, inputs, p, tape ? &tape->steps[t] : nullptr);
  }
  return states;
}

std::vector<Vector> encode_forward(const WordLattice& lat, const SourceEmbeddings& emb,
                                   const LatticeCellParams& p, CellKind kind, ComposeMode mode) {
  return encode_forward(lat, edge_ids(lat, emb.vocab), emb.table, p, kind, mode);
}

Annotations encode_bidirectional(const SourceInstance& src, const Matrix& emb_table,
                                 const EncoderParams& ep, EncoderTape* tape) {
  auto fwd = encode_forward(src.lattice, src.ids, emb_table, ep.fwd, ep.kind, ep.mode,
                            tape ? &tape->fwd : nullptr);
  auto bwd = encode_forward(src.reversed, src.reversed_ids, emb_table, ep.bwd, ep.kind, ep.mode,
                            tape ? &tape->bwd : nullptr);
  const std::size_t n = src.lattice.length();
  Annotations ann;
  ann.h.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) ann.h.push_back(concat(fwd[i], bwd[n - i]));
  ann.backward_start = bwd[n];
  if (tape) {
    tape->fwd_states = std::move(fwd);
    tape->bwd_states = std::move(bwd);
  }
  return ann;
}

Annotations encode_bidirectional(const WordLattice& lat, const SourceEmbeddings& emb,
                                 const EncoderParams& ep) {
  return encode_bidirectional(prepare_source(lat, emb.vocab), emb.table, ep);
}

namespace {

void direction_backward(const WordLattice& lat, std::span<const TokenId> ids,
                        const DirectionTape& tape, const LatticeCellParams& p,
                        std::vector<Vector>& d_states, LatticeCellParams& grads, Matrix& emb_grad) {
  for (NodeIndex t = lat.length(); t >= 1; --t) {
    if (tape.dead[t]) continue;
    const auto step = cell_backward(tape.steps[t], p, d_states[t], grads);
    const auto incoming = lat.incoming(t);
    for (std::size_t k = 0; k < incoming.size(); ++k) {
      const auto& edge = lat.edges()[incoming[k]];
      axpy(1.0, step.dx[k], emb_grad.row(ids[incoming[k]]));
      axpy(1.0, step.dh_pre[k], d_states[edge.start]);
    }
  }
}

}  // namespace

void encoder_backward(const SourceInstance& src, const EncoderTape& tape, const EncoderParams& ep,
                      std::span<const Vector> d_annotations, std::span<const double> d_backward_start,
                      EncoderParams& grads, Matrix& emb_grad) {
  const std::size_t n = src.lattice.length();
  const std::size_t d = ep.fwd.cell.hidden_dim();
  if (d_annotations.size() != n) throw DimensionError("one annotation gradient per node required");
  if (tape.fwd.steps.size() != n + 1 || tape.bwd.steps.size() != n + 1) {
    throw StateError("encoder tape does not match the lattice");
  }
  std::vector<Vector> d_fwd(n + 1, Vector(d, 0.0)), d_bwd(n + 1, Vector(d, 0.0));
  for (std::size_t i = 1; i <= n; ++i) {
    const auto& g = d_annotations[i - 1];
    if (g.size() != 2 * d) throw DimensionError("annotation gradient width");
    std::copy(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(d), d_fwd[i].begin());
    std::copy(g.begin() + static_cast<std::ptrdiff_t>(d), g.end(), d_bwd[n - i].begin());
  }
  axpy(1.0, d_backward_start, d_bwd[n]);
  direction_backward(src.lattice, src.ids, tape.fwd, ep.fwd, d_fwd, grads.fwd, emb_grad);
  direction_backward(src.reversed, src.reversed_ids, tape.bwd, ep.bwd, d_bwd, grads.bwd, emb_grad);
}

}  // namespace latnmt

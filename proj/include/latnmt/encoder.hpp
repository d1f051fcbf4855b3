// SPDX-License-Identifier: Apache-2.0
//
// Bidirectional lattice encoder. The forward direction walks nodes v_1..v_N
// in order, feeding each node's incoming edges (word vector, state at the
// edge's start node) to the cell; the backward direction does the same on
// the reversed lattice. Node v_i's annotation is [forward state; backward
// state], so there are exactly N annotations whatever the tokenizations.
#pragma once

#include <span>
#include <vector>

#include "latnmt/cells.hpp"
#include "latnmt/lattice.hpp"
#include "latnmt/model.hpp"
#include "latnmt/vocab.hpp"

namespace latnmt {

struct SourceEmbeddings {
  const Matrix& table;
  const Vocab& vocab;
};

/// The table row for the edge's surface, or the UNK row when out of vocabulary.
Vector embed_edge(const LatticeEdge& edge, const SourceEmbeddings& emb);

/// A lattice with its reversal and the vocabulary ids of both edge lists,
/// prepared once per sentence.
struct SourceInstance {
  WordLattice lattice;
  WordLattice reversed;
  std::vector<TokenId> ids;
  std::vector<TokenId> reversed_ids;
};

SourceInstance prepare_source(const WordLattice& lat, const Vocab& vocab);

struct DirectionTape {
  std::vector<StepTape> steps;  // one per node; node 0 and dead nodes stay unrecorded
  std::vector<bool> dead;
};

/// States for nodes v_0..v_N. v_0 is the zero vector; a node with no incoming
/// edge gets the zero vector and is flagged dead in the tape.
std::vector<Vector> encode_forward(const WordLattice& lat, std::span<const TokenId> edge_ids,
                                   const Matrix& emb_table, const LatticeCellParams& p,
                                   CellKind kind, ComposeMode mode, DirectionTape* tape = nullptr);

std::vector<Vector> encode_forward(const WordLattice& lat, const SourceEmbeddings& emb,
                                   const LatticeCellParams& p, CellKind kind, ComposeMode mode);

struct Annotations {
  std::vector<Vector> h;  // h[i-1] is the annotation of node v_i, width 2d
  /// Backward state at v_0: the backward direction's summary of the whole
  /// sentence, used to initialize the decoder.
  Vector backward_start;

  std::size_t size() const { return h.size(); }
};

struct EncoderTape {
  DirectionTape fwd;
  DirectionTape bwd;
  std::vector<Vector> fwd_states;
  std::vector<Vector> bwd_states;  // indexed by reversed-lattice node
};

Annotations encode_bidirectional(const SourceInstance& src, const Matrix& emb_table,
                                 const EncoderParams& ep, EncoderTape* tape = nullptr);

Annotations encode_bidirectional(const WordLattice& lat, const SourceEmbeddings& emb,
                                 const EncoderParams& ep);

/// Backpropagates annotation gradients through both directions, accumulating
/// into the encoder parameter gradients and the embedding table gradient.
void encoder_backward(const SourceInstance& src, const EncoderTape& tape, const EncoderParams& ep,
                      std::span<const Vector> d_annotations, std::span<const double> d_backward_start,
                      EncoderParams& grads, Matrix& emb_grad);

}  // namespace latnmt

// SPDX-License-Identifier: Apache-2.0
//
// Every trainable tensor of the translation model, addressable by a stable
// name. Iteration over named tensors is always in lexicographic name order.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latnmt/cells.hpp"
#include "latnmt/numerics.hpp"

namespace latnmt {

struct ModelConfig {
  CellKind cell = CellKind::dwl;
  ComposeMode compose = ComposeMode::gate;
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t embed_dim = 320;
  std::size_t hidden_dim = 512;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EncoderParams {
  CellKind kind = CellKind::dwl;
  ComposeMode mode = ComposeMode::gate;
  LatticeCellParams fwd;
  LatticeCellParams bwd;
};

struct AttentionParams {
  Matrix w_a;  // a x d_dec
  Matrix u_a;  // a x 2d
  Matrix v_a;  // a x 1
};

/// Decoder GRU over [target embedding; context], a tanh readout and the
/// projection that turns the encoder's sentence summary into s_0.
struct DecoderParams {
  AttentionParams att;
  CellParams cell;
  Matrix tgt_emb;  // |V_tgt| x e
  Matrix w_y;      // o x e
  Matrix w_s;      // o x d_dec
  Matrix w_m;      // o x 2d
  Matrix w_o;      // |V_tgt| x o
  Matrix w_init;   // d_dec x d
};

struct NamedTensor {
  std::string name;
  Matrix* tensor;
};

struct ConstNamedTensor {
  std::string name;
  const Matrix* tensor;
};

struct ParameterStore {
  ModelConfig config;
  Matrix src_emb;  // |V_src| x e
  EncoderParams enc;
  DecoderParams dec;

  /// All tensors zero, shaped for `config`.
  static ParameterStore zeros(const ModelConfig& config);
  /// Glorot-uniform matrices, embeddings uniform in [-0.1, 0.1], gate
  /// parameters zero. Tensors are drawn in name order from one stream.
  static ParameterStore initialized(const ModelConfig& config, std::uint64_t seed);

  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
  /// Mutable views of every tensor's values, in name order.
  std::vector<std::span<double>> spans();

  void set_zero();
  void scale(double factor);
  std::size_t parameter_count() const;
};

/// Same names and shapes, compared value by value (bitwise for finite values).
bool same_values(const ParameterStore& a, const ParameterStore& b);

}  // namespace latnmt

// SPDX-License-Identifier: Apache-2.0
//
// Attention decoder. Step j attends over the annotations with s_{j-1},
// advances a GRU over [embed(y_{j-1}); m_j] and reads out
// softmax(W_o tanh(W_y embed(y_{j-1}) + W_s s_j + W_m m_j)).
#pragma once

#include <span>
#include <vector>

#include "latnmt/encoder.hpp"
#include "latnmt/model.hpp"
#include "latnmt/vocab.hpp"

namespace latnmt {

struct DecodeState {
  Vector s;
  TokenId prev_token = kBos;
  std::size_t step = 0;  // decoder steps taken so far
};

/// s_0 = tanh(W_init * backward state at the sentence start).
Vector init_state(const Annotations& ann, const DecoderParams& dp);

struct AttentionResult {
  Vector alpha;
  Vector context;
};

AttentionResult attend(std::span<const double> s_prev, const Annotations& ann,
                       const AttentionParams& ap);

/// Advances the decoder GRU on (embed(state.prev_token), context).
DecodeState decoder_step(const DecodeState& state, std::span<const double> context,
                         const DecoderParams& dp);

/// Distribution over the target vocabulary for the state returned by decoder_step.
Vector output_distribution(const DecodeState& state, std::span<const double> context,
                           const DecoderParams& dp);

/// Argmax decoding (ties to the lowest id); EOS is not included in the output.
std::vector<TokenId> greedy_decode(const Annotations& ann, const DecoderParams& dp,
                                   std::size_t max_len);

/// Beam search. With length normalization, hypotheses are ranked by mean
/// log-probability per emitted token (EOS included). Width 1 reproduces greedy.
std::vector<TokenId> beam_decode(const Annotations& ann, const DecoderParams& dp,
                                 std::size_t max_len, std::size_t beam_width,
                                 bool length_norm = true);

// ---------------------------------------------------------------------------
// Pieces shared with the training loop.

/// U_a h_i for every annotation; constant across decoder steps.
std::vector<Vector> attention_keys(const Annotations& ann, const AttentionParams& ap);

struct AttentionTape {
  std::vector<Vector> hidden;  // tanh(W_a s + U_a h_i)
  Vector alpha;
};

AttentionResult attend_with_keys(std::span<const double> s_prev, const Annotations& ann,
                                 std::span<const Vector> keys, const AttentionParams& ap,
                                 AttentionTape* tape = nullptr);

struct ReadoutTape {
  Vector hidden;  // tanh readout layer
  Vector probs;
};

/// Logits are W_o * hidden; returns the softmax.
Vector readout(TokenId prev, std::span<const double> s, std::span<const double> context,
               const DecoderParams& dp, ReadoutTape* tape = nullptr);

}  // namespace latnmt

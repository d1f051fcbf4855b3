// SPDX-License-Identifier: Apache-2.0
#include "latnmt/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "latnmt/errors.hpp"

namespace latnmt {

namespace {

std::span<const double> embedding(const Matrix& table, TokenId id) {
  if (id >= table.rows()) throw DimensionError("target token id out of range");
  return table.row(id);
}

TokenId argmax(std::span<const double> probs) {
  // std::max_element returns the first maximum, i.e. the lowest id on ties.
  return static_cast<TokenId>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace

Vector init_state(const Annotations& ann, const DecoderParams& dp) {
  if (ann.size() == 0) throw DimensionError("decoder needs at least one annotation");
  return latnmt::tanh(affine(dp.w_init, ann.backward_start));
}

std::vector<Vector> attention_keys(const Annotations& ann, const AttentionParams& ap) {
  std::vector<Vector> keys;
  keys.reserve(ann.size());
  for (const auto& h : ann.h) keys.push_back(affine(ap.u_a, h));
  return keys;
}

AttentionResult attend_with_keys(std::span<const double> s_prev, const Annotations& ann,
                                 std::span<const Vector> keys, const AttentionParams& ap,
                                 AttentionTape* tape) {
  if (ann.size() == 0) throw DimensionError("attention over zero annotations");
  const Vector query = affine(ap.w_a, s_prev);
  const auto v = ap.v_a.values();
  Vector scores(ann.size());
  if (tape) tape->hidden.resize(ann.size());
  Vector hidden(query.size());
  for (std::size_t i = 0; i < ann.size(); ++i) {
    for (std::size_t a = 0; a < query.size(); ++a) hidden[a] = std::tanh(query[a] + keys[i][a]);
    scores[i] = dot(v, hidden);
    if (tape) tape->hidden[i] = hidden;
  }
  AttentionResult out{softmax(scores), Vector(ann.h.front().size(), 0.0)};
  for (std::size_t i = 0; i < ann.size(); ++i) axpy(out.alpha[i], ann.h[i], out.context);
  if (tape) tape->alpha = out.alpha;
  return out;
}

AttentionResult attend(std::span<const double> s_prev, const Annotations& ann,
                       const AttentionParams& ap) {
  const auto keys = attention_keys(ann, ap);
  return attend_with_keys(s_prev, ann, keys, ap);
}

DecodeState decoder_step(const DecodeState& state, std::span<const double> context,
                         const DecoderParams& dp) {
  const Vector input = concat(embedding(dp.tgt_emb, state.prev_token), context);
  return {gru_step(input, state.s, dp.cell), state.prev_token, state.step + 1};
}

Vector readout(TokenId prev, std::span<const double> s, std::span<const double> context,
               const DecoderParams& dp, ReadoutTape* tape) {
  Vector pre(dp.w_y.rows(), 0.0);
  affine_accumulate(dp.w_y, embedding(dp.tgt_emb, prev), pre);
  affine_accumulate(dp.w_s, s, pre);
  affine_accumulate(dp.w_m, context, pre);
  Vector hidden = latnmt::tanh(pre);
  Vector probs = softmax(affine(dp.w_o, hidden));
  if (tape) {
    tape->hidden = std::move(hidden);
    tape->probs = probs;
  }
  return probs;
}

Vector output_distribution(const DecodeState& state, std::span<const double> context,
                           const DecoderParams& dp) {
  return readout(state.prev_token, state.s, context, dp);
}

std::vector<TokenId> greedy_decode(const Annotations& ann, const DecoderParams& dp,
                                   std::size_t max_len) {
  const auto keys = attention_keys(ann, dp.att);
  DecodeState state{init_state(ann, dp), kBos, 0};
  std::vector<TokenId> out;
  for (std::size_t j = 0; j < max_len; ++j) {
    const auto att = attend_with_keys(state.s, ann, keys, dp.att);
    state = decoder_step(state, att.context, dp);
    const TokenId next = argmax(output_distribution(state, att.context, dp));
    if (next == kEos) break;
    out.push_back(next);
    state.prev_token = next;
  }
  return out;
}

std::vector<TokenId> beam_decode(const Annotations& ann, const DecoderParams& dp,
                                 std::size_t max_len, std::size_t beam_width, bool length_norm) {
  if (beam_width == 0) throw InternalError("beam width must be at least 1");
  struct Hyp {
    DecodeState state;
    std::vector<TokenId> tokens;
    double logprob = 0.0;
  };
  struct Candidate {
    std::size_t parent;
    TokenId token;
    double logprob;
  };
  auto score = [length_norm](double logprob, std::size_t len) {
    return length_norm ? logprob / static_cast<double>(len) : logprob;
  };

  const auto keys = attention_keys(ann, dp.att);
  std::vector<Hyp> live{{DecodeState{init_state(ann, dp), kBos, 0}, {}, 0.0}};
  std::vector<std::pair<double, std::vector<TokenId>>> finished;

  for (std::size_t j = 0; j < max_len && !live.empty(); ++j) {
    std::vector<Candidate> cands;
    std::vector<DecodeState> advanced;
    for (std::size_t h = 0; h < live.size(); ++h) {
      const auto att = attend_with_keys(live[h].state.s, ann, keys, dp.att);
      advanced.push_back(decoder_step(live[h].state, att.context, dp));
      const Vector probs = output_distribution(advanced.back(), att.context, dp);
      for (std::size_t y = 0; y < probs.size(); ++y) {
        cands.push_back({h, static_cast<TokenId>(y), live[h].logprob + std::log(probs[y])});
      }
    }
    // Live hypotheses all have the same length, so raw log-probability ranks
    // them; stable order keeps lower parents and lower ids first on ties.
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.logprob > b.logprob; });
    cands.resize(std::min(cands.size(), beam_width));
    std::vector<Hyp> next;
    for (const auto& c : cands) {
      std::vector<TokenId> tokens = live[c.parent].tokens;
      if (c.token == kEos) {
        finished.emplace_back(score(c.logprob, tokens.size() + 1), std::move(tokens));
        continue;
      }
      tokens.push_back(c.token);
      DecodeState state = advanced[c.parent];
      state.prev_token = c.token;
      next.push_back({std::move(state), std::move(tokens), c.logprob});
    }
    live = std::move(next);
    if (finished.size() >= beam_width) break;
  }
  for (auto& h : live) finished.emplace_back(score(h.logprob, h.tokens.size()), h.tokens);
  std::stable_sort(finished.begin(), finished.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  return finished.front().second;
}

}  // namespace latnmt

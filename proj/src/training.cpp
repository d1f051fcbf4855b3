// SPDX-License-Identifier: Apache-2.0
#include "latnmt/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "latnmt/checkpoint.hpp"
#include "latnmt/decoder.hpp"
#include "latnmt/errors.hpp"
#include "latnmt/evaluation.hpp"
#include "latnmt/grad_reference.hpp"

namespace latnmt {

void Hyperparams::validate() const {
  auto fail = [](const char* field) { throw DataError(std::string("invalid hyperparameter: ") + field); };
  if (embed_dim == 0) fail("embed_dim");
  if (hidden == 0) fail("hidden");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr");
  if (batch == 0) fail("batch");
  if (!(clip > 0.0)) fail("clip");
  if (!(rmsprop_rho > 0.0 && rmsprop_rho < 1.0)) fail("rho");
  if (!(rmsprop_eps > 0.0)) fail("eps");
  if (rmsprop_momentum != 0.0) fail("momentum (only 0 is supported)");
  if (max_src_chars == 0) fail("max_src_chars");
  if (max_tgt_words == 0) fail("max_tgt_words");
  if (patience_epochs == 0) fail("patience");
}

// ---------------------------------------------------------------------------
// Rmsprop

RmspropState RmspropState::zeros_like(const ParameterStore& store) {
  return {ParameterStore::zeros(store.config), ParameterStore::zeros(store.config), 0};
}

void rmsprop_update(std::span<double> params, std::span<const double> grads, std::span<double> n,
                    std::span<double> m, const Hyperparams& hp) {
  if (grads.size() != params.size() || n.size() != params.size() || m.size() != params.size()) {
    throw ShapeError("rmsprop: parameter, gradient and accumulator sizes differ");
  }
  const double rho = hp.rmsprop_rho;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    n[i] = rho * n[i] + (1.0 - rho) * g * g;
    m[i] = rho * m[i] + (1.0 - rho) * g;
    params[i] += -(hp.lr * g) / std::sqrt(n[i] - m[i] * m[i] + hp.rmsprop_eps);
  }
}

void rmsprop_update(ParameterStore& store, const ParameterStore& grads, RmspropState& state,
                    const Hyperparams& hp) {
  auto p = store.tensors();
  auto n = state.n.tensors();
  auto m = state.m.tensors();
  const auto g = grads.tensors();
  if (p.size() != g.size() || p.size() != n.size() || p.size() != m.size()) {
    throw ShapeError("rmsprop: stores hold different tensors");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].name != g[i].name || !p[i].tensor->same_shape(*g[i].tensor) ||
        !p[i].tensor->same_shape(*n[i].tensor) || !p[i].tensor->same_shape(*m[i].tensor)) {
      throw ShapeError("rmsprop: shape mismatch for " + p[i].name);
    }
    rmsprop_update(p[i].tensor->values(), g[i].tensor->values(), n[i].tensor->values(),
                   m[i].tensor->values(), hp);
  }
  ++state.step;
}

// ---------------------------------------------------------------------------
// Loss and reverse pass

namespace {

struct DecoderStepTape {
  TokenId prev = kBos;
  AttentionTape att;
  Vector context;
  GruTape gru;
  Vector s;
  ReadoutTape out;
};

double log_prob(const Matrix& w_o, std::span<const double> hidden, TokenId y) {
  const Vector logits = affine(w_o, hidden);
  double top = logits[0];
  for (double v : logits) top = std::max(top, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - top);
  return logits[y] - top - std::log(sum);
}

}  // namespace

double sequence_loss(const SourceInstance& src, std::span<const TokenId> target,
                     const ParameterStore& store, ParameterStore* grads) {
  if (target.empty()) throw DataError("empty target sequence");
  if (target.back() != kEos) throw DataError("target sequence must end with EOS");
  const DecoderParams& dp = store.dec;
  for (TokenId y : target) {
    if (y >= dp.tgt_emb.rows()) throw DimensionError("target id outside the vocabulary");
  }

  EncoderTape enc_tape;
  const Annotations ann =
      encode_bidirectional(src, store.src_emb, store.enc, grads ? &enc_tape : nullptr);
  const auto keys = attention_keys(ann, dp.att);
  const Vector s0 = init_state(ann, dp);

  std::vector<DecoderStepTape> steps(target.size());
  double loss = 0.0;
  Vector s = s0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    auto& st = steps[j];
    st.prev = j == 0 ? kBos : target[j - 1];
    auto att = attend_with_keys(s, ann, keys, dp.att, &st.att);
    st.context = std::move(att.context);
    const Vector input = concat(dp.tgt_emb.row(st.prev), st.context);
    s = gru_step_recorded(input, s, dp.cell, st.gru);
    st.s = s;
    readout(st.prev, st.s, st.context, dp, &st.out);
    loss -= log_prob(dp.w_o, st.out.hidden, target[j]);
  }
  if (!std::isfinite(loss)) throw InternalError("non-finite loss");
  if (!grads) return loss;

  ParameterStore& g = *grads;
  const std::size_t n = ann.size();
  const std::size_t e = dp.tgt_emb.cols();
  std::vector<Vector> d_ann(n, Vector(ann.h.front().size(), 0.0));
  std::vector<Vector> d_keys(n, Vector(dp.att.u_a.rows(), 0.0));
  Vector ds(s0.size(), 0.0);
  Vector dinput, ds_prev;

  for (std::size_t j = target.size(); j-- > 0;) {
    const auto& st = steps[j];
    // Readout: logits = W_o tanh(W_y y + W_s s + W_m m), loss = -log softmax[y].
    Vector dlogits = st.out.probs;
    dlogits[target[j]] -= 1.0;
    outer_accumulate(g.dec.w_o, dlogits, st.out.hidden);
    Vector dpre(st.out.hidden.size(), 0.0);
    affine_transposed_accumulate(dp.w_o, dlogits, dpre);
    for (std::size_t i = 0; i < dpre.size(); ++i) {
      dpre[i] *= 1.0 - st.out.hidden[i] * st.out.hidden[i];
    }
    const auto prev_emb = dp.tgt_emb.row(st.prev);
    outer_accumulate(g.dec.w_y, dpre, prev_emb);
    outer_accumulate(g.dec.w_s, dpre, st.s);
    outer_accumulate(g.dec.w_m, dpre, st.context);
    Vector demb(e, 0.0), dctx(st.context.size(), 0.0);
    affine_transposed_accumulate(dp.w_y, dpre, demb);
    affine_transposed_accumulate(dp.w_s, dpre, ds);
    affine_transposed_accumulate(dp.w_m, dpre, dctx);

    // Decoder GRU over [embedding; context].
    gru_step_backward(st.gru, dp.cell, ds, g.dec.cell, dinput, ds_prev);
    for (std::size_t i = 0; i < e; ++i) demb[i] += dinput[i];
    for (std::size_t i = 0; i < dctx.size(); ++i) dctx[i] += dinput[e + i];
    axpy(1.0, demb, g.dec.tgt_emb.row(st.prev));

    // Attention: m = sum alpha_i h_i, alpha = softmax(v_a . tanh(W_a s + U_a h_i)).
    const auto& alpha = st.att.alpha;
    Vector dalpha(n);
    double weighted = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dalpha[i] = dot(dctx, ann.h[i]);
      weighted += alpha[i] * dalpha[i];
      axpy(alpha[i], dctx, d_ann[i]);
    }
    const auto v_a = dp.att.v_a.values();
    auto g_v_a = g.dec.att.v_a.values();
    Vector dquery(v_a.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double de = alpha[i] * (dalpha[i] - weighted);
      const auto& hidden = st.att.hidden[i];
      for (std::size_t a = 0; a < v_a.size(); ++a) {
        g_v_a[a] += de * hidden[a];
        const double dh = de * v_a[a] * (1.0 - hidden[a] * hidden[a]);
        dquery[a] += dh;
        d_keys[i][a] += dh;
      }
    }
    outer_accumulate(g.dec.att.w_a, dquery, st.gru.h);
    affine_transposed_accumulate(dp.att.w_a, dquery, ds_prev);
    ds.swap(ds_prev);
  }

  // s_0 = tanh(W_init b_0)
  Vector dpre0(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) dpre0[i] = ds[i] * (1.0 - s0[i] * s0[i]);
  outer_accumulate(g.dec.w_init, dpre0, ann.backward_start);
  Vector d_start(ann.backward_start.size(), 0.0);
  affine_transposed_accumulate(dp.w_init, dpre0, d_start);

  for (std::size_t i = 0; i < n; ++i) {
    outer_accumulate(g.dec.att.u_a, d_keys[i], ann.h[i]);
    affine_transposed_accumulate(dp.att.u_a, d_keys[i], d_ann[i]);
  }
  encoder_backward(src, enc_tape, store.enc, d_ann, d_start, g.enc, g.src_emb);
  return loss;
}

// ---------------------------------------------------------------------------
// Data

Example make_example(const WordLattice& lat, std::span<const std::string> target, const Vocab& src,
                     const Vocab& tgt) {
  Example ex{prepare_source(lat, src), to_ids(tgt, target), {target.begin(), target.end()}};
  ex.target.push_back(kEos);
  return ex;
}

Dataset load_dataset(const std::string& lattice_path, const std::string& target_path,
                     const Vocab& src, const Vocab& tgt, const Hyperparams& hp, bool filter) {
  const auto lattices = read_lattice_file(lattice_path);
  const auto targets = read_token_file(target_path);
  if (lattices.size() != targets.size()) {
    throw LengthMismatchError(lattice_path + " holds " + std::to_string(lattices.size()) +
                              " lattices but " + target_path + " has " +
                              std::to_string(targets.size()) + " lines");
  }
  Dataset data;
  for (std::size_t i = 0; i < lattices.size(); ++i) {
    if (targets[i].empty()) {
      throw DataError(target_path + ":" + std::to_string(i + 1) + ": empty target sentence");
    }
    if (filter && (lattices[i].length() > hp.max_src_chars || targets[i].size() > hp.max_tgt_words)) {
      ++data.dropped;
      continue;
    }
    data.examples.push_back(make_example(lattices[i], targets[i], src, tgt));
  }
  return data;
}

std::vector<std::vector<std::string>> decode_examples(std::span<const Example> examples,
                                                      const ParameterStore& store, const Vocab& tgt,
                                                      std::size_t max_len, std::size_t beam,
                                                      bool length_norm) {
  std::vector<std::vector<std::string>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    const Annotations ann = encode_bidirectional(ex.source, store.src_emb, store.enc);
    const auto ids = beam <= 1 ? greedy_decode(ann, store.dec, max_len)
                               : beam_decode(ann, store.dec, max_len, beam, length_norm);
    out.push_back(to_tokens(tgt, ids));
  }
  return out;
}

double validation_accuracy(std::span<const Example> examples, const ParameterStore& store,
                           const Vocab& tgt, std::size_t max_len) {
  const auto hyps = decode_examples(examples, store, tgt, max_len);
  std::vector<std::vector<std::string>> refs;
  refs.reserve(examples.size());
  for (const auto& ex : examples) refs.push_back(ex.reference);
  return token_accuracy(hyps, refs);
}

// ---------------------------------------------------------------------------
// Training loop

std::string format_epoch_line(const EpochRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f val_acc %.6f", r.epoch, r.loss, r.val_acc);
  return buf;
}

TrainResult train(const TrainOptions& opts, std::span<const Example> train_set,
                  std::span<const Example> valid_set, const Vocab& src, const Vocab& tgt) {
  const Hyperparams& hp = opts.hp;
  hp.validate();
  if (train_set.empty()) throw EmptyCorpusError("no training examples");
  if (opts.cell == CellKind::gru) {
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      if (!train_set[i].source.lattice.is_chain()) {
        throw TopologyError("training example " + std::to_string(i + 1) +
                            " is not a chain; the gru encoder needs 1-best input");
      }
    }
  }
  const ModelConfig config{opts.cell, opts.compose, src.size(), tgt.size(), hp.embed_dim, hp.hidden};
  ParameterStore store = ParameterStore::initialized(config, hp.seed);
  ParameterStore grads = ParameterStore::zeros(config);
  RmspropState opt = RmspropState::zeros_like(store);
  Rng shuffle_rng(hp.seed ^ 0x9E3779B97F4A7C15ULL);
  const auto valid = valid_set.empty() ? train_set : valid_set;

  TrainResult result;
  result.best = store;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t since_best = 0;
  bool capped = false;
  for (std::size_t epoch = 1;; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size() && !capped; begin += hp.batch) {
      const std::size_t end = std::min(order.size(), begin + hp.batch);
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const Example& ex = train_set[order[i]];
        batch_loss += sequence_loss(ex.source, ex.target, store, &grads);
      }
      const double size = static_cast<double>(end - begin);
      grads.scale(1.0 / size);
      const auto spans = grads.spans();
      StepRecord rec;
      rec.grad_norm = global_norm_clip(spans, hp.clip);
      rec.clipped_norm = global_norm(spans);
      rmsprop_update(store, grads, opt, hp);
      rec.update = ++result.updates;
      rec.loss = batch_loss / size;
      epoch_loss += batch_loss;
      if (opts.on_step) opts.on_step(rec);
      if (hp.max_updates != 0 && result.updates >= hp.max_updates) capped = true;
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(order.size()),
                    validation_accuracy(valid, store, tgt, hp.max_tgt_words)};
    result.epochs.push_back(rec);
    if (opts.log) *opts.log << format_epoch_line(rec) << '\n' << std::flush;

    if (rec.val_acc > result.best_val_acc) {
      result.best_val_acc = rec.val_acc;
      result.best_epoch = epoch;
      result.best = store;
      since_best = 0;
      if (!opts.checkpoint_path.empty()) {
        Checkpoint ckpt{config, hp, store, std::nullopt, src.fingerprint(), tgt.fingerprint()};
        if (opts.save_optimizer) ckpt.optimizer = opt;
        save_checkpoint(opts.checkpoint_path, ckpt);
      }
    } else {
      ++since_best;
    }
    if (since_best >= hp.patience_epochs || capped ||
        (hp.max_epochs != 0 && epoch >= hp.max_epochs)) {
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checks

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

CellCheckInstance random_cell_instance(CellKind kind, ComposeMode mode, std::size_t dim,
                                       std::size_t k, std::uint64_t seed) {
  if (dim == 0 || dim > 8) throw DataError("grad_check dimension must be in 1..8");
  if (k == 0) throw DataError("grad_check needs at least one incoming edge");
  CellCheckInstance inst{kind, mode, LatticeCellParams::zeros(kind, mode, dim, dim), {}, {}, {}};
  Rng rng(seed);
  auto& c = inst.params.cell;
  for (Matrix* m : {&c.u, &c.u_r, &c.u_z, &c.w, &c.w_r, &c.w_z}) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m->rows() + m->cols()));
    for (double& v : m->values()) v = rng.uniform(-bound, bound);
  }
  for (auto* gate : {&inst.params.gate_input, &inst.params.gate_state}) {
    if (!*gate) continue;
    for (Matrix* m : {&(*gate)->b_g, &(*gate)->u_g}) {
      for (double& v : m->values()) v = rng.uniform(-1.0, 1.0);
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    Vector x(dim), h(dim);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    for (double& v : h) v = rng.uniform(-1.0, 1.0);
    inst.xs.push_back(std::move(x));
    inst.hs.push_back(std::move(h));
  }
  inst.upstream.resize(dim);
  for (double& v : inst.upstream) v = rng.uniform(-1.0, 1.0);
  return inst;
}

std::vector<Vector> analytic_cell_gradients(const CellCheckInstance& inst) {
  const std::size_t k = inst.xs.size();
  const std::size_t dim = inst.upstream.size();
  LatticeCellParams pgrad = LatticeCellParams::zeros(inst.kind, inst.mode, inst.params.cell.input_dim(),
                                                     inst.params.cell.hidden_dim());
  std::vector<Vector> dxs(k), dhs(k, Vector(dim, 0.0));
  if (inst.kind == CellKind::gru) {
    // k chained steps from hs[0]
    std::vector<StepTape> tapes(k);
    Vector h = inst.hs.front();
    for (std::size_t i = 0; i < k; ++i) {
      const StepInput in{inst.xs[i], h};
      h = cell_step(inst.kind, inst.mode, std::span(&in, 1), inst.params, &tapes[i]);
    }
    Vector upstream = inst.upstream;
    for (std::size_t i = k; i-- > 0;) {
      auto g = cell_backward(tapes[i], inst.params, upstream, pgrad);
      dxs[i] = std::move(g.dx[0]);
      upstream = std::move(g.dh_pre[0]);
    }
    dhs[0] = std::move(upstream);
  } else {
    std::vector<StepInput> inputs;
    for (std::size_t i = 0; i < k; ++i) inputs.push_back({inst.xs[i], inst.hs[i]});
    StepTape tape;
    cell_step(inst.kind, inst.mode, inputs, inst.params, &tape);
    auto g = cell_backward(tape, inst.params, inst.upstream, pgrad);
    dxs = std::move(g.dx);
    dhs = std::move(g.dh_pre);
  }
  CellCheckInstance shaped{inst.kind, inst.mode, std::move(pgrad), std::move(dxs), std::move(dhs), {}};
  std::vector<Vector> out;
  for (auto s : cell_check_entries(shaped)) out.emplace_back(s.begin(), s.end());
  return out;
}

namespace {

double max_relative_error(const std::vector<Vector>& analytic, const std::vector<Vector>& numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("gradient lists differ in length");
  double worst = 0.0;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    if (analytic[t].size() != numeric[t].size()) throw ShapeError("gradient shapes differ");
    for (std::size_t i = 0; i < analytic[t].size(); ++i) {
      worst = std::max(worst, relative_error(analytic[t][i], numeric[t][i]));
    }
  }
  return worst;
}

}  // namespace

double grad_check(CellKind kind, ComposeMode mode, std::size_t dim, std::size_t k,
                  std::uint64_t seed, OraclePrecision precision) {
  const CellCheckInstance inst = random_cell_instance(kind, mode, dim, k, seed);
  return max_relative_error(analytic_cell_gradients(inst), numeric_cell_gradients(inst, precision));
}

SequenceCheckInstance sequence_check_instance(CellKind kind, ComposeMode mode, std::size_t dim,
                                              std::uint64_t seed) {
  if (dim == 0 || dim > 8) throw DataError("grad_check dimension must be in 1..8");
  const CharSeq chars = U"abcd";
  std::vector<Tokenization> toks = {{"ab", "cd"}, {"a", "bcd"}, {"ab", "c", "d"}};
  if (kind == CellKind::gru) toks.resize(1);
  const WordLattice lat = build_lattice(chars, toks);
  std::vector<std::string> surfaces;
  for (const auto& e : lat.edges()) surfaces.push_back(e.surface);
  const Vocab src(surfaces);
  const Vocab tgt(std::vector<std::string>{"x", "y", "z"});
  SequenceCheckInstance inst{prepare_source(lat, src),
                             {tgt.lookup("x"), tgt.lookup("z"), kEos},
                             ParameterStore::initialized({kind, mode, src.size(), tgt.size(), dim, dim}, seed)};
  Rng rng(seed + 1);
  for (auto& t : inst.store.tensors()) {
    if (t.name.find(".gate_") == std::string::npos) continue;
    for (double& v : t.tensor->values()) v = rng.uniform(-1.0, 1.0);
  }
  return inst;
}

double sequence_grad_check(CellKind kind, ComposeMode mode, std::size_t dim, std::uint64_t seed,
                           OraclePrecision precision) {
  const SequenceCheckInstance inst = sequence_check_instance(kind, mode, dim, seed);
  ParameterStore grads = ParameterStore::zeros(inst.store.config);
  sequence_loss(inst.source, inst.target, inst.store, &grads);
  std::vector<Vector> analytic;
  for (auto s : grads.spans()) analytic.emplace_back(s.begin(), s.end());
  return max_relative_error(
      analytic, numeric_sequence_gradients(inst.source, inst.target, inst.store, precision));
}

}  // namespace latnmt

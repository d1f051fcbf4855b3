// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 5 to 7 take about five minutes on one core.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "latnmt/checkpoint.hpp"
#include "latnmt/encoder.hpp"
#include "latnmt/evaluation.hpp"
#include "latnmt/lattice.hpp"
#include "latnmt/toy_task.hpp"
#include "latnmt/training.hpp"
#include "support.hpp"

using namespace latnmt;
using namespace latnmt::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(const char* id, bool ok, const std::string& detail) {
  std::printf("criterion %s: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void info(const std::string& detail) {
  std::printf("    info: %s\n", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr CellKind kKinds[] = {CellKind::gru, CellKind::swl, CellKind::dwl};
constexpr ComposeMode kModes[] = {ComposeMode::pool, ComposeMode::gate};

// ---------------------------------------------------------------------------

void gradient_certification() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t count = 0;
  for (auto kind : kKinds) {
    for (auto mode : kModes) {
      for (std::size_t k = 1; k <= 3; ++k) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
          worst = std::max(worst, grad_check(kind, mode, 4, k, seed));
          ++count;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  report("1", worst <= 1e-6 && secs < 60.0,
         fmt("max relative error %.3e over %zu instances (d=e=4, h=1e-5), %.1f s", worst, count, secs));

  double worst64 = 0.0;
  for (auto kind : kKinds) {
    for (auto mode : kModes) {
      for (std::size_t k = 1; k <= 3; ++k) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
          worst64 = std::max(worst64, grad_check(kind, mode, 4, k, seed, OraclePrecision::binary64));
        }
      }
    }
  }
  info(fmt("the same differences evaluated in float64 give %.3e; the gap is float64 round-off "
           "in the finite differences, not in the analytic gradients",
           worst64));
}

// ---------------------------------------------------------------------------

LatticeCellParams random_cell_params(Rng& rng, CellKind kind, ComposeMode mode, const CellParams& cell) {
  auto p = LatticeCellParams::zeros(kind, mode, cell.input_dim(), cell.hidden_dim());
  p.cell = cell;
  if (p.gate_input) p.gate_input = ComposeParams{random_matrix(rng, 1, cell.input_dim()), random_matrix(rng, 1, 1)};
  if (p.gate_state) p.gate_state = ComposeParams{random_matrix(rng, 1, cell.hidden_dim()), random_matrix(rng, 1, 1)};
  return p;
}

void chain_collapse() {
  const auto t0 = Clock::now();
  Rng rng(2);
  bool ok = true;
  std::size_t compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    CharSeq chars = random_chars(rng, 1 + rng.below(20));
    auto lat = chain_from_tokenization(chars, random_tokenization(rng, chars));
    std::vector<std::string> words;
    for (const auto& e : lat.edges()) words.push_back(e.surface);
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    Vocab vocab(words);
    const std::size_t e = 1 + rng.below(6), d = 1 + rng.below(6);
    Matrix table = random_matrix(rng, vocab.size(), e);
    CellParams fwd{random_matrix(rng, d, d), random_matrix(rng, d, d), random_matrix(rng, d, d),
                   random_matrix(rng, d, e), random_matrix(rng, d, e), random_matrix(rng, d, e)};
    CellParams bwd{random_matrix(rng, d, d), random_matrix(rng, d, d), random_matrix(rng, d, d),
                   random_matrix(rng, d, e), random_matrix(rng, d, e), random_matrix(rng, d, e)};
    auto src = prepare_source(lat, vocab);
    EncoderParams base{CellKind::gru, ComposeMode::pool, random_cell_params(rng, CellKind::gru, ComposeMode::pool, fwd),
                       random_cell_params(rng, CellKind::gru, ComposeMode::pool, bwd)};
    const auto ref = encode_bidirectional(src, table, base);
    for (auto kind : kKinds) {
      for (auto mode : kModes) {
        EncoderParams ep{kind, mode, random_cell_params(rng, kind, mode, fwd), random_cell_params(rng, kind, mode, bwd)};
        const auto ann = encode_bidirectional(src, table, ep);
        ok = ok && ann.size() == ref.size() && bitwise_equal(ann.backward_start, ref.backward_start);
        for (std::size_t i = 0; ok && i < ann.size(); ++i) ok = bitwise_equal(ann.h[i], ref.h[i]);
        ++compared;

        // Step level: K=1 swl and dwl against gru_step.
        auto x = random_vector(rng, e), h = random_vector(rng, d);
        StepInput in{x, h};
        const auto g = gru_step(x, h, ep.fwd.cell);
        if (kind == CellKind::swl) ok = ok && bitwise_equal(swl_gru_step(std::span(&in, 1), ep.fwd, mode), g);
        if (kind == CellKind::dwl) ok = ok && bitwise_equal(dwl_gru_step(std::span(&in, 1), ep.fwd, mode), g);
      }
    }
  }
  report("2", ok, fmt("%zu chain encodings (200 lattices, lengths 1-20) bitwise equal to gru, %.1f s",
                      compared, seconds_since(t0)));
}

// ---------------------------------------------------------------------------

void composition_identities() {
  Rng rng(3);
  double worst_sum = 0.0, worst_perm = 0.0;
  bool hull = true, pool_max = true, pool_perm = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.below(6), d = 1 + rng.below(8);
    std::vector<Vector> vs;
    for (std::size_t i = 0; i < k; ++i) vs.push_back(random_vector(rng, d, -5, 5));
    ComposeParams p{random_matrix(rng, 1, d, 3.0), random_matrix(rng, 1, 1, 3.0)};
    const auto gate = compose_gate(vs, p);
    const auto pool = compose_pool(vs);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(gate.weights.begin(), gate.weights.end(), 0.0) - 1.0));
    for (std::size_t c = 0; c < d; ++c) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& v : vs) lo = std::min(lo, v[c]), hi = std::max(hi, v[c]);
      hull = hull && gate.output[c] >= lo && gate.output[c] <= hi;
      pool_max = pool_max && pool[c] == hi;
    }
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<Vector> permuted;
    for (std::size_t i : perm) permuted.push_back(vs[i]);
    pool_perm = pool_perm && compose_pool(permuted) == pool;
    const auto pg = compose_gate(permuted, p);
    worst_perm = std::max(worst_perm, max_abs_diff(pg.output, gate.output));
    for (std::size_t i = 0; i < k; ++i) worst_perm = std::max(worst_perm, std::abs(pg.weights[i] - gate.weights[perm[i]]));
  }
  report("3", worst_sum <= 1e-12 && hull && pool_max && pool_perm && worst_perm <= 1e-12,
         fmt("1000 instances: |sum w - 1| <= %.1e, hull %s, pool == max %s, permutation drift %.1e",
             worst_sum, hull ? "ok" : "violated", pool_max ? "ok" : "violated", worst_perm));
}

// ---------------------------------------------------------------------------

void lattice_merge() {
  using Span = std::pair<std::size_t, std::size_t>;
  auto spans = [](const WordLattice& lat) {
    std::vector<Span> out;
    for (const auto& e : lat.edges()) out.emplace_back(e.start, e.end);
    std::sort(out.begin(), out.end());
    return out;
  };
  const std::vector<Tokenization> three = {{"ab", "cd"}, {"a", "bcd"}, {"ab", "c", "d"}};
  const auto abcd = build_lattice(U"abcd", three);
  const bool six = spans(abcd) == std::vector<Span>{{0, 1}, {0, 2}, {1, 4}, {2, 3}, {2, 4}, {3, 4}};

  const std::vector<Tokenization> shared = {{"abc", "d"}, {"abc", "d"}, {"a", "bc", "d"}};
  const auto v3 = build_lattice(U"abcd", shared);
  const auto in3 = incoming_edges(v3, 3);
  const bool merged = in3.size() == 2 && in3[0] == LatticeEdge{0, 3, "abc"} && in3[1] == LatticeEdge{1, 3, "bc"} &&
                      v3.edges().size() == 4;

  Rng rng(4);
  std::vector<WordLattice> lats;
  for (int i = 0; i < 1000; ++i) lats.push_back(random_lattice(rng, 1, 16).lattice);
  std::ostringstream out;
  write_lattices(out, lats);
  std::istringstream in(out.str());
  const auto back = read_lattices(in);
  std::ostringstream again;
  write_lattices(again, back);
  const bool round_trip = back == lats && again.str() == out.str();
  report("4", six && merged && round_trip,
         fmt("abcd edges %s, shared e_{0:3} with e_{1:3} at v_3 %s, 1000-lattice round trip %s",
             six ? "ok" : "wrong", merged ? "ok" : "wrong", round_trip ? "byte-exact" : "differs"));
}

// ---------------------------------------------------------------------------

struct ToyData {
  ToyCorpus corpus;
  Vocab src, tgt;
};

std::vector<Example> examples(const std::vector<ToySentence>& sents, const ToyData& data, int chain) {
  std::vector<Example> out;
  for (const auto& s : sents) {
    const auto lat = chain < 0 ? build_lattice(s.chars(), s.segmentations)
                               : chain_from_tokenization(s.chars(), s.segmentations[static_cast<std::size_t>(chain)]);
    out.push_back(make_example(lat, s.target, data.src, data.tgt));
  }
  return out;
}

ToyData toy_data() {
  ToyTaskSpec spec;
  spec.sentences = 2000;
  spec.noise = 0.3;
  spec.seed = 11;
  ToyData data{generate_toy(spec), Vocab(), Vocab()};
  // Source vocabulary over the edge surfaces of the training lattices, as the
  // build-vocab --from-lattices command produces it.
  std::vector<std::string> surfaces, words;
  for (const auto& s : data.corpus.train) {
    const auto lat = build_lattice(s.chars(), s.segmentations);
    for (const auto& e : lat.edges()) surfaces.push_back(e.surface);
    words.insert(words.end(), s.target.begin(), s.target.end());
  }
  data.src = build_vocab(surfaces, 50000);
  data.tgt = build_vocab(words, 50000);
  return data;
}

TrainOptions toy_options(CellKind cell, ComposeMode compose) {
  TrainOptions opts;
  opts.cell = cell;
  opts.compose = compose;
  opts.hp.embed_dim = 32;
  opts.hp.hidden = 32;
  opts.hp.batch = 16;
  opts.hp.lr = 5e-4;
  opts.hp.clip = 1.0;
  opts.hp.max_updates = 20000;
  opts.hp.seed = 1;
  return opts;
}

double test_accuracy(std::span<const Example> test, const ParameterStore& store, const Vocab& tgt) {
  const auto hyps = decode_examples(test, store, tgt, 50);
  std::vector<std::vector<std::string>> refs;
  for (const auto& ex : test) refs.push_back(ex.reference);
  return token_accuracy(hyps, refs);
}

struct LatticeRun {
  TrainResult result;
  std::string checkpoint;
  std::string log;
  double worst_clipped = 0.0;
  std::size_t steps = 0;
  double seconds = 0.0;
};

LatticeRun lattice_run(const ToyData& data, std::span<const Example> train_set,
                       std::span<const Example> valid_set, const TempDir& dir, const std::string& name) {
  LatticeRun run;
  auto opts = toy_options(CellKind::dwl, ComposeMode::gate);
  opts.checkpoint_path = dir / name;
  std::ostringstream log;
  opts.log = &log;
  opts.on_step = [&](const StepRecord& r) {
    run.worst_clipped = std::max(run.worst_clipped, r.clipped_norm);
    ++run.steps;
  };
  const auto t0 = Clock::now();
  run.result = train(opts, train_set, valid_set, data.src, data.tgt);
  run.seconds = seconds_since(t0);
  run.checkpoint = read_bytes(opts.checkpoint_path);
  run.log = log.str();
  return run;
}

void toy_experiment() {
  const auto t_all = Clock::now();
  TempDir dir;
  const auto data = toy_data();
  const auto train_lat = examples(data.corpus.train, data, -1);
  const auto valid_lat = examples(data.corpus.valid, data, -1);
  const auto test_lat = examples(data.corpus.test, data, -1);
  const auto test_oracle = examples(data.corpus.test, data, 0);
  const auto test_seg1 = examples(data.corpus.test, data, 1);
  std::printf("    toy corpus: %zu/%zu/%zu sentences, %zu source and %zu target vocabulary entries\n",
              train_lat.size(), valid_lat.size(), test_lat.size(), data.src.size(), data.tgt.size());

  // 5(a): dwl + gate on full lattices.
  const auto lat = lattice_run(data, train_lat, valid_lat, dir, "lattice.ckpt");
  const auto& best = lat.result;
  const std::size_t best_update = best.best_epoch * ((train_lat.size() + 15) / 16);
  report("5a", best.best_val_acc >= 0.95 && best_update <= 20000,
         fmt("dwl+gate validation token accuracy %.6f at epoch %zu (update %zu of %zu run), %.0f s",
             best.best_val_acc, best.best_epoch, best_update, best.updates, lat.seconds));

  const auto first = decode_examples(std::span(train_lat).first(1), best.best, data.tgt, 50);
  info(std::string("first training sentence decodes to its reference: ") +
       (first[0] == train_lat[0].reference ? "yes" : "no"));

  // 5(b): gru on the corrupted 1-best segmenter's chains.
  const auto train_seg1 = examples(data.corpus.train, data, 1);
  const auto valid_seg1 = examples(data.corpus.valid, data, 1);
  auto gru_opts = toy_options(CellKind::gru, ComposeMode::pool);
  const auto t_gru = Clock::now();
  const auto gru = train(gru_opts, train_seg1, valid_seg1, data.src, data.tgt);
  const double gru_secs = seconds_since(t_gru);
  const double acc_lat = test_accuracy(test_lat, best.best, data.tgt);
  const double acc_gru = test_accuracy(test_seg1, gru.best, data.tgt);
  report("5b", acc_gru < acc_lat,
         fmt("test accuracy: gru on segmenter-1 chains %.6f < lattice model %.6f (gru run %zu updates, %.0f s)",
             acc_gru, acc_lat, gru.updates, gru_secs));

  // 5(c): the lattice model decoding oracle-chain inputs.
  const double acc_oracle = test_accuracy(test_oracle, best.best, data.tgt);
  report("5c", acc_lat - acc_oracle >= 0.01,
         fmt("lattice-input accuracy %.6f minus oracle-chain accuracy %.6f = %+.6f (needs >= 0.01)",
             acc_lat, acc_oracle, acc_lat - acc_oracle));
  const double acc_seg1 = test_accuracy(test_seg1, best.best, data.tgt);
  info(fmt("the oracle chain is always a path of the lattice and carries no segmentation noise; "
           "on segmenter-1 chains the same model scores %.6f (%+.6f vs lattices)",
           acc_seg1, acc_seg1 - acc_lat));

  // 6: clipping on every step of the 5(a) run, the scalar Rmsprop recurrence,
  // and lr = 0.
  Hyperparams hp = toy_options(CellKind::dwl, ComposeMode::gate).hp;
  Vector theta{0.5}, n{0.0}, m{0.0};
  const double expected[] = {0.49499234356062966, 0.48838924709505455, 0.4770140686103327, 0.47315631258498486};
  double worst_traj = 0.0;
  std::size_t at = 0;
  for (std::size_t t = 1; t <= 100; ++t) {
    rmsprop_update(theta, Vector{std::cos(0.3 * static_cast<double>(t - 1)) + 0.2}, n, m, hp);
    if (t == 1 || t == 10 || t == 50 || t == 100) worst_traj = std::max(worst_traj, std::abs(theta[0] - expected[at++]));
  }
  worst_traj = std::max({worst_traj, std::abs(n[0] - 0.3301325484330674), std::abs(m[0] - 0.09464282813400945)});

  auto zero = toy_options(CellKind::dwl, ComposeMode::gate);
  zero.hp.lr = 0.0;
  zero.hp.max_epochs = 1;
  zero.checkpoint_path = dir / "lr0.ckpt";
  train(zero, std::span(train_lat).first(160), valid_lat, data.src, data.tgt);
  const ModelConfig cfg{CellKind::dwl, ComposeMode::gate, data.src.size(), data.tgt.size(), 32, 32};
  const std::string expected_bytes = serialize_checkpoint(
      {cfg, zero.hp, ParameterStore::initialized(cfg, zero.hp.seed), std::nullopt, data.src.fingerprint(),
       data.tgt.fingerprint()});
  const bool lr0 = read_bytes(zero.checkpoint_path) == expected_bytes;
  report("6", lat.worst_clipped <= 1.0 + 1e-12 && worst_traj <= 1e-12 && lr0,
         fmt("max post-clip norm %.15f over %zu steps; Rmsprop drift %.1e over 100 steps; lr=0 checkpoint %s",
             lat.worst_clipped, lat.steps, worst_traj, lr0 ? "bitwise unchanged" : "changed"));

  // 7: repeat 5(a).
  const auto again = lattice_run(data, train_lat, valid_lat, dir, "lattice2.ckpt");
  const bool same_ckpt = again.checkpoint == lat.checkpoint && !lat.checkpoint.empty();
  const bool same_log = again.log == lat.log && !lat.log.empty();
  report("7", same_ckpt && same_log,
         fmt("rerun checkpoint %s (%zu bytes), log %s (%zu lines)", same_ckpt ? "byte-identical" : "differs",
             lat.checkpoint.size(), same_log ? "identical" : "differs",
             static_cast<std::size_t>(std::count(lat.log.begin(), lat.log.end(), '\n'))));

  info(fmt("criteria 5-7 took %.0f s in total", seconds_since(t_all)));
}

}  // namespace

int main() {
  gradient_certification();
  chain_collapse();
  composition_identities();
  lattice_merge();
  toy_experiment();
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTED" : "NOT ACCEPTED", failures);
  return failures == 0 ? 0 : 1;
}

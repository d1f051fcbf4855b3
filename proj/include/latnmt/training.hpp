// SPDX-License-Identifier: Apache-2.0
//
// Teacher-forced cross-entropy with hand-written reverse passes, Rmsprop,
// global-norm clipping, the epoch loop with early stopping on validation
// token accuracy, and finite-difference gradient checks.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latnmt/cells.hpp"
#include "latnmt/encoder.hpp"
#include "latnmt/grad_reference.hpp"
#include "latnmt/model.hpp"
#include "latnmt/vocab.hpp"

namespace latnmt {

struct Hyperparams {
  std::size_t embed_dim = 320;
  std::size_t hidden = 512;
  double lr = 5e-4;
  std::size_t batch = 80;
  double clip = 1.0;
  double rmsprop_rho = 0.99;
  double rmsprop_eps = 1e-4;
  double rmsprop_momentum = 0.0;
  std::size_t max_src_chars = 70;
  std::size_t max_tgt_words = 50;
  std::size_t patience_epochs = 5;
  std::uint64_t seed = 1;
  std::size_t max_updates = 0;  // 0: no cap
  std::size_t max_epochs = 0;   // 0: no cap

  /// Throws DataError naming the first invalid field.
  void validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// First and second moment running averages per parameter entry.
struct RmspropState {
  ParameterStore n;
  ParameterStore m;
  std::uint64_t step = 0;

  static RmspropState zeros_like(const ParameterStore& store);
};

/// n <- rho n + (1-rho) g^2;  m <- rho m + (1-rho) g;
/// theta <- theta - lr g / sqrt(n - m^2 + eps).
/// Throws ShapeError when the stores disagree.
void rmsprop_update(ParameterStore& store, const ParameterStore& grads, RmspropState& state,
                    const Hyperparams& hp);

/// Same update on raw spans; used by the store version and by scalar tests.
void rmsprop_update(std::span<double> params, std::span<const double> grads, std::span<double> n,
                    std::span<double> m, const Hyperparams& hp);

/// -sum_j log p(y_j | y_<j, x) under teacher forcing. When `grads` is given,
/// the exact gradient is added to it. `target` must be non-empty and end with EOS.
double sequence_loss(const SourceInstance& src, std::span<const TokenId> target,
                     const ParameterStore& store, ParameterStore* grads = nullptr);

struct Example {
  SourceInstance source;
  std::vector<TokenId> target;  // ends with EOS
  std::vector<std::string> reference;
};

struct Dataset {
  std::vector<Example> examples;
  std::size_t dropped = 0;  // pairs removed by length filtering
};

/// Reads a lattice file and a parallel target file (one sentence per line).
/// Pairs longer than the limits are dropped when `filter` is set.
Dataset load_dataset(const std::string& lattice_path, const std::string& target_path,
                     const Vocab& src, const Vocab& tgt, const Hyperparams& hp, bool filter);

Example make_example(const WordLattice& lat, std::span<const std::string> target, const Vocab& src,
                     const Vocab& tgt);

std::vector<std::vector<std::string>> decode_examples(std::span<const Example> examples,
                                                      const ParameterStore& store, const Vocab& tgt,
                                                      std::size_t max_len, std::size_t beam = 1,
                                                      bool length_norm = true);

/// Corpus token accuracy of greedy outputs against the references.
double validation_accuracy(std::span<const Example> examples, const ParameterStore& store,
                           const Vocab& tgt, std::size_t max_len);

struct StepRecord {
  std::size_t update = 0;
  double loss = 0.0;          // mean over the batch
  double grad_norm = 0.0;     // before clipping
  double clipped_norm = 0.0;  // after clipping
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_acc = 0.0;
};

/// "epoch <k> loss <float> val_acc <float>"
std::string format_epoch_line(const EpochRecord& r);

struct TrainOptions {
  Hyperparams hp;
  CellKind cell = CellKind::dwl;
  ComposeMode compose = ComposeMode::gate;
  std::string checkpoint_path;  // best checkpoint; empty: keep in memory only
  bool save_optimizer = false;
  std::ostream* log = nullptr;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  ParameterStore best;
  double best_val_acc = -1.0;
  std::size_t best_epoch = 0;
  std::size_t updates = 0;
  std::vector<EpochRecord> epochs;
};

/// Mean-of-batch gradients, clipped to hp.clip, Rmsprop updates; validation
/// after every epoch, stopping after hp.patience_epochs without improvement.
TrainResult train(const TrainOptions& opts, std::span<const Example> train_set,
                  std::span<const Example> valid_set, const Vocab& src, const Vocab& tgt);

// ---------------------------------------------------------------------------
// Gradient checks.

/// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

/// Random instance for the cell check. Draw order from Rng(seed): the six
/// cell matrices by name (Glorot bounds), gate parameters b then u for the
/// input and state gates (uniform [-1, 1]), then x_k and h_k for each k, then
/// the upstream vector (all uniform [-1, 1]). Requires 1 <= dim <= 8, k >= 1.
CellCheckInstance random_cell_instance(CellKind kind, ComposeMode mode, std::size_t dim,
                                       std::size_t k, std::uint64_t seed);

/// cell_backward results in the entry order of cell_check_entries.
std::vector<Vector> analytic_cell_gradients(const CellCheckInstance& inst);

/// Max relative error between cell_backward and central differences over
/// every input and parameter entry of a random instance. For the plain GRU,
/// k > 1 means k chained steps.
double grad_check(CellKind kind, ComposeMode mode, std::size_t dim, std::size_t k,
                  std::uint64_t seed, OraclePrecision precision = OraclePrecision::binary128);

struct SequenceCheckInstance {
  SourceInstance source;
  std::vector<TokenId> target;
  ParameterStore store;
};

/// The "abcd" lattice merged from [ab cd], [a bcd], [ab c d] (only the first
/// for gru), target "x z </s>", a store initialized from `seed` with gate
/// parameters drawn uniform [-1, 1] from Rng(seed + 1).
SequenceCheckInstance sequence_check_instance(CellKind kind, ComposeMode mode, std::size_t dim,
                                              std::uint64_t seed);

/// The same comparison for sequence_loss over every tensor of the store.
double sequence_grad_check(CellKind kind, ComposeMode mode, std::size_t dim, std::uint64_t seed,
                           OraclePrecision precision = OraclePrecision::binary128);

}  // namespace latnmt

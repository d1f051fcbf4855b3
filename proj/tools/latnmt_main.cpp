// SPDX-License-Identifier: Apache-2.0
//
// latnmt: lattice construction, vocabularies, the toy task, training,
// decoding, gradient checks and evaluation.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error
// (including a failed gradient check).
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "latnmt/checkpoint.hpp"
#include "latnmt/errors.hpp"
#include "latnmt/evaluation.hpp"
#include "latnmt/lattice.hpp"
#include "latnmt/toy_task.hpp"
#include "latnmt/training.hpp"
#include "latnmt/utf8.hpp"
#include "latnmt/vocab.hpp"

namespace {

using namespace latnmt;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

void build_lattice_cmd(const std::string& segs, const std::string& out_path) {
  const auto files = split_list(segs);
  if (files.empty()) throw DataError("--segs needs at least one file");
  std::vector<std::vector<std::string>> contents;
  for (const auto& f : files) contents.push_back(read_lines(f));
  for (std::size_t k = 1; k < files.size(); ++k) {
    if (contents[k].size() != contents[0].size()) {
      throw LengthMismatchError(files[k] + " has " + std::to_string(contents[k].size()) +
                                " lines but " + files[0] + " has " +
                                std::to_string(contents[0].size()));
    }
  }
  std::vector<WordLattice> lats;
  lats.reserve(contents[0].size());
  for (std::size_t line = 0; line < contents[0].size(); ++line) {
    std::vector<Tokenization> toks;
    CharSeq chars;
    for (std::size_t k = 0; k < files.size(); ++k) {
      const std::string where = files[k] + ":" + std::to_string(line + 1);
      try {
        toks.push_back(split_tokens(contents[k][line]));
        if (toks.back().empty()) throw MismatchError("empty line");
        CharSeq spelled;
        for (const auto& t : toks.back()) spelled += utf8::decode(t);
        if (k == 0) {
          chars = spelled;
        } else if (spelled != chars) {
          throw MismatchError("tokens do not spell the characters of " + files[0]);
        }
      } catch (const DataError& e) {
        throw MismatchError(where + ": " + e.what());
      }
    }
    lats.push_back(build_lattice(chars, toks));
  }
  write_lattice_file(out_path, lats);
}

void build_vocab_cmd(const std::string& input, std::size_t size, bool from_lattices,
                     const std::string& out_path) {
  std::vector<std::string> stream;
  if (from_lattices) {
    for (const auto& lat : read_lattice_file(input)) {
      for (const auto& e : lat.edges()) stream.push_back(e.surface);
    }
  } else {
    const auto lines = read_lines(input);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::istringstream ss(lines[i]);
      std::string tok;
      while (ss >> tok) stream.push_back(tok);
    }
  }
  build_vocab(stream, size).save(out_path);
}

struct TrainArgs {
  std::string lattices, targets, val_lattices, val_targets, src_vocab, tgt_vocab, out, log;
  std::string cell = "dwl", compose = "gate";
  bool save_optimizer = false;
};

void train_cmd(const TrainArgs& a, const Hyperparams& hp) {
  hp.validate();
  const Vocab src = Vocab::load(a.src_vocab);
  const Vocab tgt = Vocab::load(a.tgt_vocab);
  Dataset train_set = load_dataset(a.lattices, a.targets, src, tgt, hp, true);
  std::cerr << "train: " << train_set.examples.size() << " pairs, " << train_set.dropped
            << " dropped by length\n";
  Dataset valid_set;
  if (!a.val_lattices.empty()) {
    valid_set = load_dataset(a.val_lattices, a.val_targets, src, tgt, hp, false);
  }
  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!a.log.empty()) {
    log_file.open(a.log, std::ios::binary | std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + a.log);
    log = &log_file;
  }
  TrainOptions opts;
  opts.hp = hp;
  opts.cell = parse_cell_kind(a.cell);
  opts.compose = parse_compose_mode(a.compose);
  opts.checkpoint_path = a.out;
  opts.save_optimizer = a.save_optimizer;
  opts.log = log;
  const TrainResult r = train(opts, train_set.examples, valid_set.examples, src, tgt);
  std::cerr << "best epoch " << r.best_epoch << " val_acc " << r.best_val_acc << " after "
            << r.updates << " updates\n";
}

void decode_cmd(const std::string& model, const std::string& lattices, const std::string& src_vocab,
                const std::string& tgt_vocab, std::size_t beam, std::size_t max_len,
                bool length_norm, const std::string& out_path) {
  if (beam == 0) throw DataError("--beam must be at least 1");
  if (max_len == 0) throw DataError("--max-len must be at least 1");
  const Vocab src = Vocab::load(src_vocab);
  const Vocab tgt = Vocab::load(tgt_vocab);
  const Checkpoint ckpt = load_checkpoint(model, &src, &tgt);
  std::vector<Example> examples;
  for (const auto& lat : read_lattice_file(lattices)) {
    if (ckpt.config.cell == CellKind::gru && !lat.is_chain()) {
      throw TopologyError("the gru model can only decode chain lattices");
    }
    examples.push_back({prepare_source(lat, src), {}, {}});
  }
  const auto hyps = decode_examples(examples, ckpt.params, tgt, max_len, beam, length_norm);
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_path);
  for (const auto& h : hyps) {
    for (std::size_t i = 0; i < h.size(); ++i) out << (i ? " " : "") << h[i];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + out_path);
}

int grad_check_cmd(const std::string& cell, const std::string& compose, std::size_t dim,
                   std::size_t k, std::uint64_t seed, bool sequence, int oracle_bits) {
  const CellKind kind = parse_cell_kind(cell);
  const ComposeMode mode = parse_compose_mode(compose);
  const OraclePrecision prec =
      oracle_bits == 64 ? OraclePrecision::binary64 : OraclePrecision::binary128;
  const double err = sequence ? sequence_grad_check(kind, mode, dim, seed, prec)
                              : grad_check(kind, mode, dim, k, seed, prec);
  std::printf("%.6e\n", err);
  return err <= 1e-6 ? kExitOk : kExitInternal;
}

int run(int argc, char** argv) {
  CLI::App app{"Lattice-to-sequence translation toolkit"};
  app.require_subcommand(1);

  std::string segs, out;
  auto* bl = app.add_subcommand("build-lattice", "Merge segmenter outputs into word lattices");
  bl->add_option("--segs", segs, "Comma-separated tokenized files")->required();
  bl->add_option("--out", out, "Output lattice file")->required();

  std::string input;
  std::size_t vocab_size = 50000;
  bool from_lattices = false;
  auto* bv = app.add_subcommand("build-vocab", "Frequency-ranked vocabulary");
  bv->add_option("--input", input, "Whitespace-tokenized text, or a lattice file")->required();
  bv->add_option("--size", vocab_size, "Size including the three reserved tokens")->capture_default_str();
  bv->add_flag("--from-lattices", from_lattices, "Count edge surfaces of a lattice file");
  bv->add_option("--out", out, "Output vocabulary file")->required();

  ToyTaskSpec toy;
  auto* gt = app.add_subcommand("gen-toy", "Generate the synthetic ambiguous-segmentation task");
  gt->add_option("--out", out, "Output directory")->required();
  gt->add_option("--sentences", toy.sentences, "Number of sentences")->capture_default_str();
  gt->add_option("--noise", toy.noise, "Per-word segmenter perturbation probability")->capture_default_str();
  gt->add_option("--seed", toy.seed, "Random seed")->capture_default_str();
  gt->add_option("--alphabet", toy.alphabet_size, "Alphabet size")->capture_default_str();
  gt->add_option("--words", toy.word_count, "Word inventory size")->capture_default_str();

  TrainArgs ta;
  Hyperparams hp;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--lattices", ta.lattices, "Training lattice file")->required();
  tr->add_option("--targets", ta.targets, "Training target file")->required();
  tr->add_option("--val-lattices", ta.val_lattices, "Validation lattice file");
  tr->add_option("--val-targets", ta.val_targets, "Validation target file");
  tr->add_option("--src-vocab", ta.src_vocab, "Source vocabulary")->required();
  tr->add_option("--tgt-vocab", ta.tgt_vocab, "Target vocabulary")->required();
  tr->add_option("--cell", ta.cell, "gru, swl or dwl")->capture_default_str()
      ->check(CLI::IsMember({"gru", "swl", "dwl"}));
  tr->add_option("--compose", ta.compose, "pool or gate")->capture_default_str()
      ->check(CLI::IsMember({"pool", "gate"}));
  tr->add_option("--embed-dim", hp.embed_dim, "Embedding size")->capture_default_str();
  tr->add_option("--hidden", hp.hidden, "Hidden size")->capture_default_str();
  tr->add_option("--lr", hp.lr, "Learning rate")->capture_default_str();
  tr->add_option("--batch", hp.batch, "Sentences per update")->capture_default_str();
  tr->add_option("--clip", hp.clip, "Global gradient norm bound")->capture_default_str();
  tr->add_option("--rho", hp.rmsprop_rho, "Rmsprop decay")->capture_default_str();
  tr->add_option("--eps", hp.rmsprop_eps, "Rmsprop epsilon")->capture_default_str();
  tr->add_option("--patience", hp.patience_epochs, "Epochs without improvement")->capture_default_str();
  tr->add_option("--max-src-chars", hp.max_src_chars, "Source length filter")->capture_default_str();
  tr->add_option("--max-tgt-words", hp.max_tgt_words, "Target length filter")->capture_default_str();
  tr->add_option("--max-updates", hp.max_updates, "Update cap (0: none)")->capture_default_str();
  tr->add_option("--max-epochs", hp.max_epochs, "Epoch cap (0: none)")->capture_default_str();
  tr->add_option("--seed", hp.seed, "Random seed")->capture_default_str();
  tr->add_option("--log", ta.log, "Epoch log file (default: stdout)");
  tr->add_flag("--save-optimizer", ta.save_optimizer, "Store Rmsprop state in the checkpoint");
  tr->add_option("--out", ta.out, "Best checkpoint path")->required();

  std::string model, lattices, src_vocab, tgt_vocab, length_norm = "on";
  std::size_t beam = 1, max_len = 50;
  auto* de = app.add_subcommand("decode", "Translate lattices");
  de->add_option("--model", model, "Checkpoint")->required();
  de->add_option("--lattices", lattices, "Lattice file")->required();
  de->add_option("--src-vocab", src_vocab, "Source vocabulary")->required();
  de->add_option("--tgt-vocab", tgt_vocab, "Target vocabulary")->required();
  de->add_option("--beam", beam, "Beam width (1: greedy)")->capture_default_str();
  de->add_option("--max-len", max_len, "Maximum output tokens")->capture_default_str();
  de->add_option("--length-norm", length_norm, "on or off")->capture_default_str()
      ->check(CLI::IsMember({"on", "off"}));
  de->add_option("--out", out, "Output file")->required();

  std::string gc_cell = "dwl", gc_compose = "gate";
  std::size_t gc_dim = 4, gc_k = 3;
  std::uint64_t gc_seed = 0;
  bool gc_sequence = false;
  int gc_oracle = 128;
  auto* gc = app.add_subcommand("grad-check", "Compare analytic and numeric gradients");
  gc->add_option("--cell", gc_cell, "gru, swl or dwl")->capture_default_str()
      ->check(CLI::IsMember({"gru", "swl", "dwl"}));
  gc->add_option("--compose", gc_compose, "pool or gate")->capture_default_str()
      ->check(CLI::IsMember({"pool", "gate"}));
  gc->add_option("--dim", gc_dim, "d = e")->capture_default_str();
  gc->add_option("--k", gc_k, "Incoming edges")->capture_default_str();
  gc->add_option("--seed", gc_seed, "Random seed")->capture_default_str();
  gc->add_flag("--sequence", gc_sequence, "Check the full sequence loss instead of one cell");
  gc->add_option("--oracle", gc_oracle, "Precision of the finite-difference reference: 64 or 128")
      ->capture_default_str()
      ->check(CLI::IsMember({64, 128}));

  std::string hyp, ref;
  auto* ev = app.add_subcommand("eval", "Token accuracy of hypotheses against references");
  ev->add_option("--hyp", hyp, "Hypothesis file")->required();
  ev->add_option("--ref", ref, "Reference file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (bl->parsed()) {
    build_lattice_cmd(segs, out);
  } else if (bv->parsed()) {
    build_vocab_cmd(input, vocab_size, from_lattices, out);
  } else if (gt->parsed()) {
    for (const auto& name : gen_toy(toy, out)) std::cout << name << '\n';
  } else if (tr->parsed()) {
    train_cmd(ta, hp);
  } else if (de->parsed()) {
    decode_cmd(model, lattices, src_vocab, tgt_vocab, beam, max_len, length_norm == "on", out);
  } else if (gc->parsed()) {
    return grad_check_cmd(gc_cell, gc_compose, gc_dim, gc_k, gc_seed, gc_sequence, gc_oracle);
  } else if (ev->parsed()) {
    std::printf("%.6f\n", evaluate_accuracy(hyp, ref));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const latnmt::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

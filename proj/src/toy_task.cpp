// SPDX-License-Identifier: Apache-2.0
#include "latnmt/toy_task.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "latnmt/errors.hpp"
#include "latnmt/numerics.hpp"
#include "latnmt/utf8.hpp"

namespace latnmt {

void ToyTaskSpec::validate() const {
  if (alphabet_size < 2) throw SpecError("alphabet_size must be at least 2");
  if (alphabet_size > 20000) throw SpecError("alphabet_size must be at most 20000");
  if (max_word_chars < 2) throw SpecError("max_word_chars must be at least 2");
  if (word_count < 3) throw SpecError("word_count must be at least 3");
  // Distinct strings of length 1..max_word_chars over the alphabet.
  double possible = 0.0, power = 1.0;
  for (std::size_t l = 1; l <= max_word_chars; ++l) {
    power *= static_cast<double>(alphabet_size);
    possible += power;
  }
  if (static_cast<double>(word_count) > possible / 2) {
    throw SpecError("word_count is too large for the alphabet and word length");
  }
  if (min_sentence_words == 0 || min_sentence_words > max_sentence_words) {
    throw SpecError("sentence word range is empty");
  }
  if (sentences < 10) throw SpecError("sentences must be at least 10");
  if (!(noise >= 0.0 && noise <= 1.0)) throw SpecError("noise must lie in [0, 1]");
}

CharSeq ToySentence::chars() const {
  CharSeq out;
  for (const auto& w : segmentations.front()) out += utf8::decode(w);
  return out;
}

char32_t toy_char(std::size_t i) { return static_cast<char32_t>(0x4E00 + i); }

std::vector<ToyWord> toy_inventory(const ToyTaskSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<ToyWord> words;
  std::set<CharSeq> seen;
  auto add = [&](const CharSeq& s) {
    if (!seen.insert(s).second) return;
    words.push_back({utf8::encode(s), "y" + std::to_string(words.size())});
  };
  add(CharSeq{toy_char(0)});
  add(CharSeq{toy_char(1)});
  add(CharSeq{toy_char(0), toy_char(1)});
  while (words.size() < spec.word_count) {
    const std::size_t len = 1 + rng.below(spec.max_word_chars);
    CharSeq s;
    for (std::size_t i = 0; i < len; ++i) s += toy_char(rng.below(spec.alphabet_size));
    add(s);
  }
  return words;
}

Tokenization perturb_segmentation(const Tokenization& words, double noise, Rng& rng) {
  Tokenization out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const CharSeq w = utf8::decode(words[i]);
    const bool can_split = w.size() >= 2;
    const bool can_merge = i + 1 < words.size();
    if (!rng.bernoulli(noise) || (!can_split && !can_merge)) {
      out.push_back(words[i]);
      continue;
    }
    const bool split = can_split && (!can_merge || rng.bernoulli(0.5));
    if (split) {
      const std::size_t at = 1 + rng.below(w.size() - 1);
      out.push_back(utf8::encode(w.substr(0, at)));
      out.push_back(utf8::encode(w.substr(at)));
    } else {
      out.push_back(words[i] + words[i + 1]);
      ++i;
    }
  }
  return out;
}

ToyCorpus generate_toy(const ToyTaskSpec& spec) {
  ToyCorpus corpus;
  corpus.inventory = toy_inventory(spec);
  // A separate stream for sentences keeps the inventory stable when only the
  // corpus size changes.
  Rng rng(spec.seed ^ 0x5DEECE66DULL);
  std::vector<ToySentence> all;
  all.reserve(spec.sentences);
  const std::size_t span = spec.max_sentence_words - spec.min_sentence_words + 1;
  for (std::size_t n = 0; n < spec.sentences; ++n) {
    const std::size_t len = spec.min_sentence_words + rng.below(span);
    ToySentence s;
    Tokenization oracle;
    for (std::size_t i = 0; i < len; ++i) {
      const auto& w = corpus.inventory[rng.below(corpus.inventory.size())];
      oracle.push_back(w.surface);
      s.target.push_back(w.target);
    }
    s.segmentations.push_back(oracle);
    s.segmentations.push_back(perturb_segmentation(oracle, spec.noise, rng));
    s.segmentations.push_back(perturb_segmentation(oracle, spec.noise, rng));
    all.push_back(std::move(s));
  }
  const std::size_t n_train = spec.sentences * 8 / 10;
  const std::size_t n_valid = spec.sentences / 10;
  corpus.train.assign(all.begin(), all.begin() + n_train);
  corpus.valid.assign(all.begin() + n_train, all.begin() + n_train + n_valid);
  corpus.test.assign(all.begin() + n_train + n_valid, all.end());
  return corpus;
}

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::vector<std::string> write_toy(const ToyCorpus& corpus, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());
  std::vector<std::string> names;
  auto emit = [&](const std::string& name, const std::vector<std::string>& lines) {
    write_lines(fs::path(out_dir) / name, lines);
    names.push_back(name);
  };
  std::vector<std::string> inv;
  for (const auto& w : corpus.inventory) inv.push_back(w.surface + '\t' + w.target);
  emit("inventory.txt", inv);
  const std::pair<const char*, const std::vector<ToySentence>*> splits[] = {
      {"train", &corpus.train}, {"valid", &corpus.valid}, {"test", &corpus.test}};
  for (const auto& [split, sentences] : splits) {
    std::vector<std::string> src, tgt, seg[3];
    for (const auto& s : *sentences) {
      src.push_back(utf8::encode(s.chars()));
      tgt.push_back(join(s.target));
      for (std::size_t k = 0; k < 3; ++k) seg[k].push_back(join(s.segmentations[k]));
    }
    const std::string base = split;
    emit(base + ".src", src);
    for (std::size_t k = 0; k < 3; ++k) emit(base + ".seg" + std::to_string(k), seg[k]);
    emit(base + ".tgt", tgt);
  }
  return names;
}

std::vector<std::string> gen_toy(const ToyTaskSpec& spec, const std::string& out_dir) {
  return write_toy(generate_toy(spec), out_dir);
}

}  // namespace latnmt

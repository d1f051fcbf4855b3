// SPDX-License-Identifier: Apache-2.0
//
// Synthetic translation task with ambiguous segmentation. Source sentences
// are character strings built from a word inventory; each word has a unique
// target token. Three segmenters are simulated: segmenter 0 returns the true
// words, segmenters 1 and 2 perturb each word with probability `noise` by
// splitting it at a random interior point or merging it with the next word.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latnmt/lattice.hpp"
#include "latnmt/numerics.hpp"

namespace latnmt {

struct ToyWord {
  std::string surface;  // UTF-8
  std::string target;
};

struct ToyTaskSpec {
  std::size_t alphabet_size = 24;
  std::size_t word_count = 32;
  std::size_t max_word_chars = 3;
  std::size_t min_sentence_words = 3;
  std::size_t max_sentence_words = 7;
  std::size_t sentences = 2000;
  double noise = 0.3;
  std::uint64_t seed = 11;

  /// Throws SpecError naming the first inconsistency.
  void validate() const;
};

struct ToySentence {
  std::vector<Tokenization> segmentations;  // oracle first
  std::vector<std::string> target;

  CharSeq chars() const;
};

struct ToyCorpus {
  std::vector<ToyWord> inventory;
  std::vector<ToySentence> train, valid, test;  // 80/10/10
};

/// Character i of the toy alphabet (CJK ideographs from U+4E00).
char32_t toy_char(std::size_t i);

/// Inventory of distinct words. The first three are "A", "B" and "AB", so
/// the string AB has two tokenizations with different translations.
std::vector<ToyWord> toy_inventory(const ToyTaskSpec& spec);

/// Applies the noise model to one tokenization.
Tokenization perturb_segmentation(const Tokenization& words, double noise, Rng& rng);

ToyCorpus generate_toy(const ToyTaskSpec& spec);

/// Writes <split>.src (characters), <split>.seg{0,1,2}, <split>.tgt for each
/// split plus inventory.txt ("surface<TAB>target"). Returns the file names.
std::vector<std::string> write_toy(const ToyCorpus& corpus, const std::string& out_dir);

/// generate_toy followed by write_toy.
std::vector<std::string> gen_toy(const ToyTaskSpec& spec, const std::string& out_dir);

}  // namespace latnmt

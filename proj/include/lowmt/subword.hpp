#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lowmt/textpipe.hpp"

namespace lowmt {

// Ordered list of learned merges. Learning appends a separate end-of-word
// symbol to every word so merges cannot leak across word boundaries; the
// symbol is removed again on segmentation output.
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;
  bool joint = false;  // learned on the concatenation of both corpus sides

  static const std::string kEndOfWord;        // "</w>"
  static const std::string kContinuation;     // "@@"
};

// Subword frequencies counted over the threshold-free segmentation of a
// training corpus. Keys carry the continuation marker, so a word-final unit
// and a word-internal unit with the same characters are distinct entries.
struct Vocabulary {
  std::map<std::string, uint64_t> freq;
  uint64_t threshold = 0;
};

struct SegmentedWord {
  std::vector<std::string> units;  // continuation marker on all non-final units
};

using WordFreq = std::map<std::string, uint64_t>;

WordFreq count_words(const ParallelCorpus& corpus, bool source_side, bool target_side);
WordFreq count_words(const std::vector<Tokens>& sentences);

// Greedy BPE merge learning over word types weighted by frequency. Stops
// after num_merges merges or when no pair reaches min_pair_freq occurrences.
// Ties between equally frequent pairs break lexicographically on
// (left, right), with the end-of-word symbol ordered after everything else.
BpeModel learn_bpe(const WordFreq& words, size_t num_merges, uint64_t min_pair_freq = 2);

// Threshold-free segmentation frequencies for every subword the model
// produces on this corpus.
Vocabulary build_vocab(const WordFreq& words, const BpeModel& model);

// Applies merges in learned order, then recursively undoes the final merge of
// any unit whose training frequency is below vocab.threshold until every unit
// meets the threshold or is a single character.
SegmentedWord apply_bpe(const BpeModel& model, const Vocabulary& vocab, const std::string& word);

ParallelCorpus segment_corpus(const BpeModel& model, const Vocabulary& src_vocab,
                              const Vocabulary& tgt_vocab, const ParallelCorpus& corpus);

struct VocabStats {
  size_t thresholded_types = 0;  // types meeting the threshold, plus character fallbacks
  size_t total_types = 0;
};

VocabStats vocab_stats(const Vocabulary& vocab);

// Rejoins a continuation-marked unit sequence into plain tokens.
Tokens join_subwords(const std::vector<std::string>& units);

// -- File formats ---------------------------------------------------------------

void save_bpe_model(const BpeModel& model, const std::string& path);
BpeModel load_bpe_model(const std::string& path);
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path, uint64_t threshold);

}  // namespace lowmt

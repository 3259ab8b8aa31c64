#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lowmt/rng.hpp"
#include "lowmt/textpipe.hpp"

namespace lowmt {

// Deterministic toy translation task: a bijective word mapping, adjacent-pair
// reordering, and a target suffix keyed on the next source word, so the
// mapping cannot be learned word-by-word alone.
struct SyntheticTaskSpec {
  int vocab_size = 200;
  int train_sentences = 500;
  int dev_sentences = 100;
  int test_sentences = 100;
  int min_len = 4;
  int max_len = 9;
  uint64_t seed = 7;
};

struct SyntheticData {
  RawCorpus train_src, train_tgt;
  RawCorpus dev_src, dev_tgt;
  RawCorpus test_src, test_tgt;
};

class SyntheticTask {
 public:
  explicit SyntheticTask(const SyntheticTaskSpec& spec);

  // Disjoint train/dev/test splits; bit-identical across calls.
  SyntheticData generate() const;

  // Applies the generating rules to a source line: the oracle decoder.
  std::string translate(const std::string& source_line) const;

  const SyntheticTaskSpec& spec() const { return spec_; }

 private:
  std::vector<std::string> sample_source_sentence(Rng& rng) const;
  std::string render(const std::vector<std::string>& words) const;
  std::vector<std::string> target_words(const std::vector<std::string>& source_words) const;

  SyntheticTaskSpec spec_;
  std::vector<std::string> src_vocab_;
  std::vector<std::string> tgt_vocab_;
  std::unordered_map<std::string, size_t> src_index_;
};

void save_synthetic_data(const SyntheticData& data, const std::string& dir);

}  // namespace lowmt

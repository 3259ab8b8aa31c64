#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lowmt {

using Tokens = std::vector<std::string>;

// One sentence per line, UTF-8, no embedded newlines.
struct RawCorpus {
  std::vector<std::string> lines;
};

struct SentencePair {
  Tokens source;
  Tokens target;
};

// Sentence-aligned tokenized corpus. Both sides always have equal length.
struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  std::string name;

  size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Most-frequent-casing model keyed on the lowercased form.
struct TruecaseModel {
  struct Entry {
    std::string best;
    uint64_t count = 0;
  };
  std::map<std::string, Entry> best_form;
};

// -- UTF-8 / character classes ------------------------------------------------

std::vector<char32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<char32_t>& cps);
std::string utf8_encode_one(char32_t cp);

bool is_space_cp(char32_t cp);
bool is_punct_cp(char32_t cp);
bool is_digit_cp(char32_t cp);
bool is_alpha_cp(char32_t cp);

// ASCII + Latin-1 case folding; other scripts pass through unchanged.
std::string lowercase_word(const std::string& w);
std::string uppercase_first(const std::string& w);

// -- Operations ---------------------------------------------------------------

// Rule-based tokenizer: splits on whitespace, peels leading/trailing
// punctuation into single-character tokens, and splits internal apostrophes so
// the apostrophe attaches to the suffix ("don't" -> "don", "'t").
Tokens tokenize(const std::string& text);

// Inverse of tokenize up to whitespace normalization: joins with spaces, then
// drops the space before closing punctuation and after opening brackets or
// quotes. Straight double quotes alternate open/close by parity.
std::string detokenize(const Tokens& tokens);

TruecaseModel learn_truecaser(const std::vector<Tokens>& corpus);
Tokens truecase(const TruecaseModel& model, const Tokens& tokens);
Tokens detruecase(const Tokens& tokens);

ParallelCorpus clean_parallel(const ParallelCorpus& corpus, size_t max_len);

// Repeated uniform halving: result[0] is the input, result[i+1] a random
// subset of result[i] with floor(|result[i]|/2) pairs, order preserved.
std::vector<ParallelCorpus> subsample_halving(const ParallelCorpus& corpus,
                                              size_t steps, uint64_t seed);

// -- Corpus IO ----------------------------------------------------------------

RawCorpus read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

ParallelCorpus zip_corpus(const RawCorpus& src, const RawCorpus& tgt,
                          const std::string& name);

std::string join_tokens(const Tokens& tokens);
Tokens split_tokens(const std::string& line);

void save_truecase_model(const TruecaseModel& model, const std::string& path);
TruecaseModel load_truecase_model(const std::string& path);

}  // namespace lowmt

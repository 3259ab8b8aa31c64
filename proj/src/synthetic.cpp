#include "lowmt/synthetic.hpp"

#include <filesystem>
#include <set>
#include <stdexcept>

#include "lowmt/rng.hpp"

namespace lowmt {

static std::string random_word(Rng& rng, char lo, char hi) {
  size_t len = 2 + rng.below(5);
  std::string word;
  for (size_t i = 0; i < len; ++i)
    word += static_cast<char>(lo + rng.below(static_cast<uint64_t>(hi - lo + 1)));
  return word;
}

static std::vector<std::string> distinct_words(Rng& rng, int count, char lo, char hi) {
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (static_cast<int>(words.size()) < count) {
    std::string w = random_word(rng, lo, hi);
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

SyntheticTask::SyntheticTask(const SyntheticTaskSpec& spec) : spec_(spec) {
  if (spec.vocab_size < 10) throw std::invalid_argument("synthetic vocab must be >= 10");
  if (spec.train_sentences < 1 || spec.dev_sentences < 1 || spec.test_sentences < 1)
    throw std::invalid_argument("synthetic split sizes must be >= 1");
  Rng rng(seed_stream(spec.seed, "synthetic vocab"));
  src_vocab_ = distinct_words(rng, spec.vocab_size, 'a', 'm');
  tgt_vocab_ = distinct_words(rng, spec.vocab_size, 'n', 'z');
  for (size_t i = 0; i < src_vocab_.size(); ++i) src_index_[src_vocab_[i]] = i;
}

std::vector<std::string> SyntheticTask::sample_source_sentence(Rng& rng) const {
  size_t len = spec_.min_len +
               rng.below(static_cast<uint64_t>(spec_.max_len - spec_.min_len + 1));
  std::vector<std::string> words(len);
  for (auto& w : words) {
    // Quadratic rank skew gives a realistic frequency profile.
    double u = rng.uniform();
    size_t rank = static_cast<size_t>(u * u * src_vocab_.size());
    if (rank >= src_vocab_.size()) rank = src_vocab_.size() - 1;
    w = src_vocab_[rank];
  }
  return words;
}

std::vector<std::string> SyntheticTask::target_words(
    const std::vector<std::string>& source_words) const {
  size_t n = source_words.size();
  std::vector<std::string> out(n);
  for (size_t i = 0; i < n; ++i) {
    auto it = src_index_.find(source_words[i]);
    if (it == src_index_.end())
      throw std::invalid_argument("word outside the synthetic vocabulary: " + source_words[i]);
    std::string t = tgt_vocab_[it->second];
    // Suffix keyed on the following source word: forces the model to read
    // context rather than map words one by one.
    if (i + 1 < n) t += source_words[i + 1][0] <= 'f' ? "na" : "no";
    out[i] = t;
  }
  // Local reordering: swap each adjacent pair.
  for (size_t i = 0; i + 1 < n; i += 2) std::swap(out[i], out[i + 1]);
  return out;
}

std::string SyntheticTask::render(const std::vector<std::string>& words) const {
  std::string line;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) line += ' ';
    line += words[i];
  }
  if (!line.empty()) line[0] = static_cast<char>(line[0] - 'a' + 'A');
  line += " .";
  return detokenize(split_tokens(line));
}

SyntheticData SyntheticTask::generate() const {
  Rng rng(seed_stream(spec_.seed, "synthetic sentences"));
  std::set<std::string> seen;
  SyntheticData data;
  struct Split {
    RawCorpus* src;
    RawCorpus* tgt;
    int count;
  };
  std::vector<Split> splits = {
      {&data.train_src, &data.train_tgt, spec_.train_sentences},
      {&data.dev_src, &data.dev_tgt, spec_.dev_sentences},
      {&data.test_src, &data.test_tgt, spec_.test_sentences},
  };
  for (auto& split : splits) {
    while (static_cast<int>(split.src->lines.size()) < split.count) {
      std::vector<std::string> words = sample_source_sentence(rng);
      std::string key;
      for (const auto& w : words) key += w + ' ';
      if (!seen.insert(key).second) continue;  // sentence-level disjoint splits
      split.src->lines.push_back(render(words));
      split.tgt->lines.push_back(render(target_words(words)));
    }
  }
  return data;
}

std::string SyntheticTask::translate(const std::string& source_line) const {
  Tokens toks = tokenize(source_line);
  std::vector<std::string> words;
  for (auto& tok : toks) {
    if (tok == ".") continue;
    words.push_back(lowercase_word(tok));
  }
  return render(target_words(words));
}

void save_synthetic_data(const SyntheticData& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_lines(dir + "/train.src", data.train_src.lines);
  write_lines(dir + "/train.tgt", data.train_tgt.lines);
  write_lines(dir + "/dev.src", data.dev_src.lines);
  write_lines(dir + "/dev.tgt", data.dev_tgt.lines);
  write_lines(dir + "/test.src", data.test_src.lines);
  write_lines(dir + "/test.tgt", data.test_tgt.lines);
}

}  // namespace lowmt

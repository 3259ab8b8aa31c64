#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "lowmt/rng.hpp"
#include "lowmt/subword.hpp"
#include "support/bpe_oracle.hpp"

using namespace lowmt;

static WordFreq wf(std::initializer_list<std::pair<std::string, uint64_t>> items) {
  WordFreq f;
  for (const auto& [w, c] : items) f[w] = c;
  return f;
}

TEST_CASE("learn_bpe greedy order on abab") {
  // With the default minimum pair frequency of 2 only the first merge fires.
  auto strict = learn_bpe(wf({{"abab", 1}}), 2);
  REQUIRE(strict.merges.size() == 1);
  CHECK(strict.merges[0] == std::make_pair(std::string("a"), std::string("b")));

  // Allowing singleton pairs exposes the full greedy order.
  auto model = learn_bpe(wf({{"abab", 1}}), 2, 1);
  REQUIRE(model.merges.size() == 2);
  CHECK(model.merges[0] == std::make_pair(std::string("a"), std::string("b")));
  CHECK(model.merges[1] == std::make_pair(std::string("ab"), std::string("ab")));
}

TEST_CASE("learn_bpe zero merges and empty corpus") {
  CHECK(learn_bpe(wf({{"abc", 5}}), 0).merges.empty());
  CHECK(learn_bpe(WordFreq{}, 10).merges.empty());
}

TEST_CASE("learn_bpe frequency-weighted pair choice") {
  auto model = learn_bpe(wf({{"ab", 3}, {"ba", 2}}), 1);
  REQUIRE(model.merges.size() == 1);
  CHECK(model.merges[0] == std::make_pair(std::string("a"), std::string("b")));
}

TEST_CASE("learn_bpe matches the brute-force oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    WordFreq words;
    int types = 3 + static_cast<int>(rng.below(12));
    for (int w = 0; w < types; ++w) {
      int len = 1 + static_cast<int>(rng.below(12));
      std::string word;
      for (int i = 0; i < len; ++i)
        word += static_cast<char>('a' + rng.below(1 + rng.below(20)));
      words[word] += 1 + rng.below(9);
    }
    size_t merges = rng.below(30);
    auto mine = learn_bpe(words, merges);
    auto ref = oracle::learn(words, merges);
    REQUIRE(mine.merges.size() == ref.size());
    for (size_t i = 0; i < ref.size(); ++i) CHECK(mine.merges[i] == ref[i]);
  }
}

TEST_CASE("build_vocab counts marker-decorated units") {
  BpeModel model;
  model.merges = {{"a", "b"}};

  auto v1 = build_vocab(wf({{"ab", 5}}), model);
  CHECK(v1.freq.at("ab") == 5);
  CHECK(v1.freq.size() == 1);

  auto v2 = build_vocab(wf({{"ab", 2}, {"ac", 1}}), model);
  CHECK(v2.freq.at("ab") == 2);
  CHECK(v2.freq.at("a@@") == 1);
  CHECK(v2.freq.at("c") == 1);

  CHECK(build_vocab(WordFreq{}, model).freq.empty());
}

TEST_CASE("apply_bpe thresholding") {
  BpeModel model;
  model.merges = {{"a", "b"}};

  Vocabulary rare;
  rare.freq = {{"ab", 1}};
  rare.threshold = 2;
  CHECK(apply_bpe(model, rare, "ab").units == std::vector<std::string>{"a@@", "b"});

  Vocabulary common;
  common.freq = {{"ab", 5}};
  common.threshold = 2;
  CHECK(apply_bpe(model, common, "ab").units == std::vector<std::string>{"ab"});

  Vocabulary off;
  off.freq = {{"ab", 1}};
  off.threshold = 0;
  CHECK(apply_bpe(model, off, "ab").units == std::vector<std::string>{"ab"});
}

TEST_CASE("apply_bpe splits unknown characters to singles") {
  BpeModel model;
  Vocabulary vocab;
  vocab.threshold = 10;
  auto seg = apply_bpe(model, vocab, "xyz");
  CHECK(seg.units == std::vector<std::string>{"x@@", "y@@", "z"});
}

static WordFreq random_words(Rng& rng, int alphabet, int max_len, int types) {
  WordFreq words;
  for (int w = 0; w < types; ++w) {
    int len = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_len)));
    std::string word;
    for (int i = 0; i < len; ++i)
      word += static_cast<char>('a' + rng.below(static_cast<uint64_t>(alphabet)));
    words[word] += 1 + rng.below(12);
  }
  return words;
}

TEST_CASE("threshold-0 segmentation equals the oracle on random corpora") {
  Rng rng(555);
  for (int trial = 0; trial < 100; ++trial) {
    int alphabet = 2 + static_cast<int>(rng.below(19));
    WordFreq words = random_words(rng, alphabet, 12, 4 + static_cast<int>(rng.below(10)));
    size_t num_merges = rng.below(25);
    auto model = learn_bpe(words, num_merges);
    auto ref_merges = oracle::learn(words, num_merges);
    Vocabulary vocab = build_vocab(words, model);
    vocab.threshold = 0;
    for (const auto& [word, f] : words) {
      auto mine = apply_bpe(model, vocab, word).units;
      auto ref = oracle::segment(ref_merges, word);
      CHECK_MESSAGE(mine == ref, "word ", word, " trial ", trial);
    }
  }
}

TEST_CASE("threshold soundness: surviving units are frequent or single characters") {
  Rng rng(808);
  for (int trial = 0; trial < 30; ++trial) {
    WordFreq words = random_words(rng, 6, 10, 12);
    auto model = learn_bpe(words, 20);
    Vocabulary vocab = build_vocab(words, model);
    vocab.threshold = 2 + rng.below(5);
    for (const auto& [word, f] : words) {
      for (const auto& unit : apply_bpe(model, vocab, word).units) {
        auto it = vocab.freq.find(unit);
        uint64_t freq = it == vocab.freq.end() ? 0 : it->second;
        std::string core = unit;
        if (core.size() >= 2 && core.substr(core.size() - 2) == "@@")
          core = core.substr(0, core.size() - 2);
        bool ok = freq >= vocab.threshold || utf8_decode(core).size() == 1;
        CHECK_MESSAGE(ok, "unit ", unit, " freq ", freq, " threshold ", vocab.threshold);
      }
    }
  }
}

TEST_CASE("reconstruction: stripping markers recovers the word") {
  Rng rng(99);
  WordFreq words = random_words(rng, 8, 12, 30);
  auto model = learn_bpe(words, 15);
  Vocabulary vocab = build_vocab(words, model);
  vocab.threshold = 3;
  for (const auto& [word, f] : words) {
    auto units = apply_bpe(model, vocab, word).units;
    std::string joined;
    for (const auto& u : units) {
      std::string core = u;
      if (core.size() >= 2 && core.substr(core.size() - 2) == "@@")
        core = core.substr(0, core.size() - 2);
      joined += core;
    }
    CHECK(joined == word);
  }
}

TEST_CASE("more merges never lengthen a training word's segmentation") {
  Rng rng(31);
  WordFreq words = random_words(rng, 5, 9, 15);
  Vocabulary off;
  off.threshold = 0;
  size_t prev_total = SIZE_MAX;
  for (size_t merges : {0, 2, 5, 10, 20, 40}) {
    auto model = learn_bpe(words, merges);
    size_t total = 0;
    for (const auto& [word, f] : words) total += apply_bpe(model, off, word).units.size();
    CHECK(total <= prev_total);
    prev_total = total;
  }
}

TEST_CASE("learn_bpe is deterministic") {
  Rng rng(4);
  WordFreq words = random_words(rng, 12, 10, 25);
  auto a = learn_bpe(words, 30);
  auto b = learn_bpe(words, 30);
  CHECK(a.merges == b.merges);
}

TEST_CASE("segment_corpus preserves alignment and round trips") {
  ParallelCorpus corpus;
  corpus.pairs = {{{"hello", "world"}, {"hallo", "welt"}},
                  {{"abba"}, {"baab", "ab"}}};
  WordFreq words = count_words(corpus, true, true);
  auto model = learn_bpe(words, 4);
  Vocabulary vocab = build_vocab(words, model);
  vocab.threshold = 0;
  auto seg = segment_corpus(model, vocab, vocab, corpus);
  REQUIRE(seg.size() == corpus.size());
  for (size_t i = 0; i < seg.size(); ++i) {
    CHECK(join_subwords(seg.pairs[i].source) == corpus.pairs[i].source);
    CHECK(join_subwords(seg.pairs[i].target) == corpus.pairs[i].target);
  }
  CHECK(segment_corpus(model, vocab, vocab, ParallelCorpus{}).empty());
}

TEST_CASE("zero merges give character segmentation") {
  BpeModel model;
  Vocabulary vocab;
  vocab.threshold = 0;
  CHECK(apply_bpe(model, vocab, "abc").units ==
        std::vector<std::string>{"a@@", "b@@", "c"});
}

TEST_CASE("vocab_stats counts thresholded types plus character fallbacks") {
  Vocabulary vocab;
  vocab.freq = {{"ab", 5}, {"a@@", 1}, {"c", 1}};
  vocab.threshold = 2;
  auto stats = vocab_stats(vocab);
  CHECK(stats.total_types == 3);
  CHECK(stats.thresholded_types == 3);  // "ab" by count, "a@@" and "c" as characters

  Vocabulary rare;
  rare.freq = {{"abc", 1}};
  rare.threshold = 2;
  CHECK(vocab_stats(rare).thresholded_types == 0);

  CHECK(vocab_stats(Vocabulary{}).thresholded_types == 0);
}

TEST_CASE("bpe model and vocabulary file round trips") {
  Rng rng(7);
  WordFreq words = random_words(rng, 9, 8, 20);
  auto model = learn_bpe(words, 12);
  model.joint = true;
  save_bpe_model(model, "bpe_roundtrip.tmp");
  auto loaded = load_bpe_model("bpe_roundtrip.tmp");
  CHECK(loaded.merges == model.merges);
  CHECK(loaded.joint == model.joint);
  std::remove("bpe_roundtrip.tmp");

  Vocabulary vocab = build_vocab(words, model);
  vocab.threshold = 4;
  save_vocab(vocab, "vocab_roundtrip.tmp");
  auto vloaded = load_vocab("vocab_roundtrip.tmp", 4);
  CHECK(vloaded.freq == vocab.freq);
  CHECK(vloaded.threshold == 4);
  std::remove("vocab_roundtrip.tmp");
}

TEST_CASE("malformed bpe model header is rejected") {
  {
    std::ofstream out("bad_model.tmp");
    out << "a b\n";
  }
  CHECK_THROWS(load_bpe_model("bad_model.tmp"));
  std::remove("bad_model.tmp");
}

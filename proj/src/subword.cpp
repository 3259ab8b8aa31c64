#include "lowmt/subword.hpp"

#include <algorithm>
#include <cassert>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace lowmt {

const std::string BpeModel::kEndOfWord = "</w>";
const std::string BpeModel::kContinuation = "@@";

WordFreq count_words(const std::vector<Tokens>& sentences) {
  WordFreq freq;
  for (const auto& sent : sentences)
    for (const auto& tok : sent) freq[tok]++;
  return freq;
}

WordFreq count_words(const ParallelCorpus& corpus, bool source_side, bool target_side) {
  WordFreq freq;
  for (const auto& pair : corpus.pairs) {
    if (source_side)
      for (const auto& tok : pair.source) freq[tok]++;
    if (target_side)
      for (const auto& tok : pair.target) freq[tok]++;
  }
  return freq;
}

// Splits a word into single-codepoint symbols plus the end-of-word symbol.
static std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> syms;
  for (char32_t cp : utf8_decode(word)) syms.push_back(utf8_encode_one(cp));
  syms.push_back(BpeModel::kEndOfWord);
  return syms;
}

// Symbol order for tie-breaking: lexicographic, end-of-word sorts last.
static bool symbol_less(const std::string& a, const std::string& b) {
  bool ea = a == BpeModel::kEndOfWord;
  bool eb = b == BpeModel::kEndOfWord;
  if (ea != eb) return eb;
  return a < b;
}

using SymbolPair = std::pair<std::string, std::string>;

static bool pair_less(const SymbolPair& a, const SymbolPair& b) {
  if (a.first != b.first) return symbol_less(a.first, b.first);
  return symbol_less(a.second, b.second);
}

namespace {

struct PairHash {
  size_t operator()(const SymbolPair& p) const {
    std::hash<std::string> h;
    return h(p.first) * 1000003u ^ h(p.second);
  }
};

// Pair occurrence counts (with within-word multiplicity) and the set of word
// ids containing each pair, maintained incrementally across merges.
struct PairIndex {
  std::unordered_map<SymbolPair, int64_t, PairHash> count;
  std::unordered_map<SymbolPair, std::set<size_t>, PairHash> where;

  void add_word(size_t word_id, const std::vector<std::string>& syms, int64_t freq) {
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      SymbolPair p{syms[i], syms[i + 1]};
      count[p] += freq;
      where[p].insert(word_id);
    }
  }

  void remove_word(size_t word_id, const std::vector<std::string>& syms, int64_t freq) {
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      SymbolPair p{syms[i], syms[i + 1]};
      auto it = count.find(p);
      it->second -= freq;
      if (it->second <= 0) {
        count.erase(it);
        where.erase(p);
      } else {
        auto wit = where.find(p);
        wit->second.erase(word_id);
      }
    }
  }
};

}  // namespace

// Replaces all left-to-right non-overlapping occurrences of (left, right).
static std::vector<std::string> merge_symbols(const std::vector<std::string>& syms,
                                              const std::string& left,
                                              const std::string& right) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  size_t i = 0;
  while (i < syms.size()) {
    if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
      out.push_back(left + right);
      i += 2;
    } else {
      out.push_back(syms[i]);
      i += 1;
    }
  }
  return out;
}

BpeModel learn_bpe(const WordFreq& words, size_t num_merges, uint64_t min_pair_freq) {
  BpeModel model;
  std::vector<std::vector<std::string>> segs;
  std::vector<int64_t> freqs;
  segs.reserve(words.size());
  for (const auto& [word, freq] : words) {
    if (word.empty()) continue;
    segs.push_back(word_symbols(word));
    freqs.push_back(static_cast<int64_t>(freq));
  }

  PairIndex index;
  for (size_t w = 0; w < segs.size(); ++w) index.add_word(w, segs[w], freqs[w]);

  for (size_t m = 0; m < num_merges; ++m) {
    const SymbolPair* best = nullptr;
    int64_t best_count = 0;
    for (const auto& [pair, c] : index.count) {
      if (c > best_count || (c == best_count && best && pair_less(pair, *best))) {
        best = &pair;
        best_count = c;
      }
    }
    if (!best || best_count < static_cast<int64_t>(min_pair_freq)) break;
    SymbolPair chosen = *best;
    model.merges.push_back(chosen);

    std::set<size_t> affected = index.where[chosen];
    for (size_t w : affected) {
      index.remove_word(w, segs[w], freqs[w]);
      segs[w] = merge_symbols(segs[w], chosen.first, chosen.second);
      index.add_word(w, segs[w], freqs[w]);
    }
  }
  return model;
}

namespace {

// Derivation node: a symbol plus the two children it was merged from.
struct DerivNode {
  std::string sym;
  int left = -1;
  int right = -1;
};

struct Derivation {
  std::vector<DerivNode> nodes;
  std::vector<int> active;  // current symbol sequence as node ids
};

}  // namespace

static Derivation derive_word(const BpeModel& model, const std::string& word) {
  Derivation d;
  for (const auto& sym : word_symbols(word)) {
    d.nodes.push_back({sym, -1, -1});
    d.active.push_back(static_cast<int>(d.nodes.size()) - 1);
  }
  for (const auto& [left, right] : model.merges) {
    std::vector<int> next;
    next.reserve(d.active.size());
    size_t i = 0;
    while (i < d.active.size()) {
      if (i + 1 < d.active.size() && d.nodes[d.active[i]].sym == left &&
          d.nodes[d.active[i + 1]].sym == right) {
        d.nodes.push_back({left + right, d.active[i], d.active[i + 1]});
        next.push_back(static_cast<int>(d.nodes.size()) - 1);
        i += 2;
      } else {
        next.push_back(d.active[i]);
        i += 1;
      }
    }
    d.active = std::move(next);
    if (d.active.size() == 1) break;
  }
  return d;
}

// Strips the end-of-word suffix if present; reports whether it was there.
static std::string strip_eow(const std::string& sym, bool* had_eow) {
  const std::string& eow = BpeModel::kEndOfWord;
  if (sym.size() >= eow.size() && sym.compare(sym.size() - eow.size(), eow.size(), eow) == 0) {
    if (had_eow) *had_eow = true;
    return sym.substr(0, sym.size() - eow.size());
  }
  if (had_eow) *had_eow = false;
  return sym;
}

// Number of codepoints in a symbol with the end-of-word suffix stripped.
static size_t symbol_length(const std::string& sym) {
  return utf8_decode(strip_eow(sym, nullptr)).size();
}

// Output form under the continuation-marker convention: "un@@" for non-final
// units, plain text for the final unit of a word.
static std::string decorated(const std::string& sym, bool final_unit) {
  std::string core = strip_eow(sym, nullptr);
  return final_unit ? core : core + BpeModel::kContinuation;
}

// Converts the active derivation sequence into decorated output units,
// dropping a bare end-of-word symbol.
static std::vector<std::string> decorated_units(const Derivation& d,
                                                const std::vector<int>& active) {
  std::vector<int> real;
  for (int id : active)
    if (d.nodes[id].sym != BpeModel::kEndOfWord) real.push_back(id);
  std::vector<std::string> out;
  out.reserve(real.size());
  for (size_t i = 0; i < real.size(); ++i)
    out.push_back(decorated(d.nodes[real[i]].sym, i + 1 == real.size()));
  return out;
}

Vocabulary build_vocab(const WordFreq& words, const BpeModel& model) {
  Vocabulary vocab;
  for (const auto& [word, freq] : words) {
    if (word.empty()) continue;
    Derivation d = derive_word(model, word);
    for (const auto& unit : decorated_units(d, d.active)) vocab.freq[unit] += freq;
  }
  return vocab;
}

// Expands node ids whose decorated form is rare into their merge children,
// recursively, bottoming out at single characters.
static void split_rare(const Derivation& d, int id, bool final_unit,
                       const Vocabulary& vocab, std::vector<int>& out) {
  const DerivNode& node = d.nodes[id];
  if (node.sym == BpeModel::kEndOfWord) {
    out.push_back(id);
    return;
  }
  // The final unit of the word is the one carrying no continuation marker;
  // only the last real symbol can be final, and splitting the final symbol
  // keeps its rightmost piece final.
  std::string form = decorated(node.sym, final_unit);
  auto it = vocab.freq.find(form);
  uint64_t freq = it == vocab.freq.end() ? 0 : it->second;
  if (freq >= vocab.threshold || node.left < 0 || symbol_length(node.sym) <= 1) {
    out.push_back(id);
    return;
  }
  // A bare end-of-word right child contributes no output unit, so the left
  // child stays the word-final one.
  bool right_is_bare_eow = d.nodes[node.right].sym == BpeModel::kEndOfWord;
  split_rare(d, node.left, final_unit && right_is_bare_eow, vocab, out);
  split_rare(d, node.right, final_unit, vocab, out);
}

SegmentedWord apply_bpe(const BpeModel& model, const Vocabulary& vocab,
                        const std::string& word) {
  SegmentedWord seg;
  if (word.empty()) return seg;
  Derivation d = derive_word(model, word);
  if (vocab.threshold == 0) {
    seg.units = decorated_units(d, d.active);
    return seg;
  }
  // Identify the final real symbol (the one whose output form has no marker).
  std::vector<int> kept;
  int last_real = -1;
  for (int id : d.active)
    if (d.nodes[id].sym != BpeModel::kEndOfWord) last_real = id;
  for (int id : d.active) split_rare(d, id, id == last_real, vocab, kept);
  seg.units = decorated_units(d, kept);
  return seg;
}

ParallelCorpus segment_corpus(const BpeModel& model, const Vocabulary& src_vocab,
                              const Vocabulary& tgt_vocab, const ParallelCorpus& corpus) {
  ParallelCorpus out;
  out.name = corpus.name;
  out.pairs.reserve(corpus.size());
  for (const auto& pair : corpus.pairs) {
    SentencePair seg;
    for (const auto& tok : pair.source) {
      auto units = apply_bpe(model, src_vocab, tok).units;
      seg.source.insert(seg.source.end(), units.begin(), units.end());
    }
    for (const auto& tok : pair.target) {
      auto units = apply_bpe(model, tgt_vocab, tok).units;
      seg.target.insert(seg.target.end(), units.begin(), units.end());
    }
    out.pairs.push_back(std::move(seg));
  }
  return out;
}

VocabStats vocab_stats(const Vocabulary& vocab) {
  VocabStats stats;
  stats.total_types = vocab.freq.size();
  for (const auto& [unit, freq] : vocab.freq) {
    std::string core = unit;
    if (core.size() >= 2 && core.compare(core.size() - 2, 2, BpeModel::kContinuation) == 0)
      core = core.substr(0, core.size() - 2);
    if (freq >= vocab.threshold || utf8_decode(core).size() <= 1) stats.thresholded_types++;
  }
  return stats;
}

Tokens join_subwords(const std::vector<std::string>& units) {
  Tokens out;
  std::string pending;
  const std::string& marker = BpeModel::kContinuation;
  for (const auto& unit : units) {
    bool cont = unit.size() >= marker.size() &&
                unit.compare(unit.size() - marker.size(), marker.size(), marker) == 0;
    if (cont) {
      pending += unit.substr(0, unit.size() - marker.size());
    } else {
      out.push_back(pending + unit);
      pending.clear();
    }
  }
  if (!pending.empty()) out.push_back(pending);  // dangling marker at sentence end
  return out;
}

// -- File formats ---------------------------------------------------------------

static const char* kBpeHeader = "#lowmt-bpe v1";

void save_bpe_model(const BpeModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write BPE model: " + path);
  out << kBpeHeader << (model.joint ? " joint" : "") << '\n';
  for (const auto& [left, right] : model.merges) out << left << ' ' << right << '\n';
}

BpeModel load_bpe_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open BPE model: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kBpeHeader, 0) != 0)
    throw std::runtime_error("BPE model missing version header: " + path);
  BpeModel model;
  model.joint = line.find(" joint") != std::string::npos;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto space = line.find(' ');
    if (space == std::string::npos)
      throw std::runtime_error("malformed merge line: " + line);
    model.merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return model;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  for (const auto& [unit, freq] : vocab.freq) out << unit << '\t' << freq << '\n';
}

Vocabulary load_vocab(const std::string& path, uint64_t threshold) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
  Vocabulary vocab;
  vocab.threshold = threshold;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("malformed vocabulary line: " + line);
    vocab.freq[line.substr(0, tab)] = std::stoull(line.substr(tab + 1));
  }
  return vocab;
}

}  // namespace lowmt

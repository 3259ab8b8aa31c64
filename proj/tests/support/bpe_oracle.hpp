#pragma once

// Brute-force BPE reference used by the subword tests. Written independently
// of the library implementation: plain string lists, full pair recount every
// iteration, no incremental bookkeeping.

#include <map>
#include <string>
#include <vector>

#include "lowmt/textpipe.hpp"

namespace oracle {

inline const std::string kEow = "</w>";

inline std::vector<std::string> chars_plus_eow(const std::string& word) {
  std::vector<std::string> syms;
  for (char32_t cp : lowmt::utf8_decode(word)) syms.push_back(lowmt::utf8_encode_one(cp));
  syms.push_back(kEow);
  return syms;
}

// Lexicographic with the end-of-word symbol greater than everything else.
inline bool sym_less(const std::string& a, const std::string& b) {
  if ((a == kEow) != (b == kEow)) return b == kEow;
  return a < b;
}

using Merge = std::pair<std::string, std::string>;

inline std::vector<Merge> learn(const std::map<std::string, uint64_t>& words,
                                size_t num_merges, uint64_t min_pair_freq = 2) {
  std::vector<std::vector<std::string>> segs;
  std::vector<uint64_t> freqs;
  for (const auto& [w, f] : words) {
    if (w.empty()) continue;
    segs.push_back(chars_plus_eow(w));
    freqs.push_back(f);
  }
  std::vector<Merge> merges;
  for (size_t m = 0; m < num_merges; ++m) {
    std::map<Merge, uint64_t> counts;
    for (size_t w = 0; w < segs.size(); ++w)
      for (size_t i = 0; i + 1 < segs[w].size(); ++i)
        counts[{segs[w][i], segs[w][i + 1]}] += freqs[w];
    const Merge* best = nullptr;
    uint64_t best_count = 0;
    for (const auto& [pair, c] : counts) {
      bool better = c > best_count;
      if (c == best_count && best) {
        if (pair.first != best->first)
          better = sym_less(pair.first, best->first);
        else
          better = sym_less(pair.second, best->second);
      }
      if (better) {
        best = &pair;
        best_count = c;
      }
    }
    if (!best || best_count < min_pair_freq) break;
    Merge chosen = *best;
    merges.push_back(chosen);
    for (auto& syms : segs) {
      std::vector<std::string> next;
      size_t i = 0;
      while (i < syms.size()) {
        if (i + 1 < syms.size() && syms[i] == chosen.first && syms[i + 1] == chosen.second) {
          next.push_back(chosen.first + chosen.second);
          i += 2;
        } else {
          next.push_back(syms[i]);
          i += 1;
        }
      }
      syms = next;
    }
  }
  return merges;
}

// Threshold-free segmentation: merges applied in learned order, one
// left-to-right pass each, then marker decoration.
inline std::vector<std::string> segment(const std::vector<Merge>& merges,
                                        const std::string& word) {
  std::vector<std::string> syms = chars_plus_eow(word);
  for (const auto& [l, r] : merges) {
    std::vector<std::string> next;
    size_t i = 0;
    while (i < syms.size()) {
      if (i + 1 < syms.size() && syms[i] == l && syms[i + 1] == r) {
        next.push_back(l + r);
        i += 2;
      } else {
        next.push_back(syms[i]);
        i += 1;
      }
    }
    syms = next;
  }
  std::vector<std::string> stripped;
  for (auto& s : syms) {
    if (s == kEow) continue;
    if (s.size() >= kEow.size() &&
        s.compare(s.size() - kEow.size(), kEow.size(), kEow) == 0)
      s = s.substr(0, s.size() - kEow.size());
    stripped.push_back(s);
  }
  std::vector<std::string> out;
  for (size_t i = 0; i < stripped.size(); ++i)
    out.push_back(i + 1 == stripped.size() ? stripped[i] : stripped[i] + "@@");
  return out;
}

}  // namespace oracle

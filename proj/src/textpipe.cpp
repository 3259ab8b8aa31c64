#include "lowmt/textpipe.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lowmt/rng.hpp"

namespace lowmt {

// -- UTF-8 --------------------------------------------------------------------

std::vector<char32_t> utf8_decode(const std::string& s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = s[i];
    char32_t cp = 0;
    size_t extra = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1f;
      extra = 1;
    } else if ((c >> 4) == 0xe) {
      cp = c & 0x0f;
      extra = 2;
    } else if ((c >> 3) == 0x1e) {
      cp = c & 0x07;
      extra = 3;
    } else {
      throw std::runtime_error("invalid UTF-8 byte in input");
    }
    if (extra > 0 && i + extra >= s.size())
      throw std::runtime_error("truncated UTF-8 sequence");
    for (size_t k = 1; k <= extra; ++k) {
      unsigned char cc = s[i + k];
      if ((cc >> 6) != 0x2) throw std::runtime_error("invalid UTF-8 continuation byte");
      cp = (cp << 6) | (cc & 0x3f);
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string utf8_encode_one(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xc0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xe0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  } else {
    out += static_cast<char>(0xf0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  }
  return out;
}

std::string utf8_encode(const std::vector<char32_t>& cps) {
  std::string out;
  for (char32_t cp : cps) out += utf8_encode_one(cp);
  return out;
}

bool is_space_cp(char32_t cp) {
  switch (cp) {
    case U' ': case U'\t': case U'\r': case U'\n': case U'\f': case U'\v':
    case 0xa0: case 0x1680: case 0x2028: case 0x2029: case 0x202f:
    case 0x205f: case 0x3000: case 0xfeff:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200a;
  }
}

bool is_digit_cp(char32_t cp) { return cp >= U'0' && cp <= U'9'; }

bool is_punct_cp(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2f) || (cp >= 0x3a && cp <= 0x40) ||
           (cp >= 0x5b && cp <= 0x60) || (cp >= 0x7b && cp <= 0x7e);
  }
  if (cp >= 0xa1 && cp <= 0xbf) return true;  // Latin-1 punctuation and signs
  if (cp == 0xd7 || cp == 0xf7) return true;
  if (cp >= 0x2000 && cp <= 0x206f) return !is_space_cp(cp);  // general punctuation
  if (cp >= 0x2e00 && cp <= 0x2e7f) return true;
  if (cp >= 0x3001 && cp <= 0x303f) return true;  // CJK symbols
  if (cp >= 0xff01 && cp <= 0xff0f) return true;  // fullwidth forms
  if (cp >= 0xff1a && cp <= 0xff20) return true;
  if (cp >= 0xff3b && cp <= 0xff40) return true;
  if (cp >= 0xff5b && cp <= 0xff65) return true;
  return false;
}

bool is_alpha_cp(char32_t cp) {
  if (cp < 0x80) return (cp >= U'A' && cp <= U'Z') || (cp >= U'a' && cp <= U'z');
  return !is_punct_cp(cp) && !is_space_cp(cp) && !is_digit_cp(cp);
}

static char32_t to_lower_cp(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 32;
  if (cp >= 0xc0 && cp <= 0xde && cp != 0xd7) return cp + 32;  // Latin-1
  return cp;
}

static char32_t to_upper_cp(char32_t cp) {
  if (cp >= U'a' && cp <= U'z') return cp - 32;
  if (cp >= 0xe0 && cp <= 0xfe && cp != 0xf7) return cp - 32;
  return cp;
}

std::string lowercase_word(const std::string& w) {
  auto cps = utf8_decode(w);
  for (auto& cp : cps) cp = to_lower_cp(cp);
  return utf8_encode(cps);
}

std::string uppercase_first(const std::string& w) {
  auto cps = utf8_decode(w);
  if (!cps.empty()) cps[0] = to_upper_cp(cps[0]);
  return utf8_encode(cps);
}

// -- Tokenizer ----------------------------------------------------------------

static bool is_apostrophe(char32_t cp) { return cp == U'\'' || cp == 0x2019; }

// Splits a whitespace-free chunk into tokens.
static void tokenize_chunk(const std::vector<char32_t>& chunk, Tokens& out) {
  size_t lo = 0, hi = chunk.size();
  size_t lead_end = lo;
  while (lead_end < hi && is_punct_cp(chunk[lead_end])) ++lead_end;
  size_t trail_begin = hi;
  while (trail_begin > lead_end && is_punct_cp(chunk[trail_begin - 1])) --trail_begin;

  for (size_t i = lo; i < lead_end; ++i) out.push_back(utf8_encode_one(chunk[i]));

  // Core: split at internal apostrophes with alphanumerics on both sides; the
  // apostrophe stays with the following piece ("don't" -> "don" "'t").
  size_t start = lead_end;
  for (size_t i = lead_end; i < trail_begin; ++i) {
    if (is_apostrophe(chunk[i]) && i > lead_end && i + 1 < trail_begin &&
        !is_punct_cp(chunk[i - 1]) && !is_punct_cp(chunk[i + 1])) {
      if (i > start)
        out.push_back(utf8_encode(std::vector<char32_t>(chunk.begin() + start, chunk.begin() + i)));
      start = i;
    }
  }
  if (trail_begin > start)
    out.push_back(utf8_encode(std::vector<char32_t>(chunk.begin() + start, chunk.begin() + trail_begin)));

  for (size_t i = trail_begin; i < hi; ++i) out.push_back(utf8_encode_one(chunk[i]));
}

Tokens tokenize(const std::string& text) {
  Tokens out;
  auto cps = utf8_decode(text);
  std::vector<char32_t> chunk;
  for (char32_t cp : cps) {
    if (is_space_cp(cp)) {
      if (!chunk.empty()) {
        tokenize_chunk(chunk, out);
        chunk.clear();
      }
    } else {
      chunk.push_back(cp);
    }
  }
  if (!chunk.empty()) tokenize_chunk(chunk, out);
  return out;
}

static bool starts_with_cp(const std::string& s, bool (*pred)(char32_t)) {
  if (s.empty()) return false;
  return pred(utf8_decode(s)[0]);
}

std::string detokenize(const Tokens& tokens) {
  static const std::u32string closing = U".,!?:;)]}%…";
  static const std::u32string opening = U"([{¿¡";
  std::string out;
  bool quote_open = false;    // parity state for straight double quotes
  bool suppress_space = true; // no space at start of sentence
  for (const auto& tok : tokens) {
    auto cps = utf8_decode(tok);
    if (cps.empty()) continue;
    char32_t first = cps[0];
    bool is_single = cps.size() == 1;

    bool close_like = (closing.find(first) != std::u32string::npos && is_single) ||
                      is_apostrophe(first) ||  // covers "'t"-style suffixes
                      (is_single && (first == 0x201d || first == 0xbb));
    bool open_like = is_single && (opening.find(first) != std::u32string::npos ||
                                   first == 0x201c || first == 0xab);
    bool dquote = is_single && first == U'"';

    if (dquote) {
      if (!quote_open) {
        if (!suppress_space && !out.empty()) out += ' ';
        out += tok;
        suppress_space = true;  // no space after opening quote
      } else {
        out += tok;  // closes: attach to previous word
        suppress_space = false;
      }
      quote_open = !quote_open;
      continue;
    }

    if (close_like) {
      out += tok;
      suppress_space = false;
    } else if (open_like) {
      if (!suppress_space && !out.empty()) out += ' ';
      out += tok;
      suppress_space = true;
    } else {
      if (!suppress_space && !out.empty()) out += ' ';
      out += tok;
      suppress_space = false;
    }
  }
  return out;
}

// -- Truecasing ---------------------------------------------------------------

TruecaseModel learn_truecaser(const std::vector<Tokens>& corpus) {
  // Per lowercased type, per surface form: medial and sentence-initial counts.
  struct FormCounts {
    uint64_t medial = 0;
    uint64_t initial = 0;
  };
  std::map<std::string, std::map<std::string, FormCounts>> counts;
  for (const auto& sent : corpus) {
    for (size_t i = 0; i < sent.size(); ++i) {
      const std::string& tok = sent[i];
      std::string key = lowercase_word(tok);
      auto& fc = counts[key][tok];
      if (i == 0)
        fc.initial++;
      else
        fc.medial++;
    }
  }

  TruecaseModel model;
  for (const auto& [key, forms] : counts) {
    std::string best;
    uint64_t best_count = 0;
    for (const auto& [form, fc] : forms) {
      // Sentence-initial occurrences of a form carry no weight once the form
      // has medial evidence of its own.
      uint64_t c = fc.medial + (fc.medial > 0 ? 0 : fc.initial);
      bool wins = c > best_count;
      if (c == best_count && !best.empty()) {
        // Deterministic tie-break: prefer the all-lowercase form, then the
        // lexicographically smaller one.
        bool form_lc = form == key;
        bool best_lc = best == key;
        wins = (form_lc && !best_lc) || (form_lc == best_lc && form < best);
      }
      if (wins) {
        best = form;
        best_count = c;
      }
    }
    if (best_count > 0) model.best_form[key] = {best, best_count};
  }
  return model;
}

Tokens truecase(const TruecaseModel& model, const Tokens& tokens) {
  Tokens out = tokens;
  if (out.empty()) return out;
  auto it = model.best_form.find(lowercase_word(out[0]));
  if (it != model.best_form.end()) out[0] = it->second.best;
  return out;
}

Tokens detruecase(const Tokens& tokens) {
  Tokens out = tokens;
  for (auto& tok : out) {
    if (starts_with_cp(tok, is_alpha_cp)) {
      tok = uppercase_first(tok);
      break;
    }
  }
  return out;
}

// -- Corpus operations ----------------------------------------------------------

ParallelCorpus clean_parallel(const ParallelCorpus& corpus, size_t max_len) {
  ParallelCorpus out;
  out.name = corpus.name;
  for (const auto& pair : corpus.pairs) {
    if (pair.source.empty() || pair.target.empty()) continue;
    if (pair.source.size() > max_len || pair.target.size() > max_len) continue;
    out.pairs.push_back(pair);
  }
  return out;
}

std::vector<ParallelCorpus> subsample_halving(const ParallelCorpus& corpus,
                                              size_t steps, uint64_t seed) {
  std::vector<ParallelCorpus> levels;
  levels.push_back(corpus);
  for (size_t step = 0; step < steps; ++step) {
    const ParallelCorpus& prev = levels.back();
    size_t n = prev.size();
    size_t keep = n / 2;
    Rng rng(seed_stream(seed, "subsample", step));
    // Partial Fisher-Yates: the first `keep` slots end up holding a uniform
    // random subset of the indices.
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < keep; ++i) {
      size_t j = i + static_cast<size_t>(rng.below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    ParallelCorpus next;
    next.name = prev.name + "/half" + std::to_string(step + 1);
    next.pairs.reserve(keep);
    for (size_t i : idx) next.pairs.push_back(prev.pairs[i]);
    levels.push_back(std::move(next));
  }
  return levels;
}

// -- IO -------------------------------------------------------------------------

RawCorpus read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  RawCorpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    corpus.lines.push_back(line);
  }
  return corpus;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const auto& line : lines) out << line << '\n';
}

ParallelCorpus zip_corpus(const RawCorpus& src, const RawCorpus& tgt,
                          const std::string& name) {
  if (src.lines.size() != tgt.lines.size())
    throw std::runtime_error("parallel files have unequal line counts: " + name);
  ParallelCorpus corpus;
  corpus.name = name;
  corpus.pairs.reserve(src.lines.size());
  for (size_t i = 0; i < src.lines.size(); ++i)
    corpus.pairs.push_back({split_tokens(src.lines[i]), split_tokens(tgt.lines[i])});
  return corpus;
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Tokens split_tokens(const std::string& line) {
  Tokens out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

void save_truecase_model(const TruecaseModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write truecase model: " + path);
  for (const auto& [key, entry] : model.best_form)
    out << entry.best << '\t' << entry.count << '\n';
}

TruecaseModel load_truecase_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open truecase model: " + path);
  TruecaseModel model;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("malformed truecase model line: " + line);
    std::string best = line.substr(0, tab);
    uint64_t count = std::stoull(line.substr(tab + 1));
    model.best_form[lowercase_word(best)] = {best, count};
  }
  return model;
}

}  // namespace lowmt

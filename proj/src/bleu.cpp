#include "lowmt/bleu.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "lowmt/textpipe.hpp"

namespace lowmt {

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (int n = 0; n < 4; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_length += other.hyp_length;
  ref_length += other.ref_length;
  return *this;
}

// -- 13a tokenization --------------------------------------------------------------
// Sequential rewrite passes mirroring the mteval-v13a rule set. All rules are
// ASCII-level, so byte scanning is safe on UTF-8 input.

static void replace_all(std::string& s, const std::string& from, const std::string& to) {
  size_t at = 0;
  while ((at = s.find(from, at)) != std::string::npos) {
    s.replace(at, from.size(), to);
    at += to.size();
  }
}

static bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }

// Characters padded unconditionally: space through & , ( through + , / ,
// : through @ , [ through ` , { through ~ .
static bool is_13a_symbol(char c) {
  return (c >= ' ' && c <= '&') || (c >= '(' && c <= '+') || c == '/' ||
         (c >= ':' && c <= '@') || (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

std::string tokenize_13a(const std::string& text) {
  std::string norm = text;
  replace_all(norm, "<skipped>", "");
  replace_all(norm, "-\n", "");
  replace_all(norm, "\n", " ");
  replace_all(norm, "&quot;", "\"");
  replace_all(norm, "&amp;", "&");
  replace_all(norm, "&lt;", "<");
  replace_all(norm, "&gt;", ">");

  norm = " " + norm + " ";

  // Pass 1: pad the symbol class.
  {
    std::string out;
    out.reserve(norm.size() * 2);
    for (char c : norm) {
      if (is_13a_symbol(c)) {
        out += ' ';
        out += c;
        out += ' ';
      } else {
        out += c;
      }
    }
    norm = std::move(out);
  }
  // Pass 2: "([^0-9])([.,])" -> "\1 \2 "  (left-to-right, non-overlapping).
  {
    std::string out;
    out.reserve(norm.size() * 2);
    size_t i = 0;
    while (i < norm.size()) {
      if (i + 1 < norm.size() && !is_ascii_digit(norm[i]) &&
          (norm[i + 1] == '.' || norm[i + 1] == ',')) {
        out += norm[i];
        out += ' ';
        out += norm[i + 1];
        out += ' ';
        i += 2;
      } else {
        out += norm[i];
        i += 1;
      }
    }
    norm = std::move(out);
  }
  // Pass 3: "([.,])([^0-9])" -> " \1 \2".
  {
    std::string out;
    out.reserve(norm.size() * 2);
    size_t i = 0;
    while (i < norm.size()) {
      if (i + 1 < norm.size() && (norm[i] == '.' || norm[i] == ',') &&
          !is_ascii_digit(norm[i + 1])) {
        out += ' ';
        out += norm[i];
        out += ' ';
        out += norm[i + 1];
        i += 2;
      } else {
        out += norm[i];
        i += 1;
      }
    }
    norm = std::move(out);
  }
  // Pass 4: "([0-9])(-)" -> "\1 \2 ".
  {
    std::string out;
    out.reserve(norm.size() * 2);
    size_t i = 0;
    while (i < norm.size()) {
      if (i + 1 < norm.size() && is_ascii_digit(norm[i]) && norm[i + 1] == '-') {
        out += norm[i];
        out += ' ';
        out += '-';
        out += ' ';
        i += 2;
      } else {
        out += norm[i];
        i += 1;
      }
    }
    norm = std::move(out);
  }
  // Whitespace squeeze and trim, with the Unicode whitespace class.
  {
    auto is_space = [](char32_t cp) {
      return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' ||
             cp == U'\v' || (cp >= 0x1c && cp <= 0x1f) || cp == 0x85 || cp == 0xa0 ||
             cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200a) || cp == 0x2028 ||
             cp == 0x2029 || cp == 0x202f || cp == 0x205f || cp == 0x3000;
    };
    std::string out;
    out.reserve(norm.size());
    bool in_space = true;  // drop leading whitespace
    for (char32_t cp : utf8_decode(norm)) {
      if (is_space(cp)) {
        if (!in_space) out += ' ';
        in_space = true;
      } else {
        out += utf8_encode_one(cp);
        in_space = false;
      }
    }
    if (!out.empty() && out.back() == ' ') out.pop_back();
    norm = std::move(out);
  }
  return norm;
}

// -- n-gram statistics ----------------------------------------------------------------

static std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

static std::unordered_map<std::string, int64_t> ngram_counts(
    const std::vector<std::string>& toks, int n) {
  std::unordered_map<std::string, int64_t> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int k = 1; k < n; ++k) {
      key += ' ';
      key += toks[i + k];
    }
    counts[key]++;
  }
  return counts;
}

BleuStats sentence_stats(const std::string& tokenized_hyp, const std::string& tokenized_ref) {
  BleuStats stats;
  auto hyp = split_ws(tokenized_hyp);
  auto ref = split_ws(tokenized_ref);
  stats.hyp_length = static_cast<int64_t>(hyp.size());
  stats.ref_length = static_cast<int64_t>(ref.size());
  for (int n = 1; n <= 4; ++n) {
    auto hyp_ngrams = ngram_counts(hyp, n);
    auto ref_ngrams = ngram_counts(ref, n);
    for (const auto& [gram, count] : hyp_ngrams) {
      stats.totals[n - 1] += count;
      auto it = ref_ngrams.find(gram);
      if (it != ref_ngrams.end()) stats.matches[n - 1] += std::min(count, it->second);
    }
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats) {
  double log_precision_sum = 0.0;
  double register_ = 1.0;
  for (int n = 0; n < 4; ++n) {
    if (stats.totals[n] == 0) return 0.0;  // hypothesis shorter than the order
    double p;
    if (stats.matches[n] == 0) {
      register_ *= 2.0;
      p = 1.0 / (register_ * static_cast<double>(stats.totals[n]));
    } else {
      p = static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]);
    }
    log_precision_sum += std::log(p);
  }
  double brevity = 1.0;
  if (stats.hyp_length < stats.ref_length) {
    brevity = stats.hyp_length > 0
                  ? std::exp(1.0 - static_cast<double>(stats.ref_length) /
                                       static_cast<double>(stats.hyp_length))
                  : 0.0;
  }
  return 100.0 * brevity * std::exp(log_precision_sum / 4.0);
}

static std::string lowercase_ascii_latin1(const std::string& s) {
  auto cps = utf8_decode(s);
  std::string out;
  for (char32_t cp : cps) {
    if (cp >= U'A' && cp <= U'Z')
      cp += 32;
    else if (cp >= 0xc0 && cp <= 0xde && cp != 0xd7)
      cp += 32;
    out += utf8_encode_one(cp);
  }
  return out;
}

double corpus_bleu(const std::vector<std::string>& hypotheses,
                   const std::vector<std::string>& references, bool cased) {
  if (hypotheses.size() != references.size())
    throw std::runtime_error("corpus_bleu: " + std::to_string(hypotheses.size()) +
                             " hypotheses vs " + std::to_string(references.size()) +
                             " references");
  BleuStats stats;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    std::string hyp = tokenize_13a(hypotheses[i]);
    std::string ref = tokenize_13a(references[i]);
    if (!cased) {
      hyp = lowercase_ascii_latin1(hyp);
      ref = lowercase_ascii_latin1(ref);
    }
    stats += sentence_stats(hyp, ref);
  }
  return bleu_from_stats(stats);
}

ScoreReport score_run(const std::string& hyp_path, const std::string& ref_path, bool cased,
                      const std::string& tokenizer) {
  if (tokenizer != "13a" && tokenizer != "none")
    throw std::runtime_error("score_run: tokenizer must be 13a or none, got " + tokenizer);
  RawCorpus hyp = read_lines(hyp_path);
  RawCorpus ref = read_lines(ref_path);
  if (hyp.lines.size() != ref.lines.size())
    throw std::runtime_error("score_run: " + hyp_path + " has " +
                             std::to_string(hyp.lines.size()) + " lines but " + ref_path +
                             " has " + std::to_string(ref.lines.size()));
  BleuStats stats;
  for (size_t i = 0; i < hyp.lines.size(); ++i) {
    std::string h = tokenizer == "13a" ? tokenize_13a(hyp.lines[i]) : hyp.lines[i];
    std::string r = tokenizer == "13a" ? tokenize_13a(ref.lines[i]) : ref.lines[i];
    if (!cased) {
      h = lowercase_ascii_latin1(h);
      r = lowercase_ascii_latin1(r);
    }
    stats += sentence_stats(h, r);
  }
  ScoreReport report;
  report.bleu = bleu_from_stats(stats);
  report.signature = std::string("BLEU+c.") + (cased ? "mixed" : "lc") + "+#.1+s.exp+tok." +
                     tokenizer + "+v.1.0";
  return report;
}

std::string format_score_report(const ScoreReport& report) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s = %.2f", report.signature.c_str(), report.bleu);
  return buf;
}

}  // namespace lowmt

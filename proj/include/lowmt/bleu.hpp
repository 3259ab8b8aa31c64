#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lowmt {

// Pooled n-gram match statistics for orders 1..4. Additive across sentences.
struct BleuStats {
  std::array<int64_t, 4> matches = {0, 0, 0, 0};
  std::array<int64_t, 4> totals = {0, 0, 0, 0};
  int64_t hyp_length = 0;
  int64_t ref_length = 0;

  BleuStats& operator+=(const BleuStats& other);
};

// mteval-13a normalization and tokenization; returns space-separated tokens.
std::string tokenize_13a(const std::string& text);

// Statistics for one sentence pair over already-tokenized text.
BleuStats sentence_stats(const std::string& tokenized_hyp, const std::string& tokenized_ref);

// Corpus BLEU in [0, 100] from pooled statistics, exponential smoothing for
// zero-match orders: the smoothing register doubles per smoothed order and
// p_n = 1 / (register * total_n). Brevity penalty min(1, exp(1 - ref/hyp)).
double bleu_from_stats(const BleuStats& stats);

// End-to-end corpus BLEU: 13a tokenization, optional lowercasing, pooled
// statistics. Hypothesis and reference counts must match.
double corpus_bleu(const std::vector<std::string>& hypotheses,
                   const std::vector<std::string>& references, bool cased = true);

struct ScoreReport {
  double bleu = 0.0;
  std::string signature;  // e.g. BLEU+c.mixed+#.1+s.exp+tok.13a+v.1.0
};

// Scores a hypothesis file against a reference file. tokenizer: "13a" or "none".
ScoreReport score_run(const std::string& hyp_path, const std::string& ref_path, bool cased,
                      const std::string& tokenizer = "13a");

std::string format_score_report(const ScoreReport& report);

}  // namespace lowmt

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lowmt/checkpoint.hpp"
#include "lowmt/config.hpp"
#include "lowmt/subword.hpp"
#include "lowmt/textpipe.hpp"
#include "lowmt/train.hpp"

namespace lowmt {

// Raw parallel data as read from disk.
struct RawParallel {
  RawCorpus train_src, train_tgt;
  RawCorpus dev_src, dev_tgt;
};

RawParallel load_raw_parallel(const std::string& dir);

// Everything learned from the training data that decoding needs again:
// truecasers, BPE model, thresholded vocabularies, and token dictionaries.
struct PipelineArtifacts {
  TruecaseModel truecase_src, truecase_tgt;
  BpeModel bpe;
  Vocabulary vocab_src, vocab_tgt;
  TokenDict dict_src, dict_tgt;
  ParallelCorpus segmented_train;
};

// Tokenize + truecase + length-clean a raw pair of corpora.
ParallelCorpus preprocess_parallel(const RawCorpus& src, const RawCorpus& tgt,
                                   const TruecaseModel& tc_src, const TruecaseModel& tc_tgt,
                                   int max_len, const std::string& name);

// Learns truecasers and joint BPE on the full training corpus, then applies
// the frequency threshold with subword statistics from `threshold_corpus`
// (the subcorpus in learning-curve runs, the full corpus otherwise).
PipelineArtifacts build_pipeline(const RawCorpus& train_src, const RawCorpus& train_tgt,
                                 const SystemPreset& preset,
                                 const ParallelCorpus* threshold_corpus = nullptr);

// Re-thresholds an existing pipeline against a subcorpus and re-derives the
// dictionaries, as the learning-curve sweep requires per level.
void rethreshold_pipeline(PipelineArtifacts& artifacts, const ParallelCorpus& subcorpus,
                          uint64_t threshold);

// Segments a preprocessed source sentence and maps it to ids.
std::vector<int32_t> segment_to_ids(const PipelineArtifacts& artifacts, const Tokens& source);

struct TrainedSystem {
  ModelParams<float> params;
  ModelConfig model_cfg;
  TrainState state;
  double dev_bleu = 0.0;
};

// Full pipeline for one (preset, seed): preprocess, segment, train with
// early stopping on dev BLEU, return the best model.
TrainedSystem run_system(const SystemPreset& preset, const RawParallel& data, uint64_t seed,
                         PipelineArtifacts* artifacts_out = nullptr,
                         const std::function<void(const std::string&)>& log = {});

// Decodes raw source lines end to end with a trained system.
std::vector<std::string> translate_lines(const PipelineArtifacts& artifacts,
                                         ModelParams<float>& params, const ModelConfig& cfg,
                                         const std::vector<std::string>& raw_lines,
                                         int beam_size);

// -- Experiment tables -------------------------------------------------------------

struct ResultRow {
  int system = 0;
  size_t corpus_size = 0;
  uint64_t seed = 0;
  double bleu = 0.0;
  bool failed = false;
  std::string error;
};

struct ResultTable {
  std::vector<ResultRow> rows;

  std::string to_csv() const;  // data rows plus mean/std aggregate rows
  static ResultTable from_csv(const std::string& text);
};

struct AblationOptions {
  std::vector<int> systems;
  std::vector<uint64_t> seeds;
  bool desk = true;
  int max_updates_override = 0;           // 0 keeps the preset value
  int validation_interval_override = 0;   // 0 keeps the preset value
  std::function<void(const std::string&)> log;
};

ResultTable run_ablation(const RawParallel& data, const AblationOptions& options);

struct CurveOptions {
  int system = 8;
  size_t steps = 2;
  std::vector<uint64_t> seeds;
  uint64_t subsample_seed = 17;
  bool desk = true;
  int max_updates_override = 0;
  int validation_interval_override = 0;
  std::function<void(const std::string&)> log;
};

// Trains the system on halving subsample levels of the training data,
// re-applying the subword frequency threshold per level.
ResultTable learning_curve(const RawParallel& data, const CurveOptions& options);

struct Report {
  std::string table;      // aligned text, "mean +/- std" cells
  std::string plot_data;  // gnuplot-ready: per-system blocks of "size mean std"
};

Report make_report(const ResultTable& table);

// Mean and sample standard deviation (n-1 denominator; 0 for one value).
std::pair<double, double> mean_std(const std::vector<double>& values);

}  // namespace lowmt

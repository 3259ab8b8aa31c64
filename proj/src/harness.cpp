#include "lowmt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "lowmt/bleu.hpp"
#include "lowmt/decode.hpp"

namespace lowmt {

RawParallel load_raw_parallel(const std::string& dir) {
  RawParallel data;
  data.train_src = read_lines(dir + "/train.src");
  data.train_tgt = read_lines(dir + "/train.tgt");
  data.dev_src = read_lines(dir + "/dev.src");
  data.dev_tgt = read_lines(dir + "/dev.tgt");
  if (data.train_src.lines.size() != data.train_tgt.lines.size())
    throw std::runtime_error("train.src and train.tgt line counts differ in " + dir);
  if (data.dev_src.lines.size() != data.dev_tgt.lines.size())
    throw std::runtime_error("dev.src and dev.tgt line counts differ in " + dir);
  return data;
}

ParallelCorpus preprocess_parallel(const RawCorpus& src, const RawCorpus& tgt,
                                   const TruecaseModel& tc_src, const TruecaseModel& tc_tgt,
                                   int max_len, const std::string& name) {
  ParallelCorpus corpus;
  corpus.name = name;
  corpus.pairs.reserve(src.lines.size());
  for (size_t i = 0; i < src.lines.size(); ++i) {
    SentencePair pair;
    pair.source = truecase(tc_src, tokenize(src.lines[i]));
    pair.target = truecase(tc_tgt, tokenize(tgt.lines[i]));
    corpus.pairs.push_back(std::move(pair));
  }
  return clean_parallel(corpus, static_cast<size_t>(max_len));
}

static std::vector<Tokens> tokenized_side(const RawCorpus& corpus) {
  std::vector<Tokens> out;
  out.reserve(corpus.lines.size());
  for (const auto& line : corpus.lines) out.push_back(tokenize(line));
  return out;
}

static void rebuild_dicts(PipelineArtifacts& art) {
  std::vector<std::vector<std::string>> src_side, tgt_side;
  for (const auto& pair : art.segmented_train.pairs) {
    src_side.push_back(pair.source);
    tgt_side.push_back(pair.target);
  }
  art.dict_src = build_dict(src_side);
  art.dict_tgt = build_dict(tgt_side);
}

PipelineArtifacts build_pipeline(const RawCorpus& train_src, const RawCorpus& train_tgt,
                                 const SystemPreset& preset,
                                 const ParallelCorpus* threshold_corpus) {
  PipelineArtifacts art;
  art.truecase_src = learn_truecaser(tokenized_side(train_src));
  art.truecase_tgt = learn_truecaser(tokenized_side(train_tgt));
  ParallelCorpus cleaned =
      preprocess_parallel(train_src, train_tgt, art.truecase_src, art.truecase_tgt,
                          preset.train.max_sentence_length, "train");
  // Joint BPE over both sides of the full training corpus.
  WordFreq joint = count_words(cleaned, true, true);
  art.bpe = learn_bpe(joint, static_cast<size_t>(preset.bpe_merges));
  art.bpe.joint = true;

  const ParallelCorpus& counts_from = threshold_corpus ? *threshold_corpus : cleaned;
  art.vocab_src = build_vocab(count_words(counts_from, true, false), art.bpe);
  art.vocab_tgt = build_vocab(count_words(counts_from, false, true), art.bpe);
  art.vocab_src.threshold = preset.bpe_frequency_threshold;
  art.vocab_tgt.threshold = preset.bpe_frequency_threshold;

  art.segmented_train =
      segment_corpus(art.bpe, art.vocab_src, art.vocab_tgt,
                     threshold_corpus ? *threshold_corpus : cleaned);
  rebuild_dicts(art);
  return art;
}

void rethreshold_pipeline(PipelineArtifacts& art, const ParallelCorpus& subcorpus,
                          uint64_t threshold) {
  art.vocab_src = build_vocab(count_words(subcorpus, true, false), art.bpe);
  art.vocab_tgt = build_vocab(count_words(subcorpus, false, true), art.bpe);
  art.vocab_src.threshold = threshold;
  art.vocab_tgt.threshold = threshold;
  art.segmented_train = segment_corpus(art.bpe, art.vocab_src, art.vocab_tgt, subcorpus);
  rebuild_dicts(art);
}

std::vector<int32_t> segment_to_ids(const PipelineArtifacts& art, const Tokens& source) {
  std::vector<int32_t> ids;
  for (const auto& tok : source) {
    for (const auto& unit : apply_bpe(art.bpe, art.vocab_src, tok).units)
      ids.push_back(art.dict_src.id(unit));
  }
  return ids;
}

std::vector<std::string> translate_lines(const PipelineArtifacts& art,
                                         ModelParams<float>& params, const ModelConfig& cfg,
                                         const std::vector<std::string>& raw_lines,
                                         int beam_size) {
  std::vector<std::string> out;
  out.reserve(raw_lines.size());
  for (const auto& line : raw_lines) {
    Tokens toks = truecase(art.truecase_src, tokenize(line));
    std::vector<int32_t> ids = segment_to_ids(art, toks);
    if (ids.empty()) {
      out.push_back("");
      continue;
    }
    std::vector<int32_t> hyp = translate_ids(params, cfg, ids, beam_size);
    out.push_back(postprocess_ids(hyp, art.dict_tgt));
  }
  return out;
}

TrainedSystem run_system(const SystemPreset& preset, const RawParallel& data, uint64_t seed,
                         PipelineArtifacts* artifacts_out,
                         const std::function<void(const std::string&)>& log) {
  PipelineArtifacts art = build_pipeline(data.train_src, data.train_tgt, preset);

  TrainedSystem sys;
  sys.model_cfg = preset.model;
  sys.model_cfg.src_vocab_size = art.dict_src.size();
  sys.model_cfg.tgt_vocab_size = art.dict_tgt.size();

  TrainConfig train_cfg = preset.train;
  train_cfg.seed = seed;

  ModelParams<float> params = init_params<float>(sys.model_cfg, seed);

  // Dev-source segmentation is fixed once; references stay raw for BLEU.
  std::vector<std::vector<int32_t>> dev_ids;
  for (const auto& line : data.dev_src.lines) {
    Tokens toks = truecase(art.truecase_src, tokenize(line));
    dev_ids.push_back(segment_to_ids(art, toks));
  }
  const std::vector<std::string>& dev_refs = data.dev_tgt.lines;
  const ModelConfig& cfg = sys.model_cfg;
  auto validate = [&](ModelParams<float>& p) {
    std::vector<std::string> hyps;
    hyps.reserve(dev_ids.size());
    for (const auto& ids : dev_ids) {
      if (ids.empty()) {
        hyps.push_back("");
        continue;
      }
      hyps.push_back(postprocess_ids(translate_ids(p, cfg, ids, train_cfg.beam_size),
                                     art.dict_tgt));
    }
    return corpus_bleu(hyps, dev_refs, true);
  };

  TrainResult result = train_loop(params, sys.model_cfg, train_cfg, art.segmented_train,
                                  validate, art.dict_src, art.dict_tgt, log);
  sys.params = std::move(result.best_params);
  sys.state = std::move(result.state);
  sys.dev_bleu = sys.state.best_dev_bleu;
  if (artifacts_out) *artifacts_out = std::move(art);
  return sys;
}

// -- Result tables -----------------------------------------------------------------

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0;
  for (double v : values) sum += v;
  double mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double sq = 0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size() - 1))};
}

static std::string format_bleu(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string ResultTable::to_csv() const {
  std::vector<ResultRow> sorted = rows;
  std::stable_sort(sorted.begin(), sorted.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.system != b.system) return a.system < b.system;
    if (a.corpus_size != b.corpus_size) return a.corpus_size > b.corpus_size;
    return a.seed < b.seed;
  });
  std::string csv = "system,size,seed,bleu\n";
  std::map<std::pair<int, size_t>, std::vector<double>> groups;
  std::set<std::pair<int, size_t>> failed_cells;
  for (const auto& row : sorted) {
    csv += std::to_string(row.system) + "," + std::to_string(row.corpus_size) + "," +
           std::to_string(row.seed) + ",";
    if (row.failed) {
      csv += "FAILED:" + row.error + "\n";
      failed_cells.insert({row.system, row.corpus_size});
    } else {
      csv += format_bleu(row.bleu) + "\n";
      groups[{row.system, row.corpus_size}].push_back(row.bleu);
    }
  }
  for (const auto& [key, values] : groups) {
    auto [mean, std_dev] = mean_std(values);
    std::string prefix = std::to_string(key.first) + "," + std::to_string(key.second) + ",";
    csv += prefix + "mean," + format_bleu(mean) + "\n";
    csv += prefix + "std," + format_bleu(std_dev) + "\n";
  }
  return csv;
}

ResultTable ResultTable::from_csv(const std::string& text) {
  ResultTable table;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "system,size,seed,bleu")
        throw std::runtime_error("results CSV line 1: unexpected header: " + line);
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4)
      throw std::runtime_error("results CSV line " + std::to_string(lineno) +
                               ": expected 4 columns, got " + std::to_string(cells.size()));
    if (cells[2] == "mean" || cells[2] == "std") continue;  // recomputed on demand
    ResultRow row;
    try {
      row.system = std::stoi(cells[0]);
      row.corpus_size = std::stoull(cells[1]);
      row.seed = std::stoull(cells[2]);
      if (cells[3].rfind("FAILED:", 0) == 0) {
        row.failed = true;
        row.error = cells[3].substr(7);
      } else {
        row.bleu = std::stod(cells[3]);
      }
    } catch (const std::exception&) {
      throw std::runtime_error("results CSV line " + std::to_string(lineno) +
                               ": malformed cell in: " + line);
    }
    table.rows.push_back(row);
  }
  return table;
}

ResultTable run_ablation(const RawParallel& data, const AblationOptions& options) {
  ResultTable table;
  for (int system : options.systems) {
    SystemPreset preset = preset_by_id(system);
    if (options.desk) preset = desk_scale(preset);
    if (options.max_updates_override > 0)
      preset.train.max_updates = options.max_updates_override;
    if (options.validation_interval_override > 0)
      preset.train.validation_interval = options.validation_interval_override;
    for (uint64_t seed : options.seeds) {
      ResultRow row;
      row.system = system;
      row.seed = seed;
      row.corpus_size = data.train_src.lines.size();
      if (options.log)
        options.log("# system " + std::to_string(system) + " seed " + std::to_string(seed));
      try {
        TrainedSystem sys = run_system(preset, data, seed, nullptr, options.log);
        row.bleu = sys.dev_bleu;
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
        if (options.log)
          options.log("# warning: system " + std::to_string(system) + " seed " +
                      std::to_string(seed) + " failed: " + e.what());
      }
      table.rows.push_back(row);
    }
  }
  return table;
}

ResultTable learning_curve(const RawParallel& data, const CurveOptions& options) {
  SystemPreset preset = preset_by_id(options.system);
  if (options.desk) preset = desk_scale(preset);
  if (options.max_updates_override > 0)
    preset.train.max_updates = options.max_updates_override;
  if (options.validation_interval_override > 0)
    preset.train.validation_interval = options.validation_interval_override;

  // Truecase and BPE are learned once on the full training corpus.
  PipelineArtifacts base = build_pipeline(data.train_src, data.train_tgt, preset);
  ParallelCorpus cleaned =
      preprocess_parallel(data.train_src, data.train_tgt, base.truecase_src,
                          base.truecase_tgt, preset.train.max_sentence_length, "train");
  std::vector<ParallelCorpus> levels =
      subsample_halving(cleaned, options.steps, options.subsample_seed);

  ResultTable table;
  for (const ParallelCorpus& level : levels) {
    PipelineArtifacts art = base;
    rethreshold_pipeline(art, level, preset.bpe_frequency_threshold);

    ModelConfig cfg = preset.model;
    cfg.src_vocab_size = art.dict_src.size();
    cfg.tgt_vocab_size = art.dict_tgt.size();

    std::vector<std::vector<int32_t>> dev_ids;
    for (const auto& line : data.dev_src.lines) {
      Tokens toks = truecase(art.truecase_src, tokenize(line));
      dev_ids.push_back(segment_to_ids(art, toks));
    }

    for (uint64_t seed : options.seeds) {
      ResultRow row;
      row.system = options.system;
      row.corpus_size = level.size();
      row.seed = seed;
      if (options.log)
        options.log("# level " + std::to_string(level.size()) + " seed " +
                    std::to_string(seed));
      try {
        TrainConfig train_cfg = preset.train;
        train_cfg.seed = seed;
        ModelParams<float> params = init_params<float>(cfg, seed);
        auto validate = [&](ModelParams<float>& p) {
          std::vector<std::string> hyps;
          for (const auto& ids : dev_ids) {
            if (ids.empty()) {
              hyps.push_back("");
              continue;
            }
            hyps.push_back(postprocess_ids(
                translate_ids(p, cfg, ids, train_cfg.beam_size), art.dict_tgt));
          }
          return corpus_bleu(hyps, data.dev_tgt.lines, true);
        };
        TrainResult result = train_loop(params, cfg, train_cfg, art.segmented_train,
                                        validate, art.dict_src, art.dict_tgt, options.log);
        row.bleu = result.state.best_dev_bleu;
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
        if (options.log) options.log(std::string("# warning: run failed: ") + e.what());
      }
      table.rows.push_back(row);
    }
  }
  return table;
}

Report make_report(const ResultTable& table) {
  std::map<std::pair<int, size_t>, std::vector<double>> cells;
  std::set<int> systems;
  std::set<size_t> sizes;
  for (const auto& row : table.rows) {
    systems.insert(row.system);
    sizes.insert(row.corpus_size);
    if (!row.failed) cells[{row.system, row.corpus_size}].push_back(row.bleu);
  }

  auto cell_text = [&](int system, size_t size) -> std::string {
    auto it = cells.find({system, size});
    if (it == cells.end() || it->second.empty()) return "-";
    auto [mean, std_dev] = mean_std(it->second);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f +/- %.2f", mean, std_dev);
    return buf;
  };

  // Sizes in descending order: full data first, like the halving ladder.
  std::vector<size_t> size_order(sizes.rbegin(), sizes.rend());
  std::vector<std::string> headers;
  size_t cell_width = 16;
  for (size_t size : size_order) {
    headers.push_back(std::to_string(size) + " pairs");
    cell_width = std::max(cell_width, headers.back().size() + 2);
  }

  std::ostringstream out;
  out << std::left << std::setw(8) << "system";
  for (const auto& h : headers) out << std::right << std::setw(static_cast<int>(cell_width)) << h;
  out << "\n";
  for (int system : systems) {
    out << std::left << std::setw(8) << system;
    for (size_t size : size_order)
      out << std::right << std::setw(static_cast<int>(cell_width)) << cell_text(system, size);
    out << "\n";
  }

  std::ostringstream plot;
  for (int system : systems) {
    plot << "# system " << system << "\n";
    for (auto it = sizes.begin(); it != sizes.end(); ++it) {
      auto found = cells.find({system, *it});
      if (found == cells.end() || found->second.empty()) {
        plot << *it << " - -\n";
        continue;
      }
      auto [mean, std_dev] = mean_std(found->second);
      plot << *it << " " << format_bleu(mean) << " " << format_bleu(std_dev) << "\n";
    }
    plot << "\n";
  }

  Report report;
  report.table = out.str();
  report.plot_data = plot.str();
  return report;
}

}  // namespace lowmt

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <type_traits>
#include <optional>
#include <string>
#include <vector>

#include "lowmt/config.hpp"
#include "lowmt/model.hpp"
#include "lowmt/rng.hpp"
#include "lowmt/tensor.hpp"
#include "lowmt/textpipe.hpp"

namespace lowmt {

struct TrainError : std::runtime_error {
  explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

// -- Regularization sampling ---------------------------------------------------------

// Per-token Bernoulli(p) drop decisions; one entry per token, true = drop.
inline std::vector<char> sample_word_dropout(size_t tokens, double p, Rng& rng) {
  std::vector<char> drop(tokens, 0);
  for (size_t i = 0; i < tokens; ++i) drop[i] = rng.bernoulli(p) ? 1 : 0;
  return drop;
}

// Mask factory used during training. Streams are separated by purpose so that
// enabling one regularizer does not perturb another's draws.
template <typename Scalar>
class TrainingDropout final : public DropoutSampler<Scalar> {
 public:
  TrainingDropout(const ModelConfig& cfg, uint64_t master_seed, uint64_t batch_index)
      : cfg_(cfg),
        src_word_rng_(seed_stream(master_seed, "source word dropout", batch_index)),
        tgt_word_rng_(seed_stream(master_seed, "target word dropout", batch_index)),
        embed_rng_(seed_stream(master_seed, "embedding dropout", batch_index)),
        hidden_rng_(seed_stream(master_seed, "hidden dropout", batch_index)) {}

  MatX<Scalar> source_word_mask(Eigen::Index rows, Eigen::Index cols) override {
    return word_mask(rows, cols, cfg_.dropout_source_word, src_word_rng_);
  }
  MatX<Scalar> target_word_mask(Eigen::Index rows, Eigen::Index cols) override {
    return word_mask(rows, cols, cfg_.dropout_target_word, tgt_word_rng_);
  }
  MatX<Scalar> embedding_mask(Eigen::Index rows, Eigen::Index cols) override {
    return inverted_mask(rows, cols, cfg_.dropout_embedding, embed_rng_);
  }
  MatX<Scalar> hidden_mask(Eigen::Index rows, Eigen::Index cols) override {
    return inverted_mask(rows, cols, cfg_.dropout_hidden, hidden_rng_);
  }

 private:
  // Whole-embedding zeroing, no rescaling.
  static MatX<Scalar> word_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    if (p <= 0.0) return MatX<Scalar>();
    MatX<Scalar> mask(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      mask.row(r).setConstant(rng.bernoulli(p) ? Scalar(0) : Scalar(1));
    return mask;
  }
  // Elementwise inverted dropout: kept units scaled by 1/(1-p).
  static MatX<Scalar> inverted_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    if (p <= 0.0) return MatX<Scalar>();
    Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - p));
    MatX<Scalar> mask(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        mask(r, c) = rng.bernoulli(p) ? Scalar(0) : keep_scale;
    return mask;
  }

  ModelConfig cfg_;
  Rng src_word_rng_, tgt_word_rng_, embed_rng_, hidden_rng_;
};

// -- Label-smoothed loss ---------------------------------------------------------------

// Per-row label-smoothed negative log-likelihood from row-wise log-probabilities:
//   loss_i = -(1-eps) * logp(i, gold_i) - eps/V * sum_k logp(i, k)
// which is the cross-entropy against (1-eps)*onehot + eps/V.
template <typename Scalar>
Var<Scalar> label_smoothed_nll(Var<Scalar> log_probs, const std::vector<int32_t>& gold,
                               Scalar eps) {
  if (eps < Scalar(0) || eps >= Scalar(1))
    throw TrainError("label smoothing must lie in [0, 1)");
  Scalar vocab = static_cast<Scalar>(log_probs.cols());
  Var<Scalar> gold_term = scale(pick(log_probs, gold), -(Scalar(1) - eps));
  if (eps == Scalar(0)) return gold_term;
  Var<Scalar> uniform_term = scale(rowsum(log_probs), -eps / vocab);
  return add(gold_term, uniform_term);
}

// -- Sequence loss over a batch -----------------------------------------------------------

struct BatchLossStats {
  double loss = 0.0;       // mean over non-pad target tokens
  int64_t target_tokens = 0;
};

// Builds the full forward pass for a batch on the tape and returns the scalar
// loss node (mean over non-pad target tokens, label smoothing applied).
template <typename Scalar>
Var<Scalar> sequence_loss(Tape<Scalar>& tape, const BoundParams<Scalar>& bound,
                          const ModelConfig& cfg,
                          const std::vector<std::vector<int32_t>>& src_ids,
                          const std::vector<std::vector<int32_t>>& tgt_ids,
                          std::type_identity_t<DropoutSampler<Scalar>*> dropout,
                          BatchLossStats* stats = nullptr) {
  if (src_ids.size() != tgt_ids.size() || src_ids.empty())
    throw TrainError("sequence_loss: batch sides must be non-empty and aligned");
  const Eigen::Index batch = static_cast<Eigen::Index>(src_ids.size());

  EncoderStates<Scalar> enc = encode(tape, bound, cfg, src_ids, dropout);
  std::vector<Var<Scalar>> states = initial_decoder_states(tape, bound, enc);

  // Decoder inputs are BOS-prefixed, gold outputs EOS-suffixed.
  size_t max_steps = 0;
  for (const auto& t : tgt_ids) max_steps = std::max(max_steps, t.size() + 1);
  int64_t total_tokens = 0;
  Var<Scalar> total;
  bool have_total = false;
  for (size_t step = 0; step < max_steps; ++step) {
    std::vector<int32_t> prev(batch), gold(batch);
    MatX<Scalar> step_mask = MatX<Scalar>::Zero(batch, 1);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const auto& tgt = tgt_ids[b];
      bool live = step <= tgt.size();
      prev[b] = step == 0 ? TokenDict::kBos : (step - 1 < tgt.size() ? tgt[step - 1] : TokenDict::kPad);
      gold[b] = live ? (step < tgt.size() ? tgt[step] : TokenDict::kEos) : TokenDict::kPad;
      if (live) {
        step_mask(b, 0) = Scalar(1);
        total_tokens++;
      }
    }
    DecoderStepResult<Scalar> out = decoder_step(bound, cfg, prev, states, enc, dropout);
    states = out.states;
    Var<Scalar> log_probs = log_softmax(out.logits, 1);
    Var<Scalar> row_loss =
        label_smoothed_nll(log_probs, gold, static_cast<Scalar>(cfg.label_smoothing));
    Var<Scalar> masked = apply_mask(row_loss, step_mask);
    Var<Scalar> step_total = sum_all(masked);
    total = have_total ? add(total, step_total) : step_total;
    have_total = true;
  }
  Var<Scalar> loss = scale(total, Scalar(1) / static_cast<Scalar>(total_tokens));
  if (stats) {
    stats->loss = static_cast<double>(loss.value()(0, 0));
    stats->target_tokens = total_tokens;
  }
  return loss;
}

// -- Adam ---------------------------------------------------------------------------------

template <typename Scalar>
struct AdamState {
  std::vector<MatX<Scalar>> m;
  std::vector<MatX<Scalar>> v;
  int64_t t = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
};

// One Adam update over an aligned parameter/gradient list. Throws on
// non-finite gradients, naming the offending parameter.
template <typename Scalar>
void adam_step(const std::vector<std::pair<std::string, MatX<Scalar>*>>& params,
               const std::vector<MatX<Scalar>>& grads, AdamState<Scalar>& state, Scalar lr) {
  if (params.size() != grads.size())
    throw TrainError("adam_step: " + std::to_string(params.size()) + " parameters vs " +
                     std::to_string(grads.size()) + " gradients");
  if (state.m.empty()) {
    for (const auto& [name, p] : params) {
      state.m.push_back(MatX<Scalar>::Zero(p->rows(), p->cols()));
      state.v.push_back(MatX<Scalar>::Zero(p->rows(), p->cols()));
    }
  }
  state.t += 1;
  Scalar bc1 = Scalar(1) - std::pow(state.beta1, static_cast<Scalar>(state.t));
  Scalar bc2 = Scalar(1) - std::pow(state.beta2, static_cast<Scalar>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    const MatX<Scalar>& g = grads[i];
    MatX<Scalar>& theta = *params[i].second;
    if (!g.allFinite())
      throw TrainError("adam_step: non-finite gradient for parameter " + params[i].first);
    state.m[i] = state.beta1 * state.m[i] + (Scalar(1) - state.beta1) * g;
    state.v[i] = (state.beta2 * state.v[i].array() +
                  (Scalar(1) - state.beta2) * g.array().square())
                     .matrix();
    auto m_hat = state.m[i].array() / bc1;
    auto v_hat = state.v[i].array() / bc2;
    theta.array() -= lr * m_hat / (v_hat.sqrt() + state.eps);
  }
}

// -- Token-based batching -------------------------------------------------------------------

struct Batch {
  std::vector<size_t> indices;
};

// Shuffled maxi-chunks (20x batch capacity) sorted by target length, greedily
// packed so max(src, tgt) length times sentence count stays within the token
// budget, batch order reshuffled. Deterministic per (seed, epoch).
inline std::vector<Batch> make_batches(const ParallelCorpus& corpus, int max_tokens,
                                       uint64_t seed, uint64_t epoch) {
  if (max_tokens < 1) throw TrainError("make_batches: max_tokens must be >= 1");
  const size_t n = corpus.size();
  auto cost = [&](size_t i) {
    return std::max(corpus.pairs[i].source.size(), corpus.pairs[i].target.size());
  };
  for (size_t i = 0; i < n; ++i)
    if (cost(i) > static_cast<size_t>(max_tokens))
      throw TrainError("make_batches: sentence " + std::to_string(i) + " has " +
                       std::to_string(cost(i)) + " tokens, above the batch budget of " +
                       std::to_string(max_tokens) + " (clean the corpus first)");

  Rng rng(seed_stream(seed, "batching", epoch));
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<Batch> batches;
  const size_t chunk_budget = 20 * static_cast<size_t>(max_tokens);
  size_t at = 0;
  while (at < n) {
    size_t chunk_end = at;
    size_t chunk_tokens = 0;
    while (chunk_end < n && chunk_tokens < chunk_budget) {
      chunk_tokens += cost(order[chunk_end]);
      chunk_end++;
    }
    std::vector<size_t> chunk(order.begin() + at, order.begin() + chunk_end);
    std::stable_sort(chunk.begin(), chunk.end(), [&](size_t a, size_t b) {
      size_t la = corpus.pairs[a].target.size(), lb = corpus.pairs[b].target.size();
      if (la != lb) return la < lb;
      return a < b;
    });
    Batch current;
    size_t max_len = 0;
    for (size_t idx : chunk) {
      size_t c = cost(idx);
      size_t new_max = std::max(max_len, c);
      if (!current.indices.empty() &&
          (current.indices.size() + 1) * new_max > static_cast<size_t>(max_tokens)) {
        batches.push_back(std::move(current));
        current = Batch{};
        new_max = c;
      }
      current.indices.push_back(idx);
      max_len = new_max;
    }
    if (!current.indices.empty()) batches.push_back(std::move(current));
    at = chunk_end;
  }
  rng.shuffle(batches);
  return batches;
}

// -- Training loop -----------------------------------------------------------------------------

struct ValidationRecord {
  int64_t update = 0;
  double train_loss = 0.0;
  double dev_bleu = 0.0;
  bool is_best = false;
};

struct TrainState {
  double best_dev_bleu = -1.0;
  int validations_since_best = 0;
  int64_t update_count = 0;
  std::vector<ValidationRecord> history;
};

struct TrainResult {
  ModelParams<float> best_params;
  TrainState state;
};

// Tab-separated training log line, one per validation.
inline std::string format_log_line(const ValidationRecord& rec) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%lld\t%.6f\t%.4f\t%d",
                static_cast<long long>(rec.update), rec.train_loss, rec.dev_bleu,
                rec.is_best ? 1 : 0);
  return buf;
}

// Update loop with early stopping on dev BLEU. `validate` scores the current
// parameters (typically beam decode + BLEU against raw references); it runs
// every validation_interval updates. Returns the best checkpoint seen.
inline TrainResult train_loop(
    ModelParams<float>& params, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
    const ParallelCorpus& train_ids_corpus,
    const std::function<double(ModelParams<float>&)>& validate,
    const TokenDict& src_dict, const TokenDict& tgt_dict,
    const std::function<void(const std::string&)>& log_sink = {}) {
  model_cfg.validate();
  train_cfg.validate();
  if (train_ids_corpus.empty()) throw TrainError("train_loop: empty training corpus");

  TrainResult result;
  result.best_params = params;
  TrainState& st = result.state;
  AdamState<float> adam;
  double running_loss = 0.0;
  int64_t running_count = 0;
  bool stop = false;

  for (uint64_t epoch = 0; !stop; ++epoch) {
    auto batches =
        make_batches(train_ids_corpus, train_cfg.max_tokens_per_batch, train_cfg.seed, epoch);
    for (const Batch& batch : batches) {
      std::vector<std::vector<int32_t>> src, tgt;
      src.reserve(batch.indices.size());
      for (size_t idx : batch.indices) {
        src.push_back(src_dict.encode(train_ids_corpus.pairs[idx].source));
        tgt.push_back(tgt_dict.encode(train_ids_corpus.pairs[idx].target));
      }

      Tape<float> tape;
      BoundParams<float> bound = bind_params(tape, params);
      TrainingDropout<float> dropout(model_cfg, train_cfg.seed, st.update_count);
      BatchLossStats stats;
      Var<float> loss = sequence_loss(tape, bound, model_cfg, src, tgt, &dropout, &stats);
      if (!std::isfinite(stats.loss))
        throw TrainError("non-finite training loss at update " +
                         std::to_string(st.update_count) + " (batch of " +
                         std::to_string(batch.indices.size()) + " sentences)");
      tape.backward(loss);
      std::vector<MatX<float>> grads = collect_gradients(tape, bound);

      if (train_cfg.grad_clip_norm > 0.0) {
        double norm_sq = 0.0;
        for (const auto& g : grads) norm_sq += static_cast<double>(g.squaredNorm());
        double norm = std::sqrt(norm_sq);
        if (norm > train_cfg.grad_clip_norm) {
          float s = static_cast<float>(train_cfg.grad_clip_norm / norm);
          for (auto& g : grads) g *= s;
        }
      }

      std::vector<std::pair<std::string, MatX<float>*>> named;
      params.visit([&](const std::string& name, MatX<float>& m) { named.push_back({name, &m}); });
      adam_step(named, grads, adam, static_cast<float>(train_cfg.learning_rate));

      st.update_count++;
      running_loss += stats.loss;
      running_count++;

      if (st.update_count % train_cfg.validation_interval == 0) {
        double bleu = validate(params);
        ValidationRecord rec;
        rec.update = st.update_count;
        rec.train_loss = running_count ? running_loss / running_count : 0.0;
        rec.dev_bleu = bleu;
        running_loss = 0.0;
        running_count = 0;
        if (bleu > st.best_dev_bleu) {
          st.best_dev_bleu = bleu;
          st.validations_since_best = 0;
          rec.is_best = true;
          result.best_params = params;
        } else {
          st.validations_since_best++;
        }
        st.history.push_back(rec);
        if (log_sink) log_sink(format_log_line(rec));
        if (st.validations_since_best >= train_cfg.patience) {
          stop = true;
          break;
        }
      }
      if (st.update_count >= train_cfg.max_updates) {
        stop = true;
        break;
      }
    }
    if (train_ids_corpus.size() == 0) break;
  }
  return result;
}

}  // namespace lowmt

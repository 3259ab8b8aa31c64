#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "lowmt/model.hpp"
#include "lowmt/subword.hpp"
#include "lowmt/tensor.hpp"
#include "lowmt/textpipe.hpp"

namespace lowmt {

// A decoded hypothesis. Tokens exclude the end-of-sentence marker; emitting
// it sets `finished` and counts toward the normalized length.
struct DecodedHypothesis {
  std::vector<int32_t> tokens;
  double log_prob = 0.0;
  bool finished = false;

  size_t emitted() const { return tokens.size() + (finished ? 1 : 0); }
  double normalized() const {
    return log_prob / static_cast<double>(std::max<size_t>(1, emitted()));
  }
};

// Beam search over any stepwise sequence model:
//   Model::State            copyable decoder state
//   State start()           state before the first token
//   State step(const State&, int32_t prev, std::vector<double>* log_probs)
//                            consumes prev, fills next-token log-probs.
// Each step keeps the top beam_size expansions by cumulative log-probability;
// hypotheses that emit EOS retire to a completed pool; search stops when the
// live beam is empty or max_len tokens were emitted. Returns the completed
// hypothesis with the best length-normalized score, or the best unfinished
// one when nothing completed.
template <typename Model>
DecodedHypothesis beam_search(Model& model, int beam_size, size_t max_len,
                              int32_t eos_id = TokenDict::kEos,
                              int32_t bos_id = TokenDict::kBos) {
  if (beam_size < 1) throw TensorError("beam_search: beam size must be >= 1");

  struct Live {
    DecodedHypothesis hyp;
    typename Model::State state;        // state after consuming hyp's tokens
    std::vector<double> next_log_probs; // distribution over the next token
  };

  std::vector<Live> live(1);
  live[0].state = model.step(model.start(), bos_id, &live[0].next_log_probs);
  std::vector<DecodedHypothesis> completed;

  for (size_t len = 0; len < max_len && !live.empty(); ++len) {
    struct Candidate {
      double score;
      size_t parent;
      int32_t token;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * live[0].next_log_probs.size());
    for (size_t h = 0; h < live.size(); ++h)
      for (size_t v = 0; v < live[h].next_log_probs.size(); ++v)
        candidates.push_back(
            {live[h].hyp.log_prob + live[h].next_log_probs[v], h, static_cast<int32_t>(v)});
    size_t keep = std::min<size_t>(beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });
    candidates.resize(keep);

    std::vector<Live> next_live;
    for (const Candidate& cand : candidates) {
      const Live& parent = live[cand.parent];
      DecodedHypothesis hyp = parent.hyp;
      hyp.log_prob = cand.score;
      if (cand.token == eos_id) {
        hyp.finished = true;
        completed.push_back(std::move(hyp));
      } else {
        hyp.tokens.push_back(cand.token);
        Live entry;
        entry.hyp = std::move(hyp);
        entry.state = model.step(parent.state, cand.token, &entry.next_log_probs);
        next_live.push_back(std::move(entry));
      }
    }
    live = std::move(next_live);
  }

  auto better = [](const DecodedHypothesis& a, const DecodedHypothesis& b) {
    if (a.normalized() != b.normalized()) return a.normalized() > b.normalized();
    return a.tokens < b.tokens;
  };
  if (!completed.empty()) {
    return *std::min_element(completed.begin(), completed.end(),
                             [&](const auto& a, const auto& b) { return better(a, b); });
  }
  if (!live.empty()) {
    DecodedHypothesis best = live[0].hyp;
    for (const auto& l : live)
      if (better(l.hyp, best)) best = l.hyp;
    return best;
  }
  return DecodedHypothesis{};  // max_len == 0
}

// Stepwise view of the translation model for one source sentence. All states
// live on one tape owned by this object; no gradients are computed.
template <typename Scalar>
class TranslationStepper {
 public:
  struct State {
    std::vector<Var<Scalar>> layers;
  };

  TranslationStepper(ModelParams<Scalar>& params, const ModelConfig& cfg,
                     const std::vector<int32_t>& source_ids)
      : cfg_(cfg) {
    bound_ = bind_params(tape_, params);
    enc_ = encode(tape_, bound_, cfg_, {source_ids}, nullptr);
  }

  State start() { return State{initial_decoder_states(tape_, bound_, enc_)}; }

  State step(const State& state, int32_t prev, std::vector<double>* log_probs) {
    DecoderStepResult<Scalar> out =
        decoder_step<Scalar>(bound_, cfg_, {prev}, state.layers, enc_, nullptr);
    Var<Scalar> lp = log_softmax(out.logits, 1);
    log_probs->resize(static_cast<size_t>(lp.cols()));
    for (Eigen::Index v = 0; v < lp.cols(); ++v)
      (*log_probs)[static_cast<size_t>(v)] = static_cast<double>(lp.value()(0, v));
    return State{out.states};
  }

 private:
  ModelConfig cfg_;
  Tape<Scalar> tape_;
  BoundParams<Scalar> bound_;
  EncoderStates<Scalar> enc_;
};

// Beam-decodes one segmented source sentence into target token ids.
template <typename Scalar>
std::vector<int32_t> translate_ids(ModelParams<Scalar>& params, const ModelConfig& cfg,
                                   const std::vector<int32_t>& source_ids, int beam_size,
                                   double max_len_factor = 3.0) {
  TranslationStepper<Scalar> stepper(params, cfg, source_ids);
  size_t max_len = static_cast<size_t>(max_len_factor *
                                       static_cast<double>(std::max<size_t>(1, source_ids.size())));
  return beam_search(stepper, beam_size, max_len).tokens;
}

// Subword ids -> detokenized cased sentence: join continuation-marked units,
// restore sentence-initial casing, detokenize.
inline std::string postprocess(const std::vector<std::string>& subword_tokens) {
  return detokenize(detruecase(join_subwords(subword_tokens)));
}

inline std::string postprocess_ids(const std::vector<int32_t>& ids, const TokenDict& dict) {
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (int32_t id : ids) toks.push_back(dict.token(id));
  return postprocess(toks);
}

}  // namespace lowmt

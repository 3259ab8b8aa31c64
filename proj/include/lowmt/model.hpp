#pragma once

#include <Eigen/QR>
#include <algorithm>
#include <functional>
#include <type_traits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lowmt/config.hpp"
#include "lowmt/rng.hpp"
#include "lowmt/tensor.hpp"

namespace lowmt {

// -- Token ids -------------------------------------------------------------------

// Maps subword strings to dense ids with four reserved specials.
struct TokenDict {
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;
  static constexpr int32_t kBos = 2;
  static constexpr int32_t kEos = 3;

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int32_t> token_to_id;

  static TokenDict build(const std::vector<std::pair<std::string, uint64_t>>& types) {
    TokenDict dict;
    dict.id_to_token = {"<pad>", "<unk>", "<s>", "</s>"};
    for (const auto& [tok, freq] : types) dict.id_to_token.push_back(tok);
    for (size_t i = 0; i < dict.id_to_token.size(); ++i)
      dict.token_to_id.emplace(dict.id_to_token[i], static_cast<int32_t>(i));
    return dict;
  }

  int32_t id(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? kUnk : it->second;
  }
  const std::string& token(int32_t id) const { return id_to_token[id]; }
  int32_t size() const { return static_cast<int32_t>(id_to_token.size()); }

  std::vector<int32_t> encode(const std::vector<std::string>& toks) const {
    std::vector<int32_t> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }
};

// Builds a dict from a tokenized corpus side, ordered by frequency then token.
TokenDict build_dict(const std::vector<std::vector<std::string>>& sentences);

// -- Parameter structure -----------------------------------------------------------

// One GRU transition cell. Input-less cells (pure transitions) have empty
// input projections; layer-norm tensors exist only when normalization is on.
template <typename T>
struct GruCellT {
  bool has_input = false;
  bool layer_norm = false;
  T w_update, w_reset, w_cand;        // input projections, (in x H)
  T u_update, u_reset, u_cand;        // recurrent weights, (H x H)
  T b_update, b_reset, b_cand;        // biases, (1 x H)
  T ln_gain_update, ln_bias_update;   // per-gate pre-activation normalization
  T ln_gain_reset, ln_bias_reset;
  T ln_gain_cand, ln_bias_cand;

  template <typename F>
  void visit(const std::string& prefix, F&& fn) {
    if (has_input) {
      fn(prefix + ".w_update", w_update);
      fn(prefix + ".w_reset", w_reset);
      fn(prefix + ".w_cand", w_cand);
    }
    fn(prefix + ".u_update", u_update);
    fn(prefix + ".u_reset", u_reset);
    fn(prefix + ".u_cand", u_cand);
    fn(prefix + ".b_update", b_update);
    fn(prefix + ".b_reset", b_reset);
    fn(prefix + ".b_cand", b_cand);
    if (layer_norm) {
      fn(prefix + ".ln_gain_update", ln_gain_update);
      fn(prefix + ".ln_bias_update", ln_bias_update);
      fn(prefix + ".ln_gain_reset", ln_gain_reset);
      fn(prefix + ".ln_bias_reset", ln_bias_reset);
      fn(prefix + ".ln_gain_cand", ln_gain_cand);
      fn(prefix + ".ln_bias_cand", ln_bias_cand);
    }
  }
};

template <typename T>
struct EncoderLayerT {
  std::vector<GruCellT<T>> forward;   // transition cells, first one has input
  std::vector<GruCellT<T>> backward;

  template <typename F>
  void visit(const std::string& prefix, F&& fn) {
    for (size_t t = 0; t < forward.size(); ++t)
      forward[t].visit(prefix + ".fwd.t" + std::to_string(t), fn);
    for (size_t t = 0; t < backward.size(); ++t)
      backward[t].visit(prefix + ".bwd.t" + std::to_string(t), fn);
  }
};

// Every learnable tensor of the translation model. T is MatX<Scalar> for
// stored parameters and Var<Scalar> for a tape-bound view.
template <typename T>
struct ModelParamsT {
  bool tied = false;
  bool layer_norm = false;
  bool lexical = false;

  T src_embed, tgt_embed;
  std::vector<EncoderLayerT<T>> encoder;
  std::vector<GruCellT<T>> decoder_base;
  std::vector<std::vector<GruCellT<T>>> decoder_high;
  T attn_query, attn_key, attn_score;        // W_a (H x A), U_a (2H x A), v_a (A x 1)
  T init_state;                              // (2H x H), decoder start from mean annotation
  T readout_state, readout_embed, readout_context;  // (H x E), (E x E), (2H x E)
  T out_weight;                              // (E x V), absent when tied
  T out_bias;                                // (1 x V)
  T lex_hidden;                              // W (E x E)
  T lex_out;                                 // W^l (E x V)
  T lex_bias;                                // b^l (1 x V)
  T lex_ln_gain, lex_ln_bias;                // (1 x E), with layer norm

  template <typename F>
  void visit(F&& fn) {
    fn("embed.src", src_embed);
    fn("embed.tgt", tgt_embed);
    for (size_t l = 0; l < encoder.size(); ++l)
      encoder[l].visit("enc.l" + std::to_string(l), fn);
    for (size_t t = 0; t < decoder_base.size(); ++t)
      decoder_base[t].visit("dec.base.t" + std::to_string(t), fn);
    for (size_t l = 0; l < decoder_high.size(); ++l)
      for (size_t t = 0; t < decoder_high[l].size(); ++t)
        decoder_high[l][t].visit("dec.high" + std::to_string(l) + ".t" + std::to_string(t), fn);
    fn("attn.query", attn_query);
    fn("attn.key", attn_key);
    fn("attn.score", attn_score);
    fn("dec.init", init_state);
    fn("readout.state", readout_state);
    fn("readout.embed", readout_embed);
    fn("readout.context", readout_context);
    if (!tied) fn("out.weight", out_weight);
    fn("out.bias", out_bias);
    if (lexical) {
      fn("lex.hidden", lex_hidden);
      fn("lex.out", lex_out);
      fn("lex.bias", lex_bias);
      if (layer_norm) {
        fn("lex.ln_gain", lex_ln_gain);
        fn("lex.ln_bias", lex_ln_bias);
      }
    }
  }

  size_t tensor_count() {
    size_t n = 0;
    visit([&](const std::string&, T&) { n++; });
    return n;
  }
};

template <typename Scalar>
using ModelParams = ModelParamsT<MatX<Scalar>>;

template <typename Scalar>
using BoundParams = ModelParamsT<Var<Scalar>>;

// -- Construction and initialization ------------------------------------------------

namespace detail {

template <typename Scalar>
GruCellT<MatX<Scalar>> make_cell(int input_dim, int hidden, bool ln) {
  GruCellT<MatX<Scalar>> cell;
  cell.has_input = input_dim > 0;
  cell.layer_norm = ln;
  if (cell.has_input) {
    cell.w_update = MatX<Scalar>::Zero(input_dim, hidden);
    cell.w_reset = MatX<Scalar>::Zero(input_dim, hidden);
    cell.w_cand = MatX<Scalar>::Zero(input_dim, hidden);
  }
  cell.u_update = MatX<Scalar>::Zero(hidden, hidden);
  cell.u_reset = MatX<Scalar>::Zero(hidden, hidden);
  cell.u_cand = MatX<Scalar>::Zero(hidden, hidden);
  cell.b_update = MatX<Scalar>::Zero(1, hidden);
  cell.b_reset = MatX<Scalar>::Zero(1, hidden);
  cell.b_cand = MatX<Scalar>::Zero(1, hidden);
  if (ln) {
    cell.ln_gain_update = MatX<Scalar>::Ones(1, hidden);
    cell.ln_bias_update = MatX<Scalar>::Zero(1, hidden);
    cell.ln_gain_reset = MatX<Scalar>::Ones(1, hidden);
    cell.ln_bias_reset = MatX<Scalar>::Zero(1, hidden);
    cell.ln_gain_cand = MatX<Scalar>::Ones(1, hidden);
    cell.ln_bias_cand = MatX<Scalar>::Zero(1, hidden);
  }
  return cell;
}

}  // namespace detail

// Zero/identity-initialized parameter set with shapes determined by the config.
template <typename Scalar>
ModelParams<Scalar> allocate_params(const ModelConfig& cfg) {
  cfg.validate();
  if (cfg.src_vocab_size < 5 || cfg.tgt_vocab_size < 5)
    throw std::invalid_argument("vocabulary sizes must include the reserved specials");
  ModelParams<Scalar> p;
  p.tied = cfg.tie_decoder_embeddings;
  p.layer_norm = cfg.layer_norm;
  p.lexical = cfg.lexical_model;
  const int h = cfg.hidden_size, e = cfg.embedding_size;
  const int a = cfg.hidden_size;  // attention dimension
  p.src_embed = MatX<Scalar>::Zero(cfg.src_vocab_size, e);
  p.tgt_embed = MatX<Scalar>::Zero(cfg.tgt_vocab_size, e);
  for (int l = 0; l < cfg.encoder_depth; ++l) {
    EncoderLayerT<MatX<Scalar>> layer;
    int input_dim = l == 0 ? e : 2 * h;
    for (int t = 0; t < cfg.encoder_transition_depth; ++t) {
      layer.forward.push_back(detail::make_cell<Scalar>(t == 0 ? input_dim : 0, h, cfg.layer_norm));
      layer.backward.push_back(detail::make_cell<Scalar>(t == 0 ? input_dim : 0, h, cfg.layer_norm));
    }
    p.encoder.push_back(std::move(layer));
  }
  for (int t = 0; t < cfg.decoder_transition_base; ++t) {
    int input_dim = t == 0 ? e : (t == 1 ? 2 * h : 0);
    p.decoder_base.push_back(detail::make_cell<Scalar>(input_dim, h, cfg.layer_norm));
  }
  for (int l = 1; l < cfg.decoder_depth; ++l) {
    std::vector<GruCellT<MatX<Scalar>>> cells;
    for (int t = 0; t < cfg.decoder_transition_high; ++t)
      cells.push_back(detail::make_cell<Scalar>(t == 0 ? h : 0, h, cfg.layer_norm));
    p.decoder_high.push_back(std::move(cells));
  }
  p.attn_query = MatX<Scalar>::Zero(h, a);
  p.attn_key = MatX<Scalar>::Zero(2 * h, a);
  p.attn_score = MatX<Scalar>::Zero(a, 1);
  p.init_state = MatX<Scalar>::Zero(2 * h, h);
  p.readout_state = MatX<Scalar>::Zero(h, e);
  p.readout_embed = MatX<Scalar>::Zero(e, e);
  p.readout_context = MatX<Scalar>::Zero(2 * h, e);
  if (!p.tied) p.out_weight = MatX<Scalar>::Zero(e, cfg.tgt_vocab_size);
  p.out_bias = MatX<Scalar>::Zero(1, cfg.tgt_vocab_size);
  if (p.lexical) {
    p.lex_hidden = MatX<Scalar>::Zero(e, e);
    p.lex_out = MatX<Scalar>::Zero(e, cfg.tgt_vocab_size);
    p.lex_bias = MatX<Scalar>::Zero(1, cfg.tgt_vocab_size);
    if (p.layer_norm) {
      p.lex_ln_gain = MatX<Scalar>::Ones(1, e);
      p.lex_ln_bias = MatX<Scalar>::Zero(1, e);
    }
  }
  return p;
}

// Uniform Glorot for projections and embeddings, orthogonal recurrent
// matrices, zero biases, unit layer-norm gains. Deterministic given the seed.
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& cfg, uint64_t seed) {
  ModelParams<Scalar> p = allocate_params<Scalar>(cfg);
  Rng rng(seed_stream(seed, "init"));

  auto glorot = [&rng](MatX<Scalar>& m) {
    double limit = std::sqrt(6.0 / (double(m.rows()) + double(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        m(i, j) = static_cast<Scalar>((rng.uniform() * 2.0 - 1.0) * limit);
  };
  auto orthogonal = [&rng](MatX<Scalar>& m) {
    Eigen::MatrixXd gauss(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < gauss.rows(); ++i)
      for (Eigen::Index j = 0; j < gauss.cols(); ++j) gauss(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    Eigen::MatrixXd r = qr.matrixQR().template triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (r(j, j) < 0) q.col(j) = -q.col(j);
    m = q.cast<Scalar>();
  };

  p.visit([&](const std::string& name, MatX<Scalar>& m) {
    bool recurrent = name.find(".u_") != std::string::npos;
    bool bias = name.find(".b_") != std::string::npos || name.find("bias") != std::string::npos;
    bool gain = name.find("ln_gain") != std::string::npos;
    if (gain) {
      m.setOnes();
    } else if (bias) {
      m.setZero();
    } else if (recurrent) {
      orthogonal(m);
    } else {
      glorot(m);
    }
  });
  return p;
}

// Places every parameter tensor on a tape as a leaf, preserving structure.
template <typename Scalar>
BoundParams<Scalar> bind_params(Tape<Scalar>& tape, ModelParams<Scalar>& params) {
  BoundParams<Scalar> bound;
  bound.tied = params.tied;
  bound.layer_norm = params.layer_norm;
  bound.lexical = params.lexical;
  bound.encoder.resize(params.encoder.size());
  for (size_t l = 0; l < params.encoder.size(); ++l) {
    bound.encoder[l].forward.resize(params.encoder[l].forward.size());
    bound.encoder[l].backward.resize(params.encoder[l].backward.size());
    for (size_t t = 0; t < params.encoder[l].forward.size(); ++t) {
      bound.encoder[l].forward[t].has_input = params.encoder[l].forward[t].has_input;
      bound.encoder[l].forward[t].layer_norm = params.encoder[l].forward[t].layer_norm;
      bound.encoder[l].backward[t].has_input = params.encoder[l].backward[t].has_input;
      bound.encoder[l].backward[t].layer_norm = params.encoder[l].backward[t].layer_norm;
    }
  }
  bound.decoder_base.resize(params.decoder_base.size());
  for (size_t t = 0; t < params.decoder_base.size(); ++t) {
    bound.decoder_base[t].has_input = params.decoder_base[t].has_input;
    bound.decoder_base[t].layer_norm = params.decoder_base[t].layer_norm;
  }
  bound.decoder_high.resize(params.decoder_high.size());
  for (size_t l = 0; l < params.decoder_high.size(); ++l) {
    bound.decoder_high[l].resize(params.decoder_high[l].size());
    for (size_t t = 0; t < params.decoder_high[l].size(); ++t) {
      bound.decoder_high[l][t].has_input = params.decoder_high[l][t].has_input;
      bound.decoder_high[l][t].layer_norm = params.decoder_high[l][t].layer_norm;
    }
  }

  std::vector<Var<Scalar>*> slots;
  bound.visit([&](const std::string&, Var<Scalar>& v) { slots.push_back(&v); });
  size_t i = 0;
  params.visit([&](const std::string& name, MatX<Scalar>& m) {
    (void)name;
    *slots[i++] = tape.leaf(m, "param");
  });
  return bound;
}

// Gradients for every parameter in visit order, zeros for unused tensors.
template <typename Scalar>
std::vector<MatX<Scalar>> collect_gradients(Tape<Scalar>& tape, BoundParams<Scalar>& bound) {
  std::vector<MatX<Scalar>> grads;
  bound.visit([&](const std::string&, Var<Scalar>& v) { grads.push_back(tape.grad(v.id)); });
  return grads;
}

// -- Dropout mask source -------------------------------------------------------------

// Samples regularization masks. Lives on the training side; the model only
// applies the returned matrices, keeping the tape deterministic. A null
// sampler means evaluation mode (no dropout anywhere).
template <typename Scalar>
class DropoutSampler {
 public:
  virtual ~DropoutSampler() = default;
  // Whole-row zeroing masks (one decision per token), no rescaling.
  virtual MatX<Scalar> source_word_mask(Eigen::Index rows, Eigen::Index cols) = 0;
  virtual MatX<Scalar> target_word_mask(Eigen::Index rows, Eigen::Index cols) = 0;
  // Elementwise inverted-dropout masks (0 or 1/(1-p)).
  virtual MatX<Scalar> embedding_mask(Eigen::Index rows, Eigen::Index cols) = 0;
  virtual MatX<Scalar> hidden_mask(Eigen::Index rows, Eigen::Index cols) = 0;
};

namespace detail {

template <typename Scalar>
Var<Scalar> maybe_mask(Var<Scalar> x, MatX<Scalar> mask) {
  if (mask.size() == 0) return x;
  return apply_mask(x, std::move(mask));
}

}  // namespace detail

// -- GRU cell ---------------------------------------------------------------------

// Standard GRU transition. With no input, the input projections are dropped
// from every pre-activation. Layer normalization, when present, is applied to
// each gate pre-activation.
template <typename Scalar>
Var<Scalar> gru_cell(const GruCellT<Var<Scalar>>& w,
                     std::type_identity_t<std::optional<Var<Scalar>>> x, Var<Scalar> h,
                     Scalar ln_eps) {
  auto pre = [&](const Var<Scalar>& u, const Var<Scalar>& b,
                 const Var<Scalar>* wx) {
    Var<Scalar> z = matmul(h, u);
    if (x.has_value() && wx) z = add(z, matmul(*x, *wx));
    return add_bias(z, b);
  };
  Var<Scalar> pre_u = pre(w.u_update, w.b_update, w.has_input ? &w.w_update : nullptr);
  Var<Scalar> pre_r = pre(w.u_reset, w.b_reset, w.has_input ? &w.w_reset : nullptr);
  if (w.layer_norm) {
    pre_u = layer_norm(pre_u, w.ln_gain_update, w.ln_bias_update, ln_eps);
    pre_r = layer_norm(pre_r, w.ln_gain_reset, w.ln_bias_reset, ln_eps);
  }
  Var<Scalar> update = sigmoid(pre_u);
  Var<Scalar> reset = sigmoid(pre_r);

  Var<Scalar> pre_c = add_bias(matmul(mul(reset, h), w.u_cand), w.b_cand);
  if (x.has_value() && w.has_input) pre_c = add(pre_c, matmul(*x, w.w_cand));
  if (w.layer_norm) pre_c = layer_norm(pre_c, w.ln_gain_cand, w.ln_bias_cand, ln_eps);
  Var<Scalar> cand = tanh(pre_c);

  // h' = (1 - z) .* h + z .* cand
  return add(mul(one_minus(update), h), mul(update, cand));
}

// Deep transition: the first cell consumes the input, the rest refine the state.
template <typename Scalar>
Var<Scalar> deep_transition(const std::vector<GruCellT<Var<Scalar>>>& cells,
                            std::type_identity_t<std::optional<Var<Scalar>>> x, Var<Scalar> h,
                            Scalar ln_eps) {
  Var<Scalar> state = gru_cell(cells[0], x, h, ln_eps);
  for (size_t t = 1; t < cells.size(); ++t)
    state = gru_cell(cells[t], std::nullopt, state, ln_eps);
  return state;
}

// -- Encoder ------------------------------------------------------------------------

template <typename Scalar>
struct EncoderStates {
  std::vector<Var<Scalar>> annotations;  // per position, (B x 2H)
  Var<Scalar> annotation_stack;          // (S*B x 2H)
  Var<Scalar> attention_keys;            // (S*B x A)
  Var<Scalar> source_embed_stack;        // (S*B x E), input to the lexical model
  MatX<Scalar> mask;                     // (B x S), 1 for real tokens
  std::vector<int> lengths;
  Eigen::Index batch = 0;
  Eigen::Index positions = 0;
};

// Pads a batch of id sequences, appends the end-of-sentence id, and returns
// per-position id vectors plus the (B x S) mask.
template <typename Scalar>
void pad_batch(const std::vector<std::vector<int32_t>>& seqs, int32_t vocab_size,
               std::vector<std::vector<int32_t>>* per_position, MatX<Scalar>* mask,
               std::vector<int>* lengths) {
  Eigen::Index batch = static_cast<Eigen::Index>(seqs.size());
  Eigen::Index max_len = 0;
  for (const auto& s : seqs)
    max_len = std::max(max_len, static_cast<Eigen::Index>(s.size()) + 1);  // + EOS
  *mask = MatX<Scalar>::Zero(batch, max_len);
  lengths->assign(batch, 0);
  per_position->assign(max_len, std::vector<int32_t>(batch, TokenDict::kPad));
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& seq = seqs[b];
    for (size_t s = 0; s <= seq.size(); ++s) {
      int32_t id = s < seq.size() ? seq[s] : TokenDict::kEos;
      if (id < 0 || id >= vocab_size) id = TokenDict::kUnk;  // never crash on unknown ids
      (*per_position)[s][b] = id;
      (*mask)(b, static_cast<Eigen::Index>(s)) = Scalar(1);
    }
    (*lengths)[b] = static_cast<int>(seq.size()) + 1;
  }
}

// Bidirectional deep-transition encoder over a padded batch. Masked positions
// carry the previous state through so padding never leaks into annotations.
template <typename Scalar>
EncoderStates<Scalar> encode(Tape<Scalar>& tape, const BoundParams<Scalar>& p,
                             const ModelConfig& cfg,
                             const std::vector<std::vector<int32_t>>& source_ids,
                             std::type_identity_t<DropoutSampler<Scalar>*> dropout) {
  if (source_ids.empty()) throw TensorError("encode: empty batch");
  const Scalar eps = static_cast<Scalar>(cfg.layer_norm_eps);
  std::vector<std::vector<int32_t>> ids;
  EncoderStates<Scalar> enc;
  pad_batch<Scalar>(source_ids, cfg.src_vocab_size, &ids, &enc.mask, &enc.lengths);
  const Eigen::Index batch = enc.mask.rows();
  const Eigen::Index positions = enc.mask.cols();
  enc.batch = batch;
  enc.positions = positions;
  const int h = cfg.hidden_size;

  // Embeddings with word dropout (whole rows) and embedding dropout.
  std::vector<Var<Scalar>> inputs;
  for (Eigen::Index s = 0; s < positions; ++s) {
    Var<Scalar> x = embedding_rows(p.src_embed, ids[s]);
    if (dropout) {
      x = detail::maybe_mask(x, dropout->source_word_mask(batch, cfg.embedding_size));
      x = detail::maybe_mask(x, dropout->embedding_mask(batch, cfg.embedding_size));
    }
    inputs.push_back(x);
  }
  enc.source_embed_stack = concat(inputs, 0);

  // Per-position (B x H) masks for carrying state through padding.
  std::vector<MatX<Scalar>> keep(positions), carry(positions);
  for (Eigen::Index s = 0; s < positions; ++s) {
    keep[s] = MatX<Scalar>::Zero(batch, h);
    carry[s] = MatX<Scalar>::Zero(batch, h);
    for (Eigen::Index b = 0; b < batch; ++b) {
      keep[s].row(b).setConstant(enc.mask(b, s));
      carry[s].row(b).setConstant(Scalar(1) - enc.mask(b, s));
    }
  }

  std::vector<Var<Scalar>> layer_in = inputs;
  for (int l = 0; l < cfg.encoder_depth; ++l) {
    std::vector<Var<Scalar>> fwd(positions), bwd(positions);
    Var<Scalar> state = tape.leaf(MatX<Scalar>::Zero(batch, h), "enc_h0");
    for (Eigen::Index s = 0; s < positions; ++s) {
      Var<Scalar> next =
          deep_transition(p.encoder[l].forward, std::optional(layer_in[s]), state, eps);
      state = add(apply_mask(next, keep[s]), apply_mask(state, carry[s]));
      fwd[s] = state;
    }
    state = tape.leaf(MatX<Scalar>::Zero(batch, h), "enc_h0");
    for (Eigen::Index s = positions - 1; s >= 0; --s) {
      Var<Scalar> next =
          deep_transition(p.encoder[l].backward, std::optional(layer_in[s]), state, eps);
      state = add(apply_mask(next, keep[s]), apply_mask(state, carry[s]));
      bwd[s] = state;
    }
    std::vector<Var<Scalar>> outputs(positions);
    for (Eigen::Index s = 0; s < positions; ++s)
      outputs[s] = concat(std::vector<Var<Scalar>>{fwd[s], bwd[s]}, 1);
    layer_in = outputs;
  }

  enc.annotations = layer_in;
  enc.annotation_stack = concat(layer_in, 0);
  enc.attention_keys = matmul(enc.annotation_stack, p.attn_key);
  return enc;
}

// Mean annotation over unmasked positions, feeding the decoder start state.
template <typename Scalar>
Var<Scalar> init_decoder_state(Tape<Scalar>& tape, const BoundParams<Scalar>& p,
                               const EncoderStates<Scalar>& enc) {
  if (enc.annotations.empty()) throw TensorError("init_decoder_state: no annotations");
  const Eigen::Index batch = enc.batch;
  const Eigen::Index width = enc.annotations[0].cols();
  std::vector<Var<Scalar>> terms;
  for (Eigen::Index s = 0; s < enc.positions; ++s) {
    MatX<Scalar> w = MatX<Scalar>::Zero(batch, width);
    for (Eigen::Index b = 0; b < batch; ++b)
      w.row(b).setConstant(enc.mask(b, s) / static_cast<Scalar>(enc.lengths[b]));
    terms.push_back(apply_mask(enc.annotations[s], std::move(w)));
  }
  Var<Scalar> mean = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) mean = add(mean, terms[i]);
  (void)tape;
  return tanh(matmul(mean, p.init_state));
}

// -- Attention -------------------------------------------------------------------------

template <typename Scalar>
struct AttentionResult {
  Var<Scalar> weights;  // (B x S), simplex over unmasked positions per row
  Var<Scalar> context;  // (B x 2H)
};

// Additive attention: e_s = v' tanh(W q + U h_s); weights softmax over
// unmasked source positions; context is the weight-averaged annotation.
template <typename Scalar>
AttentionResult<Scalar> attention(const BoundParams<Scalar>& p, Var<Scalar> state,
                                  const EncoderStates<Scalar>& enc) {
  Var<Scalar> query = matmul(state, p.attn_query);                       // B x A
  Var<Scalar> scores_stacked =
      matmul(tanh(add(repeat_blocks(query, enc.positions), enc.attention_keys)),
             p.attn_score);                                              // S*B x 1
  Var<Scalar> scores = stacked_to_cols(scores_stacked, enc.positions);   // B x S
  AttentionResult<Scalar> result;
  result.weights = masked_softmax_rows(scores, enc.mask);
  result.context =
      sum_blocks(scale_rows(enc.annotation_stack, cols_to_stacked(result.weights)),
                 enc.positions);
  return result;
}

// -- Lexical model -----------------------------------------------------------------------

template <typename Scalar>
struct LexicalResult {
  Var<Scalar> hidden;       // h^l, (B x E)
  Var<Scalar> logit_terms;  // W^l h^l + b^l, (B x V)
  int32_t attention_node = -1;  // id of the attention-weight node consumed
};

// Feed-forward path from attention-weighted source embeddings:
//   f^l = tanh(sum_s a(s) f_s);  h^l = tanh(W f^l) + f^l;  logits += W^l h^l + b^l.
// Layer normalization (when on) wraps the pre-tanh activation of W f^l, and
// hidden dropout is applied to h^l at training time.
template <typename Scalar>
LexicalResult<Scalar> lexical_model(const BoundParams<Scalar>& p, Var<Scalar> attn_weights,
                                    const EncoderStates<Scalar>& enc, Scalar ln_eps,
                                    std::type_identity_t<DropoutSampler<Scalar>*> dropout) {
  Var<Scalar> avg = sum_blocks(
      scale_rows(enc.source_embed_stack, cols_to_stacked(attn_weights)), enc.positions);
  Var<Scalar> f_lex = tanh(avg);
  Var<Scalar> pre = matmul(f_lex, p.lex_hidden);
  if (p.layer_norm) pre = layer_norm(pre, p.lex_ln_gain, p.lex_ln_bias, ln_eps);
  Var<Scalar> hidden = add(tanh(pre), f_lex);
  if (dropout)
    hidden = detail::maybe_mask(hidden, dropout->hidden_mask(hidden.rows(), hidden.cols()));
  LexicalResult<Scalar> result;
  result.hidden = hidden;
  result.logit_terms = add_bias(matmul(hidden, p.lex_out), p.lex_bias);
  result.attention_node = attn_weights.id;
  return result;
}

// -- Decoder step -----------------------------------------------------------------------

template <typename Scalar>
struct DecoderStepResult {
  std::vector<Var<Scalar>> states;  // next state per layer (base first)
  Var<Scalar> attention_weights;    // (B x S)
  Var<Scalar> context;              // (B x 2H)
  Var<Scalar> readout;              // h^o, (B x E)
  Var<Scalar> logits;               // (B x V)
  int32_t attention_node = -1;          // instrumentation: id of the weights node
  int32_t lexical_attention_node = -1;  // id consumed by the lexical path
};

// One conditional-GRU step: transition 1 reads the previous target embedding,
// attention runs off that intermediate state, transition 2 consumes the
// context, further base transitions are input-less, then the high layers and
// the deep-output readout.
template <typename Scalar>
DecoderStepResult<Scalar> decoder_step(const BoundParams<Scalar>& p, const ModelConfig& cfg,
                                       const std::vector<int32_t>& prev_ids,
                                       const std::vector<Var<Scalar>>& states,
                                       const EncoderStates<Scalar>& enc,
                                       std::type_identity_t<DropoutSampler<Scalar>*> dropout) {
  const Scalar eps = static_cast<Scalar>(cfg.layer_norm_eps);
  const Eigen::Index batch = enc.batch;
  if (states.size() != 1 + p.decoder_high.size())
    throw TensorError("decoder_step: expected " + std::to_string(1 + p.decoder_high.size()) +
                      " layer states, got " + std::to_string(states.size()));

  std::vector<int32_t> ids = prev_ids;
  for (auto& id : ids)
    if (id < 0 || id >= cfg.tgt_vocab_size) id = TokenDict::kUnk;
  Var<Scalar> embed = embedding_rows(p.tgt_embed, ids);
  if (dropout) {
    embed = detail::maybe_mask(embed, dropout->target_word_mask(batch, cfg.embedding_size));
    embed = detail::maybe_mask(embed, dropout->embedding_mask(batch, cfg.embedding_size));
  }

  DecoderStepResult<Scalar> result;
  Var<Scalar> s1 = gru_cell(p.decoder_base[0], std::optional(embed), states[0], eps);
  AttentionResult<Scalar> attn = attention(p, s1, enc);
  result.attention_weights = attn.weights;
  result.context = attn.context;
  result.attention_node = attn.weights.id;

  Var<Scalar> state = gru_cell(p.decoder_base[1], std::optional(attn.context), s1, eps);
  for (size_t t = 2; t < p.decoder_base.size(); ++t)
    state = gru_cell(p.decoder_base[t], std::nullopt, state, eps);

  std::vector<Var<Scalar>> next_states;
  next_states.push_back(state);
  Var<Scalar> below = state;
  for (size_t l = 0; l < p.decoder_high.size(); ++l) {
    Var<Scalar> out = deep_transition(p.decoder_high[l], std::optional(below), states[l + 1], eps);
    next_states.push_back(out);
    below = out;
  }
  result.states = next_states;

  Var<Scalar> top = next_states.back();
  Var<Scalar> readout = tanh(add(add(matmul(top, p.readout_state), matmul(embed, p.readout_embed)),
                                 matmul(attn.context, p.readout_context)));
  if (dropout)
    readout = detail::maybe_mask(readout, dropout->hidden_mask(batch, cfg.embedding_size));
  result.readout = readout;

  Var<Scalar> logits = p.tied ? matmul_nt(readout, p.tgt_embed) : matmul(readout, p.out_weight);
  logits = add_bias(logits, p.out_bias);
  if (p.lexical) {
    LexicalResult<Scalar> lex = lexical_model(p, attn.weights, enc, eps, dropout);
    result.lexical_attention_node = lex.attention_node;
    logits = add(logits, lex.logit_terms);
  }
  result.logits = logits;
  return result;
}

// Fresh per-layer start states for a batch.
template <typename Scalar>
std::vector<Var<Scalar>> initial_decoder_states(Tape<Scalar>& tape, const BoundParams<Scalar>& p,
                                                const EncoderStates<Scalar>& enc) {
  Var<Scalar> init = init_decoder_state(tape, p, enc);
  std::vector<Var<Scalar>> states(1 + p.decoder_high.size(), init);
  return states;
}

}  // namespace lowmt

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "lowmt/checkpoint.hpp"
#include "lowmt/gradcheck.hpp"
#include "lowmt/model.hpp"
#include "lowmt/train.hpp"

using namespace lowmt;
using Mat = MatX<double>;

static ModelConfig tiny_config(int vocab = 12, int hidden = 6, int emb = 4) {
  ModelConfig cfg;
  cfg.hidden_size = hidden;
  cfg.embedding_size = emb;
  cfg.src_vocab_size = vocab;
  cfg.tgt_vocab_size = vocab;
  return cfg;
}

// Reference GRU evaluation with plain Eigen math, independent of the tape.
static Eigen::RowVectorXd gru_ref(const GruCellT<Mat>& w, const Eigen::RowVectorXd* x,
                                  const Eigen::RowVectorXd& h) {
  auto sig = [](Eigen::RowVectorXd v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 1.0 / (1.0 + std::exp(-v(i)));
    return v;
  };
  Eigen::RowVectorXd pre_z = h * w.u_update + w.b_update.row(0);
  Eigen::RowVectorXd pre_r = h * w.u_reset + w.b_reset.row(0);
  if (x) {
    pre_z += *x * w.w_update;
    pre_r += *x * w.w_reset;
  }
  Eigen::RowVectorXd z = sig(pre_z), r = sig(pre_r);
  Eigen::RowVectorXd pre_c = (r.cwiseProduct(h)) * w.u_cand + w.b_cand.row(0);
  if (x) pre_c += *x * w.w_cand;
  Eigen::RowVectorXd cand = pre_c.array().tanh();
  return (1.0 - z.array()) * h.array() + z.array() * cand.array();
}

TEST_CASE("gru_cell with zero weights halves the state") {
  ModelConfig cfg = tiny_config();
  ModelParams<double> params = allocate_params<double>(cfg);  // all-zero weights
  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  Mat h0 = Mat::Random(2, cfg.hidden_size);
  Var<double> h = tape.leaf(h0);
  Var<double> x = tape.leaf(Mat::Random(2, cfg.embedding_size));
  Var<double> out = gru_cell(bound.decoder_base[0], std::optional(x), h, 1e-5);
  CHECK((out.value() - 0.5 * h0).cwiseAbs().maxCoeff() < 1e-12);

  Var<double> zero_h = tape.leaf(Mat::Zero(1, cfg.hidden_size));
  Var<double> zero_x = tape.leaf(Mat::Zero(1, cfg.embedding_size));
  Var<double> out0 = gru_cell(bound.decoder_base[0], std::optional(zero_x), zero_h, 1e-5);
  CHECK(out0.value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gru_cell matches the reference evaluation") {
  ModelConfig cfg = tiny_config();
  ModelParams<double> params = init_params<double>(cfg, 31);
  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  Rng rng(5);
  Mat h0(1, cfg.hidden_size), x0(1, cfg.embedding_size);
  for (Eigen::Index i = 0; i < h0.cols(); ++i) h0(0, i) = rng.normal();
  for (Eigen::Index i = 0; i < x0.cols(); ++i) x0(0, i) = rng.normal();

  Var<double> out = gru_cell(bound.decoder_base[0], std::optional(tape.leaf(x0)),
                             tape.leaf(h0), 1e-5);
  Eigen::RowVectorXd xr = x0.row(0), hr = h0.row(0);
  Eigen::RowVectorXd ref = gru_ref(params.decoder_base[0], &xr, hr);
  CHECK((out.value().row(0) - ref).cwiseAbs().maxCoeff() < 1e-12);

  // Input-less transition cell.
  Var<double> out2 = gru_cell(bound.decoder_base[1], std::nullopt, tape.leaf(h0), 1e-5);
  // decoder_base[1] consumes the context in the real model; as a pure-GRU
  // reference we drop its input terms entirely.
  GruCellT<Mat> pure = params.decoder_base[1];
  Eigen::RowVectorXd ref2 = gru_ref(pure, nullptr, hr);
  // gru_cell with nullopt must ignore input projections even if they exist.
  CHECK((out2.value().row(0) - ref2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("init_params determinism, gains, and orthogonality") {
  ModelConfig cfg = tiny_config();
  cfg.layer_norm = true;
  cfg.tie_decoder_embeddings = true;
  ModelParams<float> a = init_params<float>(cfg, 99);
  ModelParams<float> b = init_params<float>(cfg, 99);
  ModelParams<float> c = init_params<float>(cfg, 100);
  bool all_equal = true, any_diff_seed = false;
  std::vector<MatX<float>*> av, bv, cv;
  a.visit([&](const std::string&, MatX<float>& m) { av.push_back(&m); });
  b.visit([&](const std::string&, MatX<float>& m) { bv.push_back(&m); });
  c.visit([&](const std::string&, MatX<float>& m) { cv.push_back(&m); });
  for (size_t i = 0; i < av.size(); ++i) {
    if (*av[i] != *bv[i]) all_equal = false;
    if ((*av[i] - *cv[i]).cwiseAbs().maxCoeff() > 0) any_diff_seed = true;
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);

  a.visit([&](const std::string& name, MatX<float>& m) {
    if (name.find("ln_gain") != std::string::npos)
      CHECK(m.minCoeff() == 1.0f);
    if (name.find(".b_") != std::string::npos)
      CHECK(m.cwiseAbs().maxCoeff() == 0.0f);
    if (name.find(".u_") != std::string::npos) {
      MatX<float> gram = m.transpose() * m;
      MatX<float> eye = MatX<float>::Identity(m.cols(), m.cols());
      CHECK((gram - eye).cwiseAbs().maxCoeff() < 1e-5f);
    }
  });
}

TEST_CASE("encode produces 2H-wide annotations per position") {
  ModelConfig cfg = tiny_config(12, 8, 4);
  ModelParams<double> params = init_params<double>(cfg, 1);
  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  std::vector<std::vector<int32_t>> src = {{4, 5, 6, 7, 8}};
  EncoderStates<double> enc = encode(tape, bound, cfg, src, nullptr);
  CHECK(enc.positions == 6);  // 5 tokens + EOS
  CHECK(enc.annotations.size() == 6);
  for (const auto& h : enc.annotations) {
    CHECK(h.rows() == 1);
    CHECK(h.cols() == 16);
  }
  CHECK(enc.mask.sum() == 6.0);
}

TEST_CASE("single-layer single-transition encoder matches a plain GRU") {
  ModelConfig cfg = tiny_config(12, 5, 3);
  cfg.encoder_depth = 1;
  cfg.encoder_transition_depth = 1;
  ModelParams<double> params = init_params<double>(cfg, 77);
  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  std::vector<int32_t> sent = {4, 9, 6, 11};
  EncoderStates<double> enc = encode(tape, bound, cfg, {sent}, nullptr);

  // Reference: embeddings (with EOS appended), one forward and one backward GRU.
  std::vector<int32_t> with_eos = sent;
  with_eos.push_back(TokenDict::kEos);
  size_t n = with_eos.size();
  std::vector<Eigen::RowVectorXd> embeds(n);
  for (size_t s = 0; s < n; ++s) embeds[s] = params.src_embed.row(with_eos[s]);
  std::vector<Eigen::RowVectorXd> fwd(n), bwd(n);
  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(cfg.hidden_size);
  for (size_t s = 0; s < n; ++s) {
    h = gru_ref(params.encoder[0].forward[0], &embeds[s], h);
    fwd[s] = h;
  }
  h = Eigen::RowVectorXd::Zero(cfg.hidden_size);
  for (size_t s = n; s-- > 0;) {
    h = gru_ref(params.encoder[0].backward[0], &embeds[s], h);
    bwd[s] = h;
  }
  for (size_t s = 0; s < n; ++s) {
    Eigen::RowVectorXd got = enc.annotations[s].value().row(0);
    CHECK((got.leftCols(cfg.hidden_size) - fwd[s]).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((got.rightCols(cfg.hidden_size) - bwd[s]).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("backward annotations equal a forward reference over the reversed source") {
  ModelConfig cfg = tiny_config(12, 5, 3);
  cfg.encoder_transition_depth = 2;
  ModelParams<double> params = init_params<double>(cfg, 13);
  std::vector<int32_t> sent = {4, 9, 6, 11, 5};

  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  EncoderStates<double> enc = encode(tape, bound, cfg, {sent}, nullptr);

  // Reference: run the backward cells as a plain forward deep-transition GRU
  // over the reversed embedding sequence (EOS included).
  std::vector<int32_t> ext = sent;
  ext.push_back(TokenDict::kEos);
  size_t n = ext.size();
  std::vector<Eigen::RowVectorXd> states(n);
  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(cfg.hidden_size);
  for (size_t k = 0; k < n; ++k) {
    Eigen::RowVectorXd x = params.src_embed.row(ext[n - 1 - k]);
    h = gru_ref(params.encoder[0].backward[0], &x, h);
    h = gru_ref(params.encoder[0].backward[1], nullptr, h);
    states[k] = h;
  }
  for (size_t s = 0; s < n; ++s) {
    Eigen::RowVectorXd got =
        enc.annotations[s].value().row(0).rightCols(cfg.hidden_size);
    CHECK((got - states[n - 1 - s]).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("init_decoder_state from mean annotation") {
  ModelConfig cfg = tiny_config(12, 4, 3);
  ModelParams<double> params = init_params<double>(cfg, 3);

  // Zero init matrix gives a zero state.
  ModelParams<double> zero = params;
  zero.init_state.setZero();
  {
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, zero);
    EncoderStates<double> enc = encode(tape, bound, cfg, {{4, 5, 6}}, nullptr);
    Var<double> s0 = init_decoder_state(tape, bound, enc);
    CHECK(s0.value().cwiseAbs().maxCoeff() == 0.0);
  }
  // Single-position source: mean equals that annotation.
  {
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, params);
    std::vector<std::vector<int32_t>> one_token = {{7}};
    // One real token plus EOS gives two positions; use the actual mean.
    EncoderStates<double> enc = encode(tape, bound, cfg, one_token, nullptr);
    Var<double> s0 = init_decoder_state(tape, bound, enc);
    Mat mean = (enc.annotations[0].value() + enc.annotations[1].value()) / 2.0;
    Mat expect = (mean * params.init_state).array().tanh();
    CHECK((s0.value() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("attention basics") {
  ModelConfig cfg = tiny_config(12, 4, 3);
  ModelParams<double> params = init_params<double>(cfg, 21);
  {
    // Single real position: with an empty-ish sentence the mask still covers
    // the EOS slot; use a sentence of length zero is invalid, so craft a
    // one-position case by masking manually below through a 0-length check.
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, params);
    EncoderStates<double> enc = encode(tape, bound, cfg, {{5}}, nullptr);
    Var<double> state = tape.leaf(Mat::Random(1, cfg.hidden_size));
    AttentionResult<double> attn = attention(bound, state, enc);
    CHECK(attn.weights.value().sum() == doctest::Approx(1.0));
  }
  {
    // Zero score vector: uniform weights over unmasked positions.
    ModelParams<double> uniform = params;
    uniform.attn_score.setZero();
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, uniform);
    EncoderStates<double> enc = encode(tape, bound, cfg, {{5, 6, 7}}, nullptr);
    Var<double> state = tape.leaf(Mat::Random(1, cfg.hidden_size));
    AttentionResult<double> attn = attention(bound, state, enc);
    for (Eigen::Index s = 0; s < enc.positions; ++s)
      CHECK(attn.weights.value()(0, s) == doctest::Approx(1.0 / enc.positions));
  }
  {
    // Numeric check against the additive-score formula.
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, params);
    EncoderStates<double> enc = encode(tape, bound, cfg, {{5, 6}}, nullptr);
    Mat state = Mat::Random(1, cfg.hidden_size);
    AttentionResult<double> attn = attention(bound, tape.leaf(state), enc);
    Eigen::VectorXd scores(enc.positions);
    for (Eigen::Index s = 0; s < enc.positions; ++s) {
      Eigen::RowVectorXd pre = state.row(0) * params.attn_query +
                               enc.annotations[s].value().row(0) * params.attn_key;
      scores(s) = (pre.array().tanh().matrix() * params.attn_score)(0, 0);
    }
    Eigen::VectorXd w = (scores.array() - scores.maxCoeff()).exp();
    w /= w.sum();
    Eigen::RowVectorXd ctx = Eigen::RowVectorXd::Zero(2 * cfg.hidden_size);
    for (Eigen::Index s = 0; s < enc.positions; ++s)
      ctx += w(s) * enc.annotations[s].value().row(0);
    for (Eigen::Index s = 0; s < enc.positions; ++s)
      CHECK(attn.weights.value()(0, s) == doctest::Approx(w(s)).epsilon(1e-10));
    CHECK((attn.context.value().row(0) - ctx).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("masked source positions get exactly zero attention") {
  ModelConfig cfg = tiny_config(12, 4, 3);
  ModelParams<double> params = init_params<double>(cfg, 8);
  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  // Batch with unequal lengths: the short sentence has padded positions.
  EncoderStates<double> enc = encode(tape, bound, cfg, {{4, 5, 6, 7}, {4}}, nullptr);
  Var<double> state = tape.leaf(Mat::Random(2, cfg.hidden_size));
  AttentionResult<double> attn = attention(bound, state, enc);
  for (Eigen::Index s = 0; s < enc.positions; ++s) {
    if (enc.mask(1, s) == 0.0) CHECK(attn.weights.value()(1, s) == 0.0);
  }
  CHECK(attn.weights.value().row(1).sum() == doctest::Approx(1.0));
}

TEST_CASE("lexical model equations") {
  ModelConfig cfg = tiny_config(12, 4, 2);
  cfg.lexical_model = true;
  ModelParams<double> params = init_params<double>(cfg, 17);

  auto make_enc = [&](Tape<double>& tape, const Mat& embeds) {
    EncoderStates<double> enc;
    enc.batch = 1;
    enc.positions = embeds.rows();
    enc.mask = MatX<double>::Ones(1, embeds.rows());
    enc.source_embed_stack = tape.leaf(embeds);
    return enc;
  };

  {
    // One-hot attention collapses the average to a single source embedding.
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, params);
    Mat embeds = Mat::Random(3, cfg.embedding_size);
    EncoderStates<double> enc = make_enc(tape, embeds);
    Mat onehot(1, 3);
    onehot << 0, 1, 0;
    LexicalResult<double> lex =
        lexical_model(bound, tape.leaf(onehot), enc, 1e-5, nullptr);
    Mat f = embeds.row(1).array().tanh();
    // With W the identity-free random init, verify through the full equation.
    Mat pre = f * params.lex_hidden;
    Mat expect = pre.array().tanh() + f.array();
    CHECK((lex.hidden.value() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  {
    // W = 0: pure skip connection.
    ModelParams<double> zero = params;
    zero.lex_hidden.setZero();
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, zero);
    Mat embeds = Mat::Random(2, cfg.embedding_size);
    EncoderStates<double> enc = make_enc(tape, embeds);
    Mat weights(1, 2);
    weights << 0.25, 0.75;
    LexicalResult<double> lex =
        lexical_model(bound, tape.leaf(weights), enc, 1e-5, nullptr);
    Mat f = (0.25 * embeds.row(0) + 0.75 * embeds.row(1)).array().tanh();
    CHECK((lex.hidden.value() - f).cwiseAbs().maxCoeff() < 1e-12);
  }
  {
    // Two-position, two-dimensional hand evaluation of all three equations.
    ModelConfig small = tiny_config(6, 3, 2);
    small.lexical_model = true;
    ModelParams<double> p2 = allocate_params<double>(small);
    p2.lex_hidden << 0.5, -0.25, 0.1, 0.3;
    p2.lex_out = Mat::Constant(2, 6, 0.125);
    p2.lex_bias = Mat::Constant(1, 6, -0.5);
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, p2);
    Mat embeds(2, 2);
    embeds << 0.2, -0.4, 0.6, 0.8;
    EncoderStates<double> enc = make_enc(tape, embeds);
    Mat weights(1, 2);
    weights << 0.3, 0.7;
    LexicalResult<double> lex =
        lexical_model(bound, tape.leaf(weights), enc, 1e-5, nullptr);
    Eigen::RowVector2d avg = 0.3 * embeds.row(0) + 0.7 * embeds.row(1);
    Eigen::RowVector2d f = avg.array().tanh();
    Eigen::RowVector2d h = (f * p2.lex_hidden).array().tanh() + f.array();
    CHECK((lex.hidden.value().row(0) - h).cwiseAbs().maxCoeff() < 1e-9);
    Eigen::RowVectorXd logits = h * p2.lex_out + p2.lex_bias.row(0);
    CHECK((lex.logit_terms.value().row(0) - logits).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("decoder_step distribution sums to one and shares attention") {
  ModelConfig cfg = tiny_config(12, 6, 4);
  cfg.lexical_model = true;
  ModelParams<double> params = init_params<double>(cfg, 55);
  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  EncoderStates<double> enc = encode(tape, bound, cfg, {{4, 5, 6}, {7, 8}}, nullptr);
  std::vector<Var<double>> states = initial_decoder_states(tape, bound, enc);
  DecoderStepResult<double> out =
      decoder_step(bound, cfg, {TokenDict::kBos, TokenDict::kBos}, states, enc, nullptr);
  Var<double> probs = softmax(out.logits, 1);
  for (Eigen::Index b = 0; b < 2; ++b)
    CHECK(probs.value().row(b).sum() == doctest::Approx(1.0).epsilon(1e-6));
  // Instrumentation: the lexical path consumed the very attention node the
  // step produced, not a recomputation.
  CHECK(out.attention_node == out.lexical_attention_node);
  CHECK(out.attention_node >= 0);
}

TEST_CASE("tied embeddings reproduce an untied model with transposed weights") {
  ModelConfig untied_cfg = tiny_config(10, 5, 4);
  ModelConfig tied_cfg = untied_cfg;
  tied_cfg.tie_decoder_embeddings = true;

  ModelParams<double> untied = init_params<double>(untied_cfg, 7);
  ModelParams<double> tied = allocate_params<double>(tied_cfg);
  // Copy shared tensors by name.
  std::map<std::string, Mat*> src;
  untied.visit([&](const std::string& n, Mat& m) { src.emplace(n, &m); });
  tied.visit([&](const std::string& n, Mat& m) {
    auto it = src.find(n);
    REQUIRE(it != src.end());
    m = *it->second;
  });
  untied.out_weight = untied.tgt_embed.transpose();

  CHECK(tied.tensor_count() == untied.tensor_count() - 1);

  auto logits_of = [&](ModelParams<double>& p, const ModelConfig& cfg) {
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, p);
    EncoderStates<double> enc = encode(tape, bound, cfg, {{4, 5, 6}}, nullptr);
    std::vector<Var<double>> states = initial_decoder_states(tape, bound, enc);
    DecoderStepResult<double> out =
        decoder_step(bound, cfg, {TokenDict::kBos}, states, enc, nullptr);
    return Mat(out.logits.value());
  };
  Mat a = logits_of(tied, tied_cfg);
  Mat b = logits_of(untied, untied_cfg);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("lexical logits equal a zeroed lexical path when disabled") {
  ModelConfig off_cfg = tiny_config(10, 5, 4);
  ModelConfig on_cfg = off_cfg;
  on_cfg.lexical_model = true;

  ModelParams<double> off = init_params<double>(off_cfg, 4);
  ModelParams<double> on = allocate_params<double>(on_cfg);
  std::map<std::string, Mat*> src;
  off.visit([&](const std::string& n, Mat& m) { src.emplace(n, &m); });
  on.visit([&](const std::string& n, Mat& m) {
    auto it = src.find(n);
    if (it != src.end()) m = *it->second;
  });
  // Lexical output weights zero: contribution vanishes, logits must match.
  on.lex_hidden = Mat::Random(4, 4);
  on.lex_out = Mat::Zero(4, 10);
  on.lex_bias = Mat::Zero(1, 10);

  auto logits_of = [&](ModelParams<double>& p, const ModelConfig& cfg) {
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, p);
    EncoderStates<double> enc = encode(tape, bound, cfg, {{4, 5}}, nullptr);
    std::vector<Var<double>> states = initial_decoder_states(tape, bound, enc);
    DecoderStepResult<double> out =
        decoder_step(bound, cfg, {TokenDict::kBos}, states, enc, nullptr);
    return Mat(out.logits.value());
  };
  CHECK((logits_of(on, on_cfg) - logits_of(off, off_cfg)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("checkpoint round trip is bit exact") {
  ModelConfig cfg = tiny_config(16, 6, 4);
  cfg.layer_norm = true;
  cfg.tie_decoder_embeddings = true;
  cfg.lexical_model = true;
  ModelParams<float> params = init_params<float>(cfg, 12);
  TokenDict dict = build_dict({{"aa", "bb"}, {"aa", "cc"}});
  std::string path = "ckpt_roundtrip.tmp";
  save_checkpoint(params, cfg, dict, dict, path);
  Checkpoint ck = load_checkpoint(path);

  CHECK(ck.config.hidden_size == cfg.hidden_size);
  CHECK(ck.config.lexical_model == cfg.lexical_model);
  CHECK(ck.src_dict.id_to_token == dict.id_to_token);
  std::vector<MatX<float>*> a, b;
  params.visit([&](const std::string&, MatX<float>& m) { a.push_back(&m); });
  ck.params.visit([&](const std::string&, MatX<float>& m) { b.push_back(&m); });
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint corruption yields distinct errors") {
  ModelConfig cfg = tiny_config(8, 4, 3);
  ModelParams<float> params = init_params<float>(cfg, 2);
  TokenDict dict = build_dict({{"x"}});
  std::string path = "ckpt_corrupt.tmp";
  save_checkpoint(params, cfg, dict, dict, path);

  // Bad magic.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXXXXXX", 8);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), CheckpointError);

  // Version mismatch.
  save_checkpoint(params, cfg, dict, dict, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    char v[4] = {99, 0, 0, 0};
    f.write(v, 4);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), CheckpointError);

  // Truncation.
  save_checkpoint(params, cfg, dict, dict, path);
  {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), CheckpointError);
  std::remove(path.c_str());
}

TEST_CASE("full model gradient check at desk dimensions") {
  ModelConfig cfg;
  cfg.hidden_size = 8;
  cfg.embedding_size = 6;
  cfg.src_vocab_size = 15;
  cfg.tgt_vocab_size = 15;
  cfg.encoder_depth = 1;
  cfg.encoder_transition_depth = 2;
  cfg.decoder_transition_base = 2;
  cfg.tie_decoder_embeddings = true;
  cfg.layer_norm = true;
  cfg.lexical_model = true;
  cfg.label_smoothing = 0.1;
  cfg.dropout_hidden = 0.2;
  cfg.dropout_embedding = 0.2;
  cfg.dropout_source_word = 0.1;
  cfg.dropout_target_word = 0.1;

  ModelParams<double> params = init_params<double>(cfg, 40);
  std::vector<std::vector<int32_t>> src = {{4, 5, 6}, {7, 8}, {9, 10, 11, 12}};
  std::vector<std::vector<int32_t>> tgt = {{5, 6}, {7, 8, 9}, {10}};

  auto eval = [&]() {
    Tape<double> tape;
    BoundParams<double> bound = bind_params(tape, params);
    TrainingDropout<double> dropout(cfg, 123, 0);  // same seed: fixed masks
    Var<double> loss = sequence_loss(tape, bound, cfg, src, tgt, &dropout);
    return loss.value()(0, 0);
  };

  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  TrainingDropout<double> dropout(cfg, 123, 0);
  Var<double> loss = sequence_loss(tape, bound, cfg, src, tgt, &dropout);
  tape.backward(loss);
  std::vector<Mat> analytic = collect_gradients(tape, bound);

  std::vector<std::pair<std::string, Mat*>> named;
  params.visit([&](const std::string& n, Mat& m) { named.push_back({n, &m}); });
  GradCheckResult r = finite_difference_check(eval, named, analytic, 1e-5, 12, 9);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, "worst ", r.worst_param, " rel ", r.max_rel_error,
                " analytic ", r.analytic_at_worst, " numeric ", r.numeric_at_worst);
}

TEST_CASE("unknown ids map to UNK instead of crashing") {
  ModelConfig cfg = tiny_config(10, 4, 3);
  ModelParams<double> params = init_params<double>(cfg, 6);
  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params);
  EncoderStates<double> enc = encode(tape, bound, cfg, {{4, 900, -3}}, nullptr);
  CHECK(enc.positions == 4);
  std::vector<Var<double>> states = initial_decoder_states(tape, bound, enc);
  DecoderStepResult<double> out = decoder_step(bound, cfg, {500}, states, enc, nullptr);
  CHECK(out.logits.value().allFinite());
}

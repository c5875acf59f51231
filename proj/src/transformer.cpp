#include "omni/transformer.hpp"

#include <cmath>

namespace omni {

using ad::Var;

CausalTransformer::CausalTransformer(TransformerConfig cfg, uint64_t seed) : cfg_(cfg) {
  OMNI_CHECK(cfg_.d_model % cfg_.n_heads == 0, "d_model must divide by n_heads");
  Rng rng(seed);
  const double s = 0.02;
  params_.create("tok_emb", cfg_.vocab, cfg_.d_model, rng, s);
  params_.create("pos_emb", cfg_.max_seq, cfg_.d_model, rng, s);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    params_.create_const(p + "ln1.g", 1, cfg_.d_model, 1.0);
    params_.create_zero(p + "ln1.b", 1, cfg_.d_model);
    params_.create(p + "attn.wq", cfg_.d_model, cfg_.d_model, rng, s);
    params_.create(p + "attn.wk", cfg_.d_model, cfg_.d_model, rng, s);
    params_.create(p + "attn.wv", cfg_.d_model, cfg_.d_model, rng, s);
    params_.create(p + "attn.wo", cfg_.d_model, cfg_.d_model, rng, s);
    params_.create_zero(p + "attn.bo", 1, cfg_.d_model);
    params_.create_const(p + "ln2.g", 1, cfg_.d_model, 1.0);
    params_.create_zero(p + "ln2.b", 1, cfg_.d_model);
    params_.create(p + "mlp.w1", cfg_.d_model, cfg_.d_ff, rng, s);
    params_.create_zero(p + "mlp.b1", 1, cfg_.d_ff);
    params_.create(p + "mlp.w2", cfg_.d_ff, cfg_.d_model, rng, s);
    params_.create_zero(p + "mlp.b2", 1, cfg_.d_model);
  }
  params_.create_const("lnf.g", 1, cfg_.d_model, 1.0);
  params_.create_zero("lnf.b", 1, cfg_.d_model);
  params_.create("head.w", cfg_.d_model, cfg_.vocab, rng, s);
  params_.create_zero("head.b", 1, cfg_.vocab);
}

Var CausalTransformer::embed(ad::Tape& tape, const std::vector<int>& tokens, int pos0) {
  OMNI_CHECK(pos0 + static_cast<int>(tokens.size()) <= cfg_.max_seq,
             "sequence exceeds max_seq");
  Var tab = tape.param(params_, "tok_emb");
  Var rows = ad::gather_rows(tab, tokens);
  return add_positions(tape, rows, pos0);
}

Var CausalTransformer::add_positions(ad::Tape& tape, Var rows, int pos0) {
  OMNI_CHECK(pos0 + rows.rows() <= cfg_.max_seq, "sequence exceeds max_seq");
  Var pos = tape.param(params_, "pos_emb");
  Var slice = ad::slice_rows(pos, pos0, rows.rows());
  return ad::add(rows, slice);
}

CausalTransformer::Output CausalTransformer::forward(ad::Tape& tape, Var input) const {
  OMNI_CHECK(input.rows() >= 1, "forward: empty input");
  OMNI_CHECK(input.cols() == cfg_.d_model, "forward: input width != d_model");
  OMNI_CHECK(all_finite(input.val()), "forward: non-finite input");
  const int dh = cfg_.d_model / cfg_.n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  Var x = input;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Var xn = ad::layernorm(x, tape.param(params_, p + "ln1.g"),
                           tape.param(params_, p + "ln1.b"));
    Var q = ad::matmul(xn, tape.param(params_, p + "attn.wq"));
    Var k = ad::matmul(xn, tape.param(params_, p + "attn.wk"));
    Var v = ad::matmul(xn, tape.param(params_, p + "attn.wv"));
    std::vector<Var> heads;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      Var qh = ad::slice_cols(q, h * dh, dh);
      Var kh = ad::slice_cols(k, h * dh, dh);
      Var vh = ad::slice_cols(v, h * dh, dh);
      Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dh);
      Var probs = ad::causal_softmax(scores);
      heads.push_back(ad::matmul(probs, vh));
    }
    Var attn = ad::concat_cols(heads);
    Var proj = ad::linear(attn, tape.param(params_, p + "attn.wo"),
                          tape.param(params_, p + "attn.bo"));
    x = ad::add(x, proj);
    Var xn2 = ad::layernorm(x, tape.param(params_, p + "ln2.g"),
                            tape.param(params_, p + "ln2.b"));
    Var h1 = ad::gelu(ad::linear(xn2, tape.param(params_, p + "mlp.w1"),
                                 tape.param(params_, p + "mlp.b1")));
    Var h2 = ad::linear(h1, tape.param(params_, p + "mlp.w2"),
                        tape.param(params_, p + "mlp.b2"));
    x = ad::add(x, h2);
  }
  Var hidden = ad::layernorm(x, tape.param(params_, "lnf.g"), tape.param(params_, "lnf.b"));
  Var logits = ad::linear(hidden, tape.param(params_, "head.w"), tape.param(params_, "head.b"));
  return {logits, hidden};
}

std::pair<Mat, Mat> CausalTransformer::forward_values(const Mat& input_with_positions) const {
  ad::Tape tape;
  Var in = tape.var(input_with_positions);
  Output out = forward(tape, in);
  return {out.logits.val(), out.hidden.val()};
}

int sample_token(const Eigen::RowVectorXd& logits, const DecodeConfig& cfg, Rng& rng) {
  if (cfg.greedy) {
    Eigen::Index best;
    logits.maxCoeff(&best);
    return static_cast<int>(best);
  }
  OMNI_CHECK(cfg.temperature > 0, "temperature must be positive");
  Eigen::ArrayXd z = logits.array() / cfg.temperature;
  z -= z.maxCoeff();
  Eigen::ArrayXd p = z.exp();
  p /= p.sum();
  double u = rng.uniform();
  double acc = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p(i);
    if (u <= acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace omni

#include "omni/role_speech_decoder.hpp"

#include <cmath>
#include <unordered_map>

namespace omni {

using ad::Var;

double speech_loss_value(const Mat& logits, const std::vector<int>& targets) {
  OMNI_CHECK(!targets.empty(), "speech_loss: empty targets");
  ad::Tape tape;
  Var z = tape.var(logits);
  std::vector<uint8_t> mask(targets.size(), 1);
  return ad::xent_mean(z, targets, mask).val()(0, 0);
}

double repetition_rate(const std::vector<int>& tokens, int n) {
  OMNI_CHECK(n >= 1, "repetition_rate: n must be positive");
  OMNI_CHECK(static_cast<int>(tokens.size()) >= n, "repetition_rate: sequence shorter than n");
  const size_t n_grams = tokens.size() - static_cast<size_t>(n) + 1;
  std::unordered_map<uint64_t, int> seen;
  size_t duplicates = 0;
  for (size_t i = 0; i < n_grams; ++i) {
    uint64_t h = fnv1a(tokens.data() + i, sizeof(int) * static_cast<size_t>(n));
    if (seen.count(h)) ++duplicates;
    seen[h] = 1;
  }
  return static_cast<double>(duplicates) / static_cast<double>(n_grams);
}

RoleSpeechDecoder::RoleSpeechDecoder(int d_context, int v_speech,
                                     TransformerConfig speech_cfg, uint64_t seed)
    : v_speech_(v_speech), lm_((speech_cfg.vocab = v_speech + 2, speech_cfg), seed) {
  OMNI_CHECK(v_speech >= 2, "v_speech must be at least 2");
  Rng rng(seed + 1);
  proj_.create("phi.w", d_context, lm_.config().d_model,
               rng, 1.0 / std::sqrt(static_cast<double>(d_context)));
  proj_.create_zero("phi.b", 1, lm_.config().d_model);
}

Var RoleSpeechDecoder::project_var(ad::Tape& tape, Var context_states) const {
  OMNI_CHECK(all_finite(context_states.val()), "project: non-finite context");
  OMNI_CHECK(context_states.cols() == proj_.at("phi.w").rows(),
             "project: context width " + std::to_string(context_states.cols()) +
                 ", expected " + std::to_string(proj_.at("phi.w").rows()));
  return ad::linear(context_states, tape.param(proj_, "phi.w"), tape.param(proj_, "phi.b"));
}

ConditioningPrefix RoleSpeechDecoder::project_context(
    const ContextRepresentations& states) const {
  ad::Tape tape;
  Var out = project_var(tape, tape.var(states.states));
  return {out.val()};
}

Var RoleSpeechDecoder::loss_var(ad::Tape& tape, Var prefix_rows,
                                const std::vector<int>& targets) const {
  OMNI_CHECK(prefix_rows.rows() >= 1, "speech LM: empty conditioning prefix");
  OMNI_CHECK(!targets.empty(), "speech LM: empty targets");
  for (int t : targets)
    OMNI_CHECK(t >= 0 && t < v_speech_, "speech LM: target outside codebook");
  const Eigen::Index P = prefix_rows.rows();
  std::vector<int> input_tokens;
  input_tokens.push_back(lm_bos());
  input_tokens.insert(input_tokens.end(), targets.begin(), targets.end());
  Var tok_rows = ad::gather_rows(tape.param(lm_.params(), "tok_emb"), input_tokens);
  Var prefix_pos = lm_.add_positions(tape, prefix_rows, 0);
  Var tok_pos = lm_.add_positions(tape, tok_rows, static_cast<int>(P));
  Var input = ad::concat_rows({prefix_pos, tok_pos});
  auto out = lm_.forward(tape, input);
  // Position P+i predicts targets[i]; the last token position predicts EOS.
  std::vector<int> shifted(static_cast<size_t>(P), 0);
  std::vector<uint8_t> mask(static_cast<size_t>(P), 0);
  for (int t : targets) {
    shifted.push_back(t);
    mask.push_back(1);
  }
  shifted.push_back(lm_eos());
  mask.push_back(1);
  return ad::xent_mean(out.logits, shifted, mask);
}

std::vector<int> RoleSpeechDecoder::predict_speech_tokens(
    const Mat& prefix_rows, const DecodeConfig& cfg,
    const std::function<void(int)>& on_token) const {
  OMNI_CHECK(prefix_rows.rows() >= 1, "predict_speech_tokens: empty prefix");
  OMNI_CHECK(cfg.max_len > 0, "predict_speech_tokens: max_len must be positive");
  Rng rng(cfg.seed);
  std::vector<int> generated;
  while (static_cast<int>(generated.size()) < cfg.max_len) {
    Eigen::RowVectorXd logits = next_token_logits(prefix_rows, generated);
    DecodeConfig step = cfg;
    int next = sample_token(logits, step, rng);
    if (next >= v_speech_) break;  // EOS or BOS id ends generation
    generated.push_back(next);
    if (on_token) on_token(next);
  }
  return generated;
}

Eigen::RowVectorXd RoleSpeechDecoder::next_token_logits(
    const Mat& prefix_rows, const std::vector<int>& prev) const {
  OMNI_CHECK(prefix_rows.rows() >= 1, "speech LM: empty conditioning prefix");
  ad::Tape tape;
  std::vector<int> input_tokens;
  input_tokens.push_back(lm_bos());
  input_tokens.insert(input_tokens.end(), prev.begin(), prev.end());
  Var tok_rows = ad::gather_rows(tape.param(lm_.params(), "tok_emb"), input_tokens);
  Var prefix_pos = lm_.add_positions(tape, tape.var(prefix_rows), 0);
  Var tok_pos = lm_.add_positions(tape, tok_rows, static_cast<int>(prefix_rows.rows()));
  auto out = lm_.forward(tape, ad::concat_rows({prefix_pos, tok_pos}));
  return out.logits.val().row(out.logits.rows() - 1);
}

}  // namespace omni

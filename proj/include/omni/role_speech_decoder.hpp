#ifndef OMNI_ROLE_SPEECH_DECODER_HPP
#define OMNI_ROLE_SPEECH_DECODER_HPP

#include <functional>
#include <vector>

#include "omni/language_core.hpp"
#include "omni/transformer.hpp"

namespace omni {

// phi(H): per-row affine map into the speech LM width.
struct ConditioningPrefix {
  Mat rows;  // (N_s + N_t) x d_speechlm
};

// Mean NLL over speech-token positions; logits rows must already exclude
// the conditioning prefix.
double speech_loss_value(const Mat& logits, const std::vector<int>& targets);

// Fraction of n-grams that exactly duplicate an earlier n-gram.
double repetition_rate(const std::vector<int>& tokens, int n);

// Lightweight causal speech-token LM conditioned on a projected context
// prefix. Codebook ids are 0..V_speech-1; BOS/EOS live in internal ids.
class RoleSpeechDecoder {
 public:
  RoleSpeechDecoder(int d_context, int v_speech, TransformerConfig speech_cfg,
                    uint64_t seed);

  int v_speech() const { return v_speech_; }
  int d_speechlm() const { return lm_.config().d_model; }
  CausalTransformer& speech_lm() { return lm_; }
  const CausalTransformer& speech_lm() const { return lm_; }
  ad::ParamStore& projection_params() { return proj_; }
  const ad::ParamStore& projection_params() const { return proj_; }

  ad::Var project_var(ad::Tape& tape, ad::Var context_states) const;
  ConditioningPrefix project_context(const ContextRepresentations& states) const;

  // Teacher-forced loss over targets (codebook ids); prefix positions are
  // excluded from supervision.
  ad::Var loss_var(ad::Tape& tape, ad::Var prefix_rows,
                   const std::vector<int>& targets) const;

  // Greedy/temperature decoding conditioned on the prefix; tokens stream
  // through on_token as they are produced.
  std::vector<int> predict_speech_tokens(
      const Mat& prefix_rows, const DecodeConfig& cfg,
      const std::function<void(int token)>& on_token = nullptr) const;

  // Logits over the next token after `prev` given the prefix (used by
  // conditioning-sensitivity checks).
  Eigen::RowVectorXd next_token_logits(const Mat& prefix_rows,
                                       const std::vector<int>& prev) const;

 private:
  int lm_bos() const { return v_speech_; }
  int lm_eos() const { return v_speech_ + 1; }

  int v_speech_;
  mutable CausalTransformer lm_;
  mutable ad::ParamStore proj_;
};

}  // namespace omni

#endif  // OMNI_ROLE_SPEECH_DECODER_HPP

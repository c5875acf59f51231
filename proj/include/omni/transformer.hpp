#ifndef OMNI_TRANSFORMER_HPP
#define OMNI_TRANSFORMER_HPP

#include <string>
#include <vector>

#include "omni/autodiff.hpp"
#include "omni/common.hpp"

namespace omni {

struct TransformerConfig {
  int d_model = 256;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 512;
  int vocab = 2048;
  int max_seq = 512;
};

// Pre-norm decoder-only causal transformer over continuous input rows.
// Shared by the language core (text vocab) and the speech LM (token vocab).
class CausalTransformer {
 public:
  CausalTransformer(TransformerConfig cfg, uint64_t seed);

  const TransformerConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  // Token embedding rows plus positional rows starting at position pos0.
  ad::Var embed(ad::Tape& tape, const std::vector<int>& tokens, int pos0 = 0);

  // Adds positional rows to externally supplied embeddings (e.g. adapter
  // output or a conditioning prefix).
  ad::Var add_positions(ad::Tape& tape, ad::Var rows, int pos0 = 0);

  struct Output {
    ad::Var logits;  // L x vocab
    ad::Var hidden;  // L x d_model (final-layer states after last norm)
  };

  // input must already include positional information.
  Output forward(ad::Tape& tape, ad::Var input) const;

  // Convenience inference path: values only, no gradient use.
  std::pair<Mat, Mat> forward_values(const Mat& input_with_positions) const;

 private:
  TransformerConfig cfg_;
  mutable ad::ParamStore params_;
};

struct DecodeConfig {
  bool greedy = true;
  double temperature = 1.0;
  uint64_t seed = 0;
  int max_len = 64;
  int eos_id = -1;
};

// Samples the next token id from one logits row.
int sample_token(const Eigen::RowVectorXd& logits, const DecodeConfig& cfg, Rng& rng);

}  // namespace omni

#endif  // OMNI_TRANSFORMER_HPP

#ifndef OMNI_LANGUAGE_CORE_HPP
#define OMNI_LANGUAGE_CORE_HPP

#include <functional>
#include <vector>

#include "omni/tokenizer.hpp"
#include "omni/transformer.hpp"

namespace omni {

enum class ModalityTag { text, speech };

// Text embeddings with speech rows spliced in at placeholder positions.
struct EmbeddingSequence {
  Mat embeddings;  // L x d_model, no positional rows yet
  std::vector<ModalityTag> modality_mask;
};

// Final-layer hidden states H over the full text+speech input.
struct ContextRepresentations {
  Mat states;  // L x d_model
};

// Mean NLL over masked positions. targets[i] is the id the model should
// predict at position i (callers do the next-token shift).
double language_loss_value(const Mat& logits, const std::vector<int>& targets,
                           const std::vector<uint8_t>& loss_mask);

// The causal text model: embedding, splicing, forward, loss, generation.
class LanguageCore {
 public:
  LanguageCore(TransformerConfig cfg, uint64_t seed);

  CausalTransformer& model() { return model_; }
  const CausalTransformer& model() const { return model_; }
  int d_model() const { return model_.config().d_model; }

  // Replaces each speech-placeholder token with the matching speech
  // segment's rows. Segment count must equal placeholder count.
  EmbeddingSequence splice(const std::vector<int>& tokens,
                           const std::vector<Mat>& speech_segments) const;

  // Tape variant used in training so gradients reach the adapter.
  ad::Var splice_var(ad::Tape& tape, const std::vector<int>& tokens,
                     const std::vector<ad::Var>& speech_segments,
                     std::vector<ModalityTag>* mask_out = nullptr) const;

  // logits (L x vocab) and H (L x d_model); positions are added here.
  std::pair<Mat, ContextRepresentations> forward(const EmbeddingSequence& seq) const;

  ad::Var loss_var(ad::Tape& tape, ad::Var input_rows, const std::vector<int>& targets,
                   const std::vector<uint8_t>& loss_mask) const;

  struct GenerateResult {
    std::vector<int> tokens;  // response ids, EOS excluded
    ContextRepresentations states;  // prompt + generated positions
  };

  // Greedy or temperature decoding; on_token fires as each token is
  // produced (streaming contract).
  GenerateResult generate_text(
      const EmbeddingSequence& prompt, const DecodeConfig& cfg,
      const std::function<void(int token, const Eigen::RowVectorXd& state)>& on_token =
          nullptr) const;

 private:
  mutable CausalTransformer model_;
};

}  // namespace omni

#endif  // OMNI_LANGUAGE_CORE_HPP

#ifndef OMNI_SPEECH_FRONTEND_HPP
#define OMNI_SPEECH_FRONTEND_HPP

#include "omni/autodiff.hpp"
#include "omni/common.hpp"
#include "omni/core_types.hpp"
#include "omni/dsp.hpp"

namespace omni {

struct EncoderConfig {
  int n_mels = 80;
  int win_length = 400;
  int hop = 160;
  int d_enc = 96;
  int group_size = 4;  // k
  uint64_t seed = 7;   // frozen encoder weights
  // Log-mel at hop 160 gives 100 frames/s; the stride-2 conv halves that.
  int frame_rate() const { return 16000 / hop / 2; }
};

struct EncodedFrames {
  Mat frames;  // N_f x d_enc
  int frame_rate = 50;
};

struct GroupedFrames {
  Mat frames;  // floor(N_f/k) x (k*d_enc)
  int group_size = 1;
};

struct SpeechEmbeddingSequence {
  Mat embeddings;  // N_s x d_model
};

// Frozen reference encoder: log-mel, one stride-2 convolution, two
// bidirectional self-attention blocks. Deterministic per (config, input).
class SpeechEncoder {
 public:
  explicit SpeechEncoder(EncoderConfig cfg);
  EncodedFrames encode(const AudioAsset& audio) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  Mat conv_w_;  // (3*n_mels) x d_enc
  Mat conv_b_;  // 1 x d_enc
  struct Block {
    Mat wq, wk, wv, wo, w1, w2;
    Mat b1, b2;
  };
  std::vector<Block> blocks_;
};

// Concatenates every k consecutive frames; trailing remainder dropped.
GroupedFrames group_frames(const EncodedFrames& frames, int k);

// Trainable two-layer adapter tau mapping grouped frames into the
// language model embedding space.
class SpeechAdapter {
 public:
  SpeechAdapter(int d_in, int d_hidden, int d_model, uint64_t seed);

  ad::Var forward(ad::Tape& tape, ad::Var grouped) const;
  SpeechEmbeddingSequence adapt(const GroupedFrames& grouped) const;

  int d_in() const { return d_in_; }
  int d_model() const { return d_model_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

 private:
  int d_in_, d_hidden_, d_model_;
  mutable ad::ParamStore params_;
};

}  // namespace omni

#endif  // OMNI_SPEECH_FRONTEND_HPP

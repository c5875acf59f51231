#ifndef OMNI_SPEECH_SYNTHESIS_HPP
#define OMNI_SPEECH_SYNTHESIS_HPP

#include <functional>
#include <vector>

#include "omni/autodiff.hpp"
#include "omni/common.hpp"
#include "omni/core_types.hpp"
#include "omni/dsp.hpp"

namespace omni {

struct MelSpectrogram {
  Mat values;  // F x 80, log-amplitude
  int frame_hop = 256;

  void validate() const {
    OMNI_CHECK(values.rows() >= 1, "mel: no frames");
    OMNI_CHECK(all_finite(values), "mel: non-finite values");
  }
};

// Synthesis-side mel analysis (distinct from the encoder frontend).
dsp::MelConfig synthesis_mel_config();
MelSpectrogram compute_mel(const AudioAsset& audio);

struct SpeakerEmbedding {
  Vec vector;  // length 160, unit norm
};

// Per-mel-bin mean and standard deviation of log-mel frames, concatenated
// and L2-normalized. Requires at least 0.5 s of audio.
SpeakerEmbedding speaker_embedding(const AudioAsset& audio);

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

// ---- discrete speech tokenizer (k-means codebook over mel frames) ----

struct Codebook {
  Mat centroids;  // V_speech x n_mels
  uint64_t trained_on_hash = 0;

  int size() const { return static_cast<int>(centroids.rows()); }
};

Codebook fit_codebook(const std::vector<MelSpectrogram>& mels, int v_speech,
                      uint64_t seed);

// Per-frame nearest centroid (squared Euclidean; ties to lowest index).
std::vector<int> tokenize_mel(const MelSpectrogram& mel, const Codebook& codebook);

// Maps ids back to centroid rows.
Mat detokenize_tokens(const std::vector<int>& tokens, const Codebook& codebook);

double quantization_distortion(const MelSpectrogram& mel, const Codebook& codebook);

void save_codebook(const Codebook& codebook, const std::string& path);
Codebook load_codebook(const std::string& path);

// ---- OT conditional flow matching ----

struct CfmConditions {
  Mat token_frames;    // F x n_mels, detokenized + upsampled to mel rate
  Vec speaker;         // 160
  Vec context_pooled;  // d_context (mean-pooled H)
};

struct FlowMatcherConfig {
  int n_mels = 80;
  int d_context = 256;
  int hidden = 128;
  int n_blocks = 3;
  int frames_per_token = 2;
  double sigma_min = 1e-4;
};

using FieldFn = std::function<Mat(const Mat& x_t, double t)>;

// Fixed-step Euler from t=0 to t=1. Exact for constant fields.
Mat integrate_euler(const FieldFn& field, const Mat& x0, int steps);

// OT path point and regression target: x_t = (1-(1-sigma)t) x0 + t x1,
// u = x1 - (1-sigma) x0.
Mat ot_path_point(const Mat& x0, const Mat& x1, double t, double sigma_min);
Mat ot_target_field(const Mat& x0, const Mat& x1, double sigma_min);

// Conv stack with FiLM conditioning from (speaker, pooled context, t).
class FlowMatcher {
 public:
  FlowMatcher(FlowMatcherConfig cfg, uint64_t seed);

  const FlowMatcherConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  ad::Var field_var(ad::Tape& tape, ad::Var x_t, double t,
                    const CfmConditions& cond) const;
  Mat field(const Mat& x_t, double t, const CfmConditions& cond) const;

  ad::Var loss_var(ad::Tape& tape, const Mat& x1, const Mat& x0, double t,
                   const CfmConditions& cond) const;
  double cfm_loss(const Mat& x1, const Mat& x0, double t,
                  const CfmConditions& cond) const;

  // Euler-integrates the learned field from seeded Gaussian noise;
  // F = tokens * frames_per_token rows.
  MelSpectrogram sample_mel(const CfmConditions& cond, int steps, uint64_t seed) const;

 private:
  FlowMatcherConfig cfg_;
  mutable ad::ParamStore params_;
};

// Nearest-neighbor upsample of detokenized centroid frames to the mel rate.
Mat upsample_token_frames(const Mat& token_frames, int frames_per_token);

// ---- reference vocoder (Griffin-Lim) ----

AudioAsset vocode(const MelSpectrogram& mel, uint64_t seed, int iterations = 60);

}  // namespace omni

#endif  // OMNI_SPEECH_SYNTHESIS_HPP

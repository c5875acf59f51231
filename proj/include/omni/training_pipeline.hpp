#ifndef OMNI_TRAINING_PIPELINE_HPP
#define OMNI_TRAINING_PIPELINE_HPP

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "omni/language_core.hpp"
#include "omni/role_speech_decoder.hpp"
#include "omni/speech_frontend.hpp"
#include "omni/speech_synthesis.hpp"
#include "omni/tokenizer.hpp"

namespace omni {

struct OptimizerConfig {
  double peak_lr = 5e-4;
  double warmup_ratio = 0.3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps = 1e-8;
  double clip_norm = 1.0;
};

struct TrainConfig {
  int stage = 1;  // 1, 2, or 3 (cfm)
  OptimizerConfig optimizer;
  int batch_size = 32;
  int max_steps = 1000;
  uint64_t seed = 0;

  void validate() const {
    OMNI_CHECK(optimizer.warmup_ratio >= 0 && optimizer.warmup_ratio < 1,
               "warmup_ratio must be in [0,1)");
    OMNI_CHECK(optimizer.peak_lr > 0, "peak_lr must be positive");
    OMNI_CHECK(batch_size >= 1 && max_steps >= 1, "batch_size/max_steps must be positive");
  }

  static TrainConfig stage1_defaults() {
    TrainConfig c;
    c.stage = 1;
    c.optimizer.peak_lr = 5e-4;
    c.batch_size = 32;
    return c;
  }
  static TrainConfig stage2_defaults() {
    TrainConfig c = stage1_defaults();
    c.stage = 2;
    c.optimizer.peak_lr = 5e-5;
    return c;
  }
};

// Piecewise-linear: 0 at step 0, peak at warmup_ratio*max_steps, 0 at
// max_steps.
double lr_at_step(const OptimizerConfig& cfg, int step, int max_steps);

class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg) : cfg_(cfg) {}
  // One update over the trainable stores at learning rate lr. Gradients
  // are clipped jointly at cfg.clip_norm beforehand.
  void step(const std::vector<ad::ParamStore*>& stores, double lr);

 private:
  OptimizerConfig cfg_;
  std::map<std::pair<const ad::ParamStore*, std::string>, std::pair<Mat, Mat>> state_;
  int64_t t_ = 0;
};

// ---- model bundle ----

struct ModelConfig {
  EncoderConfig encoder;
  int d_model = 256;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 512;
  int max_seq = 512;
  int adapter_hidden = 256;
  int d_speechlm = 192;
  int speech_layers = 2;
  int speech_heads = 4;
  int speech_ff = 384;
  int v_speech = 256;
  int chunk_tokens = 25;
  int cfm_steps = 10;
  FlowMatcherConfig cfm;
  uint64_t seed = 1234;
};

// All components behind one construction path so training, the CLI, and
// tests share identical wiring.
struct OmniModel {
  ModelConfig cfg;
  Tokenizer tokenizer;
  SpeechEncoder encoder;
  SpeechAdapter adapter;
  LanguageCore language;
  RoleSpeechDecoder decoder;
  FlowMatcher cfm;
  std::optional<Codebook> codebook;

  OmniModel(ModelConfig cfg, Tokenizer tok);
};

std::unique_ptr<OmniModel> make_model(ModelConfig cfg, Tokenizer tok);

// ---- checkpointing ----

struct CheckpointInfo {
  int stage = 0;
  int step = 0;
  std::map<std::string, std::string> hashes;  // module -> hex hash
};

void save_params(const ad::ParamStore& store, const std::string& path);
void load_params(ad::ParamStore& store, const std::string& path);

void save_checkpoint(const OmniModel& model, const std::string& dir, int stage, int step);
CheckpointInfo load_checkpoint(OmniModel& model, const std::string& dir);
CheckpointInfo read_checkpoint_manifest(const std::string& dir);
uint64_t checkpoint_content_hash(const std::string& dir);

// ---- training ----

using AssetResolver = std::function<AudioAsset(const std::string& audio_ref)>;

struct TrainResult {
  double initial_loss = 0;
  double final_loss = 0;
  std::vector<double> loss_log;
};

using StepLogger = std::function<void(int step, double lr, double loss)>;

// Stage 1: adapter + language core on text targets (everything else frozen).
TrainResult train_stage1(const std::vector<DialogueRecord>& corpus,
                         const std::map<std::string, RoleProfile>& profiles,
                         OmniModel& model, const TrainConfig& cfg,
                         const AssetResolver& assets = nullptr,
                         const StepLogger& log = nullptr);

// Stage 2: projection phi + speech LM on codebook-token targets derived
// from response audio. Requires model.codebook.
TrainResult train_stage2(const std::vector<DialogueRecord>& corpus,
                         const std::map<std::string, RoleProfile>& profiles,
                         OmniModel& model, const TrainConfig& cfg,
                         const AssetResolver& assets,
                         const StepLogger& log = nullptr);

// Pre-built stage-2 supervision pair (used directly by synthetic fixtures).
struct SpeechTargetExample {
  Mat context_states;       // H rows
  std::vector<int> tokens;  // codebook ids
};

TrainResult train_speech_decoder(const std::vector<SpeechTargetExample>& examples,
                                 OmniModel& model, const TrainConfig& cfg,
                                 const StepLogger& log = nullptr);

struct CfmExample {
  Mat mel;  // x1
  CfmConditions cond;
};

TrainResult train_cfm(const std::vector<CfmExample>& examples, OmniModel& model,
                      const TrainConfig& cfg, const StepLogger& log = nullptr);

// ---- streaming respond loop ----

struct RespondEvent {
  enum class Kind { text_token, audio_chunk, final_event };
  Kind kind = Kind::text_token;
  int token_id = -1;          // text_token
  std::string text_piece;     // text_token
  AudioAsset audio;           // audio_chunk
  std::string full_text;      // final_event
  AudioAsset full_audio;      // final_event
  bool truncated = false;     // final_event: hit max_len
};

using EventSink = std::function<void(const RespondEvent&)>;

struct RespondConfig {
  DecodeConfig decode;
  bool emit_speech = true;
  int chunk_tokens = 25;
  int speech_max_len = 200;
  int cfm_steps = 10;
  uint64_t audio_seed = 0;
};

// Streams text tokens as generated, then audio chunks per chunk_tokens
// speech tokens; the final event carries the full transcript and audio.
void respond(OmniModel& model, const RoleProfile& profile, const DialogueContext& context,
             const ModalityPayload& input, const RespondConfig& cfg,
             const EventSink& sink, const AssetResolver& assets = nullptr);

// ---- latency ----

struct LatencyReport {
  double median_ms = 0;
  int trials = 0;
  int chunk_tokens = 0;
  std::vector<double> samples_ms;
};

// Wall-clock from session start to first audio_chunk, median over
// >= 5 trials after one discarded warm-up call.
LatencyReport measure_latency(const std::function<void(const EventSink&)>& session,
                              int trials, int chunk_tokens);

}  // namespace omni

#endif  // OMNI_TRAINING_PIPELINE_HPP

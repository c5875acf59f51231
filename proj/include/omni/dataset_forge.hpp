#ifndef OMNI_DATASET_FORGE_HPP
#define OMNI_DATASET_FORGE_HPP

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "omni/core_types.hpp"

namespace omni {

// ---- pluggable external-model clients ----

struct ChatMessage {
  std::string speaker;  // "user" or "assistant" relative to the callee
  std::string text;
};

class ChatModelClient {
 public:
  virtual ~ChatModelClient() = default;
  virtual std::string complete(const std::string& system_text,
                               const std::vector<ChatMessage>& messages) = 0;
};

class TtsClient {
 public:
  virtual ~TtsClient() = default;
  virtual AudioAsset synthesize(const std::string& text, const std::string& speaker) = 0;
};

class AsrClient {
 public:
  virtual ~AsrClient() = default;
  virtual std::string transcribe(const AudioAsset& audio) = 0;
};

class SimilarityClient {
 public:
  virtual ~SimilarityClient() = default;
  virtual double similarity(const AudioAsset& a, const AudioAsset& b) = 0;
};

// Deterministic pure-function stubs for tests and offline runs.
class StubChatClient : public ChatModelClient {
 public:
  using Fn = std::function<std::string(const std::string&, const std::vector<ChatMessage>&)>;
  StubChatClient();  // default deterministic responder
  explicit StubChatClient(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const std::string& system_text,
                       const std::vector<ChatMessage>& messages) override {
    return fn_(system_text, messages);
  }

 private:
  Fn fn_;
};

// Tone generator keyed by speaker; remembers transcripts by audio hash so
// the paired stub ASR can return the exact text.
class StubSpeechStack {
 public:
  TtsClient& tts() { return *tts_; }
  AsrClient& asr() { return *asr_; }
  SimilarityClient& sim() { return *sim_; }
  StubSpeechStack();

 private:
  struct Registry {
    std::map<uint64_t, std::string> transcript_by_hash;
    std::map<uint64_t, std::string> speaker_by_hash;
  };
  std::shared_ptr<Registry> registry_;
  std::unique_ptr<TtsClient> tts_;
  std::unique_ptr<AsrClient> asr_;
  std::unique_ptr<SimilarityClient> sim_;
};

// Record/replay wrapper: responses cached under dir keyed by request hash.
class ReplayChatClient : public ChatModelClient {
 public:
  // live may be null; replay then requires every request to be on disk.
  ReplayChatClient(std::string fixture_dir, ChatModelClient* live = nullptr);
  std::string complete(const std::string& system_text,
                       const std::vector<ChatMessage>& messages) override;

 private:
  std::string dir_;
  ChatModelClient* live_;
};

// ---- pipeline steps ----

struct ProfileSeed {
  std::string name;
  std::vector<std::string> trait_keywords;
  Language language = Language::en;
};

RoleProfile create_profile(const ProfileSeed& seed, ChatModelClient& client);

// Client text equal to kDialogueStopSignal ends the dialogue early.
inline constexpr const char* kDialogueStopSignal = "<stop>";

DialogueRecord generate_dialogue(const RoleProfile& profile_a,
                                 const RoleProfile& profile_b_or_user,
                                 ChatModelClient& client, int turn_budget,
                                 const std::string& dialogue_id = "dlg");

struct SynthesizedDialogue {
  DialogueRecord record;
  std::vector<AudioAsset> assets;
  std::string user_voice;  // "male" or "female"
};

SynthesizedDialogue synthesize_dialogue_speech(const DialogueRecord& record,
                                               const std::string& character_id,
                                               TtsClient& role_tts, TtsClient& user_tts,
                                               uint64_t seed);

// ---- quality verification ----

bool filter_pattern(const DialogueRecord& record);
bool filter_length(const DialogueRecord& record);
bool filter_style(const DialogueRecord& record, const std::vector<std::string>& phrase_list);

std::vector<std::string> default_assistant_phrases();

struct EditStats {
  size_t edits = 0;
  size_t ref_len = 0;
};

// Unit-cost Levenshtein over word tokens (whitespace for en, per code
// point for zh).
EditStats edit_stats(const std::string& ref_text, const std::string& hyp_text,
                     Language lang = Language::en);

// Percent word error rate; per-character tokenization for zh (CER).
double wer(const std::string& ref_text, const std::string& hyp_text,
           Language lang = Language::en);

using AudioLookup = std::function<AudioAsset(const std::string& audio_ref)>;

struct AudioQualityResult {
  bool keep = true;
  std::vector<std::string> reasons;  // failing turns
  bool wer_failed = false;
  bool sim_failed = false;
};

struct VerifyConfig {
  std::vector<std::string> assistant_phrases = default_assistant_phrases();
  double wer_threshold = 10.0;   // strict: reject only if wer > threshold
  double sim_threshold = 0.8;    // strict: reject only if sim < threshold
  Language language = Language::en;
};

AudioQualityResult filter_audio_quality(const DialogueRecord& record, AsrClient& asr,
                                        SimilarityClient& sim,
                                        const std::map<std::string, AudioAsset>& speaker_refs,
                                        const AudioLookup& audio,
                                        const VerifyConfig& cfg = {});

enum class RejectReason { none, pattern, too_short, assistant_style, wer, speaker_sim };

std::string reject_reason_name(RejectReason reason);

struct Verdict {
  std::string dialogue_id;
  bool keep = true;
  RejectReason reason = RejectReason::none;
};

struct VerificationReport {
  std::vector<Verdict> verdicts;
  std::map<std::string, size_t> counts;  // reason name (or "keep") -> count
  size_t total = 0;
};

// Filter order: pattern -> length -> style -> wer -> speaker_sim
// (cheapest first); the first failing filter names the reject reason.
VerificationReport verify_corpus(const std::vector<DialogueRecord>& records,
                                 AsrClient& asr, SimilarityClient& sim,
                                 const std::map<std::string, AudioAsset>& speaker_refs,
                                 const AudioLookup& audio, const VerifyConfig& cfg = {});

void write_report(const VerificationReport& report, const std::string& path);

}  // namespace omni

#endif  // OMNI_DATASET_FORGE_HPP

#ifndef OMNI_CORE_TYPES_HPP
#define OMNI_CORE_TYPES_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "omni/common.hpp"

namespace omni {

enum class Language { zh, en };

std::string language_name(Language lang);
Language language_from_name(const std::string& name);

// Persona document conditioning every response of a character.
struct RoleProfile {
  std::string role_id;
  std::string name;
  std::string persona_text;
  std::string voice_style_text;
  Language language = Language::en;
  std::vector<std::string> reference_audio_ids;
  bool needs_review = false;

  // Throws naming the first missing/invalid field.
  void validate() const;
};

enum class PayloadKind { speech_only, text_only, speech_and_text };

std::string payload_kind_name(PayloadKind kind);
PayloadKind payload_kind_from_name(const std::string& name);

// One turn's content. The kind/field invariants are enforced at
// construction; use the factories.
struct ModalityPayload {
  PayloadKind kind = PayloadKind::text_only;
  std::optional<std::string> text;
  std::optional<std::string> audio_ref;

  static ModalityPayload speech(std::string audio_ref);
  static ModalityPayload text_only_payload(std::string text);
  static ModalityPayload speech_and_text_payload(std::string text, std::string audio_ref);

  void validate() const;
};

struct Turn {
  std::string speaker_id;
  ModalityPayload payload;
  int index = 0;
};

// Ordered dialogue history U_n.
using DialogueContext = std::vector<Turn>;

struct DialogueRecord {
  std::string dialogue_id;
  std::array<std::string, 2> participants;
  std::vector<Turn> turns;
  std::vector<std::string> profile_refs;

  void validate() const;
};

// Mono waveform, 16 kHz after ingestion, samples in [-1, 1].
struct AudioAsset {
  std::string asset_id;
  int sample_rate = 16000;
  std::vector<double> samples;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  void validate() const;
};

// Stable textual anchor marking where speech embeddings are spliced in.
inline constexpr const char* kSpeechPlaceholder = "<|speech|>";

// Renders system / history / query sections in that order. Speech payloads
// appear as kSpeechPlaceholder at their splice position.
std::string assemble_prompt(const RoleProfile& profile, const DialogueContext& context,
                            const ModalityPayload& query);

// Line-delimited JSON corpus. Invalid lines raise with their line number.
std::vector<DialogueRecord> read_corpus(const std::string& path);
void write_corpus(const std::vector<DialogueRecord>& records, const std::string& path);

// RIFF WAV, mono, 16-bit PCM.
AudioAsset read_wav(const std::string& path, const std::string& asset_id = "");
void write_wav(const AudioAsset& audio, const std::string& path);

}  // namespace omni

#endif  // OMNI_CORE_TYPES_HPP

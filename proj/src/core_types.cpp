#include "omni/core_types.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace omni {

using nlohmann::json;

std::string language_name(Language lang) { return lang == Language::zh ? "zh" : "en"; }

Language language_from_name(const std::string& name) {
  if (name == "zh") return Language::zh;
  if (name == "en") return Language::en;
  throw OmniError("unknown language: " + name);
}

void RoleProfile::validate() const {
  OMNI_CHECK(!role_id.empty(), "profile field missing: role_id");
  OMNI_CHECK(!name.empty(), "profile field missing: name");
  OMNI_CHECK(!persona_text.empty(), "profile field missing: persona_text");
}

std::string payload_kind_name(PayloadKind kind) {
  switch (kind) {
    case PayloadKind::speech_only: return "speech_only";
    case PayloadKind::text_only: return "text_only";
    case PayloadKind::speech_and_text: return "speech_and_text";
  }
  throw OmniError("bad payload kind");
}

PayloadKind payload_kind_from_name(const std::string& name) {
  if (name == "speech_only") return PayloadKind::speech_only;
  if (name == "text_only") return PayloadKind::text_only;
  if (name == "speech_and_text") return PayloadKind::speech_and_text;
  throw OmniError("unknown payload kind: " + name);
}

ModalityPayload ModalityPayload::speech(std::string audio_ref) {
  ModalityPayload p;
  p.kind = PayloadKind::speech_only;
  p.audio_ref = std::move(audio_ref);
  p.validate();
  return p;
}

ModalityPayload ModalityPayload::text_only_payload(std::string text) {
  ModalityPayload p;
  p.kind = PayloadKind::text_only;
  p.text = std::move(text);
  p.validate();
  return p;
}

ModalityPayload ModalityPayload::speech_and_text_payload(std::string text,
                                                         std::string audio_ref) {
  ModalityPayload p;
  p.kind = PayloadKind::speech_and_text;
  p.text = std::move(text);
  p.audio_ref = std::move(audio_ref);
  p.validate();
  return p;
}

void ModalityPayload::validate() const {
  switch (kind) {
    case PayloadKind::speech_only:
      OMNI_CHECK(audio_ref && !text, "speech_only payload requires audio_ref and no text");
      break;
    case PayloadKind::text_only:
      OMNI_CHECK(text && !audio_ref, "text_only payload requires text and no audio_ref");
      break;
    case PayloadKind::speech_and_text:
      OMNI_CHECK(text && audio_ref, "speech_and_text payload requires text and audio_ref");
      break;
  }
}

void DialogueRecord::validate() const {
  OMNI_CHECK(!dialogue_id.empty(), "dialogue_id empty");
  OMNI_CHECK(!turns.empty(), "dialogue " + dialogue_id + " has no turns");
  int prev = -1;
  for (const auto& turn : turns) {
    OMNI_CHECK(!turn.speaker_id.empty(), "dialogue " + dialogue_id + ": empty speaker_id");
    OMNI_CHECK(turn.index > prev, "dialogue " + dialogue_id + ": turn indices not increasing");
    prev = turn.index;
    turn.payload.validate();
    OMNI_CHECK(turn.speaker_id == participants[0] || turn.speaker_id == participants[1],
               "dialogue " + dialogue_id + ": speaker " + turn.speaker_id +
                   " not in participants");
  }
}

void AudioAsset::validate() const {
  OMNI_CHECK(sample_rate == 16000, "audio " + asset_id + ": sample rate must be 16000");
  OMNI_CHECK(!samples.empty(), "audio " + asset_id + ": empty");
  for (double s : samples)
    OMNI_CHECK(std::isfinite(s), "audio " + asset_id + ": non-finite sample");
}

namespace {

std::string render_payload_text(const ModalityPayload& payload) {
  switch (payload.kind) {
    case PayloadKind::speech_only: return kSpeechPlaceholder;
    case PayloadKind::text_only: return *payload.text;
    case PayloadKind::speech_and_text: return *payload.text + " " + kSpeechPlaceholder;
  }
  throw OmniError("bad payload kind");
}

}  // namespace

std::string assemble_prompt(const RoleProfile& profile, const DialogueContext& context,
                            const ModalityPayload& query) {
  profile.validate();
  query.validate();
  for (size_t i = 1; i < context.size(); ++i) {
    OMNI_CHECK(context[i].speaker_id != context[i - 1].speaker_id,
               "context turns must alternate speakers");
  }
  std::ostringstream out;
  out << "[system]\n";
  out << "You are " << profile.name << " (" << profile.role_id << ").\n";
  out << "Persona: " << profile.persona_text << "\n";
  if (!profile.voice_style_text.empty())
    out << "Voice style: " << profile.voice_style_text << "\n";
  out << "Language: " << language_name(profile.language) << "\n";
  out << "Stay in character and respond as " << profile.name << ".\n";
  if (!context.empty()) {
    out << "[history]\n";
    for (const auto& turn : context) {
      out << turn.speaker_id << ": " << render_payload_text(turn.payload) << "\n";
    }
  }
  out << "[query]\n";
  out << "user: " << render_payload_text(query) << "\n";
  out << profile.name << ":";
  return out.str();
}

namespace {

json turn_to_json(const Turn& turn) {
  json j;
  j["speaker_id"] = turn.speaker_id;
  j["kind"] = payload_kind_name(turn.payload.kind);
  if (turn.payload.text) j["text"] = *turn.payload.text;
  if (turn.payload.audio_ref) j["audio_ref"] = *turn.payload.audio_ref;
  return j;
}

Turn turn_from_json(const json& j, int index) {
  Turn turn;
  turn.index = index;
  turn.speaker_id = j.at("speaker_id").get<std::string>();
  turn.payload.kind = payload_kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("text")) turn.payload.text = j.at("text").get<std::string>();
  if (j.contains("audio_ref")) turn.payload.audio_ref = j.at("audio_ref").get<std::string>();
  turn.payload.validate();
  return turn;
}

}  // namespace

std::vector<DialogueRecord> read_corpus(const std::string& path) {
  std::ifstream in(path);
  OMNI_CHECK(in.good(), "cannot open corpus: " + path);
  std::vector<DialogueRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string dialogue_id;
    try {
      json j = json::parse(line);
      DialogueRecord rec;
      rec.dialogue_id = j.at("dialogue_id").get<std::string>();
      dialogue_id = rec.dialogue_id;
      auto parts = j.at("participants").get<std::vector<std::string>>();
      OMNI_CHECK(parts.size() == 2, "participants must list exactly 2 speakers");
      rec.participants = {parts[0], parts[1]};
      rec.profile_refs = j.at("profile_refs").get<std::vector<std::string>>();
      int idx = 0;
      for (const auto& jt : j.at("turns")) rec.turns.push_back(turn_from_json(jt, idx++));
      rec.validate();
      records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << path << ":" << line_no << ": corpus parse error";
      if (!dialogue_id.empty()) msg << " [dialogue " << dialogue_id << "]";
      msg << ": " << e.what();
      throw OmniError(msg.str());
    }
  }
  return records;
}

void write_corpus(const std::vector<DialogueRecord>& records, const std::string& path) {
  std::ofstream out(path);
  OMNI_CHECK(out.good(), "cannot write corpus: " + path);
  for (const auto& rec : records) {
    rec.validate();
    json j;
    j["dialogue_id"] = rec.dialogue_id;
    j["participants"] = {rec.participants[0], rec.participants[1]};
    j["profile_refs"] = rec.profile_refs;
    j["turns"] = json::array();
    for (const auto& turn : rec.turns) j["turns"].push_back(turn_to_json(turn));
    out << j.dump() << "\n";
  }
}

namespace {

template <typename T>
void write_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

AudioAsset read_wav(const std::string& path, const std::string& asset_id) {
  std::ifstream in(path, std::ios::binary);
  OMNI_CHECK(in.good(), "cannot open wav: " + path);
  char tag[5] = {0};
  in.read(tag, 4);
  OMNI_CHECK(std::strcmp(tag, "RIFF") == 0, path + ": not a RIFF file");
  read_le<uint32_t>(in);
  in.read(tag, 4);
  OMNI_CHECK(std::strcmp(tag, "WAVE") == 0, path + ": not a WAVE file");

  AudioAsset audio;
  audio.asset_id = asset_id;
  uint16_t channels = 0, bits = 0;
  uint32_t rate = 0;
  bool got_fmt = false, got_data = false;
  while (in.read(tag, 4)) {
    uint32_t chunk_size = read_le<uint32_t>(in);
    if (std::strcmp(tag, "fmt ") == 0) {
      uint16_t fmt = read_le<uint16_t>(in);
      channels = read_le<uint16_t>(in);
      rate = read_le<uint32_t>(in);
      read_le<uint32_t>(in);
      read_le<uint16_t>(in);
      bits = read_le<uint16_t>(in);
      OMNI_CHECK(fmt == 1, path + ": only PCM wav supported");
      OMNI_CHECK(channels == 1, path + ": only mono wav supported");
      OMNI_CHECK(bits == 16, path + ": only 16-bit wav supported");
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      got_fmt = true;
    } else if (std::strcmp(tag, "data") == 0) {
      OMNI_CHECK(got_fmt, path + ": data chunk before fmt");
      size_t n = chunk_size / 2;
      audio.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        int16_t s = read_le<int16_t>(in);
        audio.samples[i] = static_cast<double>(s) / 32768.0;
      }
      got_data = true;
      break;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  OMNI_CHECK(got_data, path + ": no data chunk");
  audio.sample_rate = static_cast<int>(rate);
  OMNI_CHECK(audio.sample_rate == 16000, path + ": expected 16 kHz audio");
  audio.validate();
  return audio;
}

void write_wav(const AudioAsset& audio, const std::string& path) {
  audio.validate();
  std::ofstream out(path, std::ios::binary);
  OMNI_CHECK(out.good(), "cannot write wav: " + path);
  const uint32_t data_bytes = static_cast<uint32_t>(audio.samples.size() * 2);
  out.write("RIFF", 4);
  write_le<uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<uint32_t>(out, 16);
  write_le<uint16_t>(out, 1);
  write_le<uint16_t>(out, 1);
  write_le<uint32_t>(out, static_cast<uint32_t>(audio.sample_rate));
  write_le<uint32_t>(out, static_cast<uint32_t>(audio.sample_rate * 2));
  write_le<uint16_t>(out, 2);
  write_le<uint16_t>(out, 16);
  out.write("data", 4);
  write_le<uint32_t>(out, data_bytes);
  for (double s : audio.samples) {
    double clamped = std::max(-1.0, std::min(1.0, s));
    write_le<int16_t>(out, static_cast<int16_t>(std::lround(clamped * 32767.0)));
  }
}

}  // namespace omni

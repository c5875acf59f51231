#include "omni/dataset_forge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace omni {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Keyed on samples only so renaming an asset does not orphan its
// registry entries.
uint64_t hash_audio(const AudioAsset& audio) {
  return fnv1a(audio.samples.data(), sizeof(double) * audio.samples.size());
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

StubChatClient::StubChatClient() {
  fn_ = [](const std::string& system_text, const std::vector<ChatMessage>& messages) {
    uint64_t h = fnv1a(system_text.data(), system_text.size());
    for (const auto& m : messages) h = fnv1a(m.text.data(), m.text.size(), h);
    static const char* kOpeners[] = {"Well,", "Listen,", "Truly,", "Ah,", "Indeed,"};
    static const char* kBodies[] = {
        "the winds over the old harbor never forget a name",
        "every tale worth telling begins with a misplaced map",
        "I have walked these halls longer than you have drawn breath",
        "there is a price for every answer you seek here",
        "the stars keep their own ledger of our promises"};
    std::string out = std::string(kOpeners[h % 5]) + " " + kBodies[(h / 5) % 5] + ".";
    return out;
  };
}

// ---- stub speech stack ----

namespace {

class ToneTtsClient : public TtsClient {
 public:
  ToneTtsClient(std::shared_ptr<void> registry_erased,
                std::map<uint64_t, std::string>* transcripts,
                std::map<uint64_t, std::string>* speakers)
      : keep_alive_(std::move(registry_erased)),
        transcripts_(transcripts),
        speakers_(speakers) {}

  AudioAsset synthesize(const std::string& text, const std::string& speaker) override {
    OMNI_CHECK(!text.empty(), "tts: empty text");
    AudioAsset audio;
    audio.sample_rate = 16000;
    uint64_t sh = fnv1a(speaker.data(), speaker.size());
    uint64_t th = fnv1a(text.data(), text.size(), sh);
    audio.asset_id = "tts_" + hash_hex(th);
    // speaker sets the fundamental, text length sets the duration
    double f0 = 90.0 + static_cast<double>(sh % 160);
    size_t n = 8000 + 40 * std::min<size_t>(text.size(), 400);
    audio.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      double t = static_cast<double>(i) / 16000.0;
      audio.samples[i] = 0.4 * std::sin(2 * M_PI * f0 * t) +
                         0.2 * std::sin(2 * M_PI * 2 * f0 * t) +
                         0.05 * std::sin(2 * M_PI * (3 * f0 + (th % 37)) * t);
    }
    uint64_t ah = hash_audio(audio);
    (*transcripts_)[ah] = text;
    (*speakers_)[ah] = speaker;
    return audio;
  }

 private:
  std::shared_ptr<void> keep_alive_;
  std::map<uint64_t, std::string>* transcripts_;
  std::map<uint64_t, std::string>* speakers_;
};

class RegistryAsrClient : public AsrClient {
 public:
  RegistryAsrClient(std::shared_ptr<void> keep_alive,
                    const std::map<uint64_t, std::string>* transcripts)
      : keep_alive_(std::move(keep_alive)), transcripts_(transcripts) {}
  std::string transcribe(const AudioAsset& audio) override {
    auto it = transcripts_->find(hash_audio(audio));
    return it == transcripts_->end() ? std::string() : it->second;
  }

 private:
  std::shared_ptr<void> keep_alive_;
  const std::map<uint64_t, std::string>* transcripts_;
};

class RegistrySimilarityClient : public SimilarityClient {
 public:
  RegistrySimilarityClient(std::shared_ptr<void> keep_alive,
                           const std::map<uint64_t, std::string>* speakers)
      : keep_alive_(std::move(keep_alive)), speakers_(speakers) {}
  double similarity(const AudioAsset& a, const AudioAsset& b) override {
    auto ia = speakers_->find(hash_audio(a));
    auto ib = speakers_->find(hash_audio(b));
    if (ia == speakers_->end() || ib == speakers_->end()) return 0.0;
    return ia->second == ib->second ? 1.0 : 0.3;
  }

 private:
  std::shared_ptr<void> keep_alive_;
  const std::map<uint64_t, std::string>* speakers_;
};

}  // namespace

StubSpeechStack::StubSpeechStack() {
  auto reg = std::make_shared<Registry>();
  registry_ = reg;
  tts_ = std::make_unique<ToneTtsClient>(reg, &reg->transcript_by_hash,
                                         &reg->speaker_by_hash);
  asr_ = std::make_unique<RegistryAsrClient>(reg, &reg->transcript_by_hash);
  sim_ = std::make_unique<RegistrySimilarityClient>(reg, &reg->speaker_by_hash);
}

// ---- record/replay ----

ReplayChatClient::ReplayChatClient(std::string fixture_dir, ChatModelClient* live)
    : dir_(std::move(fixture_dir)), live_(live) {
  fs::create_directories(dir_);
}

std::string ReplayChatClient::complete(const std::string& system_text,
                                       const std::vector<ChatMessage>& messages) {
  uint64_t h = fnv1a(system_text.data(), system_text.size());
  for (const auto& m : messages) {
    h = fnv1a(m.speaker.data(), m.speaker.size(), h);
    h = fnv1a(m.text.data(), m.text.size(), h);
  }
  const std::string path = dir_ + "/" + hash_hex(h) + ".json";
  if (fs::exists(path)) {
    std::ifstream in(path);
    json j = json::parse(in);
    return j.at("response").get<std::string>();
  }
  OMNI_CHECK(live_, "replay fixture missing and no live client: " + path);
  std::string response = live_->complete(system_text, messages);
  json j;
  j["response"] = response;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  return response;
}

// ---- pipeline steps ----

RoleProfile create_profile(const ProfileSeed& seed, ChatModelClient& client) {
  OMNI_CHECK(!seed.name.empty(), "profile seed: name required");
  OMNI_CHECK(!seed.trait_keywords.empty(), "profile seed: trait keywords required");
  std::string keywords;
  for (const auto& k : seed.trait_keywords) keywords += (keywords.empty() ? "" : ", ") + k;
  std::string system_text =
      "Expand the following character sketch into a role profile with personality, "
      "background, and relationships.";
  std::vector<ChatMessage> messages = {
      {"user", "Name: " + seed.name + ". Traits: " + keywords + "."}};
  std::string persona = client.complete(system_text, messages);
  OMNI_CHECK(persona.size() >= 50, "create_profile: persona text too short");
  std::string voice = client.complete(
      "Describe the character's voice style in one sentence.",
      {{"user", "Name: " + seed.name + ". Traits: " + keywords + "."}});
  RoleProfile profile;
  profile.role_id = lower(seed.name);
  std::replace(profile.role_id.begin(), profile.role_id.end(), ' ', '_');
  profile.name = seed.name;
  profile.persona_text = persona;
  profile.voice_style_text = voice;
  profile.language = seed.language;
  profile.needs_review = true;  // human check happens downstream
  profile.validate();
  return profile;
}

DialogueRecord generate_dialogue(const RoleProfile& profile_a,
                                 const RoleProfile& profile_b_or_user,
                                 ChatModelClient& client, int turn_budget,
                                 const std::string& dialogue_id) {
  OMNI_CHECK(turn_budget >= 4, "generate_dialogue: turn_budget must be at least 4");
  profile_a.validate();
  profile_b_or_user.validate();
  DialogueRecord record;
  record.dialogue_id = dialogue_id;
  record.participants = {profile_a.role_id, profile_b_or_user.role_id};
  record.profile_refs = {profile_a.role_id, profile_b_or_user.role_id};
  const RoleProfile* sides[2] = {&profile_a, &profile_b_or_user};
  for (int i = 0; i < turn_budget; ++i) {
    const RoleProfile& speaker = *sides[i % 2];
    std::string system_text = "You are " + speaker.name + ". " + speaker.persona_text +
                              " Stay in character and answer in one short utterance.";
    std::vector<ChatMessage> messages;
    for (const auto& turn : record.turns)
      messages.push_back({turn.speaker_id == speaker.role_id ? "assistant" : "user",
                          *turn.payload.text});
    if (messages.empty()) messages.push_back({"user", "Begin the conversation."});
    std::string text = client.complete(system_text, messages);
    if (text.empty()) text = client.complete(system_text, messages);  // one retry
    OMNI_CHECK(!text.empty(),
               "generate_dialogue: client produced empty text twice, aborting " + dialogue_id);
    if (text == kDialogueStopSignal) break;
    Turn turn;
    turn.speaker_id = speaker.role_id;
    turn.index = i;
    turn.payload = ModalityPayload::text_only_payload(text);
    record.turns.push_back(std::move(turn));
  }
  record.validate();
  return record;
}

SynthesizedDialogue synthesize_dialogue_speech(const DialogueRecord& record,
                                               const std::string& character_id,
                                               TtsClient& role_tts, TtsClient& user_tts,
                                               uint64_t seed) {
  record.validate();
  for (const auto& turn : record.turns)
    OMNI_CHECK(turn.payload.text, "synthesize: turn without text in " + record.dialogue_id);
  Rng rng(seed);
  SynthesizedDialogue out;
  out.record = record;
  out.user_voice = rng.uniform() < 0.5 ? "male" : "female";
  for (auto& turn : out.record.turns) {
    const bool is_character = turn.speaker_id == character_id;
    AudioAsset audio = is_character
                           ? role_tts.synthesize(*turn.payload.text, turn.speaker_id)
                           : user_tts.synthesize(*turn.payload.text, out.user_voice);
    audio.asset_id = record.dialogue_id + "_t" + std::to_string(turn.index);
    turn.payload = ModalityPayload::speech_and_text_payload(*turn.payload.text,
                                                            audio.asset_id);
    out.assets.push_back(std::move(audio));
  }
  return out;
}

// ---- filters ----

bool filter_pattern(const DialogueRecord& record) {
  if (record.turns.empty()) return false;
  std::vector<std::string> speakers;
  for (const auto& turn : record.turns) {
    if (std::find(speakers.begin(), speakers.end(), turn.speaker_id) == speakers.end())
      speakers.push_back(turn.speaker_id);
  }
  if (speakers.size() != 2) return false;
  for (size_t i = 1; i < record.turns.size(); ++i)
    if (record.turns[i].speaker_id == record.turns[i - 1].speaker_id) return false;
  return true;
}

bool filter_length(const DialogueRecord& record) { return record.turns.size() > 3; }

std::vector<std::string> default_assistant_phrases() {
  return {"i am a helpful ai assistant", "as an ai", "i am an ai language model",
          "here is my response", "sure, here is"};
}

bool filter_style(const DialogueRecord& record, const std::vector<std::string>& phrase_list) {
  for (const auto& turn : record.turns) {
    if (!turn.payload.text) continue;
    std::string text = lower(*turn.payload.text);
    for (const auto& phrase : phrase_list)
      if (text.find(lower(phrase)) != std::string::npos) return false;
  }
  return true;
}

namespace {

std::vector<std::string> tokenize_words(const std::string& text, Language lang) {
  std::vector<std::string> out;
  if (lang == Language::en) {
    std::string word;
    for (char c : text) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!word.empty()) out.push_back(std::move(word));
        word.clear();
      } else {
        word.push_back(c);
      }
    }
    if (!word.empty()) out.push_back(std::move(word));
  } else {
    // per UTF-8 code point (CER)
    for (size_t i = 0; i < text.size();) {
      unsigned char c = static_cast<unsigned char>(text[i]);
      size_t len = c < 0x80 ? 1 : c < 0xE0 ? 2 : c < 0xF0 ? 3 : 4;
      len = std::min(len, text.size() - i);
      if (!std::isspace(c)) out.push_back(text.substr(i, len));
      i += len;
    }
  }
  return out;
}

}  // namespace

EditStats edit_stats(const std::string& ref_text, const std::string& hyp_text,
                     Language lang) {
  auto ref = tokenize_words(ref_text, lang);
  auto hyp = tokenize_words(hyp_text, lang);
  OMNI_CHECK(!ref.empty(), "wer: empty reference");
  const size_t n = ref.size(), m = hyp.size();
  std::vector<size_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = j;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= m; ++j) {
      size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return {prev[m], n};
}

double wer(const std::string& ref_text, const std::string& hyp_text, Language lang) {
  EditStats s = edit_stats(ref_text, hyp_text, lang);
  return 100.0 * static_cast<double>(s.edits) / static_cast<double>(s.ref_len);
}

AudioQualityResult filter_audio_quality(const DialogueRecord& record, AsrClient& asr,
                                        SimilarityClient& sim,
                                        const std::map<std::string, AudioAsset>& speaker_refs,
                                        const AudioLookup& audio, const VerifyConfig& cfg) {
  AudioQualityResult result;
  for (const auto& turn : record.turns) {
    if (!turn.payload.audio_ref || !turn.payload.text) continue;
    OMNI_CHECK(audio, "filter_audio_quality: no audio lookup");
    AudioAsset clip = audio(*turn.payload.audio_ref);
    double w = wer(*turn.payload.text, asr.transcribe(clip), cfg.language);
    if (w > cfg.wer_threshold) {  // strictly greater than 10 rejects
      result.keep = false;
      result.wer_failed = true;
      result.reasons.push_back("turn " + std::to_string(turn.index) + ": wer " +
                               std::to_string(w));
      continue;
    }
    auto ref_it = speaker_refs.find(turn.speaker_id);
    if (ref_it != speaker_refs.end()) {
      double s = sim.similarity(clip, ref_it->second);
      if (s < cfg.sim_threshold) {  // strictly less than 0.8 rejects
        result.keep = false;
        result.sim_failed = true;
        result.reasons.push_back("turn " + std::to_string(turn.index) + ": similarity " +
                                 std::to_string(s));
      }
    }
  }
  return result;
}

std::string reject_reason_name(RejectReason reason) {
  switch (reason) {
    case RejectReason::none: return "keep";
    case RejectReason::pattern: return "pattern";
    case RejectReason::too_short: return "too_short";
    case RejectReason::assistant_style: return "assistant_style";
    case RejectReason::wer: return "wer";
    case RejectReason::speaker_sim: return "speaker_sim";
  }
  throw OmniError("bad reject reason");
}

VerificationReport verify_corpus(const std::vector<DialogueRecord>& records,
                                 AsrClient& asr, SimilarityClient& sim,
                                 const std::map<std::string, AudioAsset>& speaker_refs,
                                 const AudioLookup& audio, const VerifyConfig& cfg) {
  VerificationReport report;
  report.total = records.size();
  for (const auto& rec : records) {
    Verdict v;
    v.dialogue_id = rec.dialogue_id;
    if (!filter_pattern(rec)) {
      v.keep = false;
      v.reason = RejectReason::pattern;
    } else if (!filter_length(rec)) {
      v.keep = false;
      v.reason = RejectReason::too_short;
    } else if (!filter_style(rec, cfg.assistant_phrases)) {
      v.keep = false;
      v.reason = RejectReason::assistant_style;
    } else {
      AudioQualityResult aq = filter_audio_quality(rec, asr, sim, speaker_refs, audio, cfg);
      if (!aq.keep) {
        v.keep = false;
        v.reason = aq.wer_failed ? RejectReason::wer : RejectReason::speaker_sim;
      }
    }
    report.counts[reject_reason_name(v.reason)]++;
    report.verdicts.push_back(std::move(v));
  }
  return report;
}

void write_report(const VerificationReport& report, const std::string& path) {
  json j;
  j["total"] = report.total;
  j["counts"] = report.counts;
  j["verdicts"] = json::array();
  for (const auto& v : report.verdicts) {
    j["verdicts"].push_back({{"dialogue_id", v.dialogue_id},
                             {"keep", v.keep},
                             {"reason", reject_reason_name(v.reason)}});
  }
  // parity of the ABAB rule is alternation-only; surfaced for review
  j["notes"] = "pattern filter enforces strict alternation; odd turn counts allowed";
  std::ofstream out(path);
  OMNI_CHECK(out.good(), "cannot write report: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace omni

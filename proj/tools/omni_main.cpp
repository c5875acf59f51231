// Command-line front end: training, interactive chat, latency benchmarks,
// the dataset construction pipeline, and the evaluation harness, all driven
// by one declarative JSON config with content-hash pinning.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "omni/dataset_forge.hpp"
#include "omni/evaluation_harness.hpp"
#include "omni/training_pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace omni;

namespace {

uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  OMNI_CHECK(in.good(), "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string bytes = buf.str();
  return fnv1a(bytes.data(), bytes.size());
}

// Config files may pin other inputs: "pins": {"path": "<16-hex fnv1a>"}.
// A pin mismatch aborts before any work runs.
void check_pins(const json& cfg) {
  if (!cfg.contains("pins")) return;
  for (const auto& [path, expected] : cfg.at("pins").items()) {
    std::string actual = hash_hex(file_hash(path));
    OMNI_CHECK(actual == expected.get<std::string>(),
               "pin mismatch for " + path + ": expected " +
                   expected.get<std::string>() + ", file hashes to " + actual);
  }
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  OMNI_CHECK(in.good(), "cannot open config " + path);
  json cfg = json::parse(in);
  check_pins(cfg);
  return cfg;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

ModelConfig model_config_from_json(const json& root) {
  ModelConfig cfg;
  if (!root.contains("model")) return cfg;
  const json& m = root.at("model");
  cfg.d_model = get_or(m, "d_model", cfg.d_model);
  cfg.n_layers = get_or(m, "n_layers", cfg.n_layers);
  cfg.n_heads = get_or(m, "n_heads", cfg.n_heads);
  cfg.d_ff = get_or(m, "d_ff", cfg.d_ff);
  cfg.max_seq = get_or(m, "max_seq", cfg.max_seq);
  cfg.adapter_hidden = get_or(m, "adapter_hidden", cfg.adapter_hidden);
  cfg.d_speechlm = get_or(m, "d_speechlm", cfg.d_speechlm);
  cfg.speech_layers = get_or(m, "speech_layers", cfg.speech_layers);
  cfg.speech_heads = get_or(m, "speech_heads", cfg.speech_heads);
  cfg.speech_ff = get_or(m, "speech_ff", cfg.speech_ff);
  cfg.v_speech = get_or(m, "v_speech", cfg.v_speech);
  cfg.chunk_tokens = get_or(m, "chunk_tokens", cfg.chunk_tokens);
  cfg.cfm_steps = get_or(m, "cfm_steps", cfg.cfm_steps);
  cfg.seed = get_or(m, "seed", cfg.seed);
  if (m.contains("encoder")) {
    const json& e = m.at("encoder");
    cfg.encoder.n_mels = get_or(e, "n_mels", cfg.encoder.n_mels);
    cfg.encoder.win_length = get_or(e, "win_length", cfg.encoder.win_length);
    cfg.encoder.hop = get_or(e, "hop", cfg.encoder.hop);
    cfg.encoder.d_enc = get_or(e, "d_enc", cfg.encoder.d_enc);
    cfg.encoder.group_size = get_or(e, "group_size", cfg.encoder.group_size);
    cfg.encoder.seed = get_or(e, "seed", cfg.encoder.seed);
  }
  if (m.contains("cfm")) {
    const json& c = m.at("cfm");
    cfg.cfm.n_mels = get_or(c, "n_mels", cfg.cfm.n_mels);
    cfg.cfm.hidden = get_or(c, "hidden", cfg.cfm.hidden);
    cfg.cfm.n_blocks = get_or(c, "n_blocks", cfg.cfm.n_blocks);
    cfg.cfm.frames_per_token = get_or(c, "frames_per_token", cfg.cfm.frames_per_token);
    cfg.cfm.sigma_min = get_or(c, "sigma_min", cfg.cfm.sigma_min);
  }
  return cfg;
}

json model_config_to_json(const ModelConfig& cfg) {
  json m;
  m["d_model"] = cfg.d_model;
  m["n_layers"] = cfg.n_layers;
  m["n_heads"] = cfg.n_heads;
  m["d_ff"] = cfg.d_ff;
  m["max_seq"] = cfg.max_seq;
  m["adapter_hidden"] = cfg.adapter_hidden;
  m["d_speechlm"] = cfg.d_speechlm;
  m["speech_layers"] = cfg.speech_layers;
  m["speech_heads"] = cfg.speech_heads;
  m["speech_ff"] = cfg.speech_ff;
  m["v_speech"] = cfg.v_speech;
  m["chunk_tokens"] = cfg.chunk_tokens;
  m["cfm_steps"] = cfg.cfm_steps;
  m["seed"] = cfg.seed;
  m["encoder"] = {{"n_mels", cfg.encoder.n_mels},   {"win_length", cfg.encoder.win_length},
                  {"hop", cfg.encoder.hop},         {"d_enc", cfg.encoder.d_enc},
                  {"group_size", cfg.encoder.group_size}, {"seed", cfg.encoder.seed}};
  m["cfm"] = {{"n_mels", cfg.cfm.n_mels},
              {"hidden", cfg.cfm.hidden},
              {"n_blocks", cfg.cfm.n_blocks},
              {"frames_per_token", cfg.cfm.frames_per_token},
              {"sigma_min", cfg.cfm.sigma_min}};
  return json{{"model", m}};
}

TrainConfig train_config_from_json(const json& root, int stage) {
  TrainConfig cfg = stage == 2 ? TrainConfig::stage2_defaults() : TrainConfig::stage1_defaults();
  cfg.stage = stage;
  if (root.contains("train")) {
    const json& t = root.at("train");
    cfg.optimizer.peak_lr = get_or(t, "peak_lr", cfg.optimizer.peak_lr);
    cfg.optimizer.warmup_ratio = get_or(t, "warmup_ratio", cfg.optimizer.warmup_ratio);
    cfg.optimizer.weight_decay = get_or(t, "weight_decay", cfg.optimizer.weight_decay);
    cfg.optimizer.clip_norm = get_or(t, "clip_norm", cfg.optimizer.clip_norm);
    cfg.batch_size = get_or(t, "batch_size", cfg.batch_size);
    cfg.max_steps = get_or(t, "max_steps", cfg.max_steps);
    cfg.seed = get_or(t, "seed", cfg.seed);
  }
  return cfg;
}

// ---- profile JSONL ----

std::map<std::string, RoleProfile> read_profiles(const std::string& path) {
  std::ifstream in(path);
  OMNI_CHECK(in.good(), "cannot open profiles " + path);
  std::map<std::string, RoleProfile> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw OmniError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    RoleProfile p;
    p.role_id = j.at("role_id").get<std::string>();
    p.name = j.at("name").get<std::string>();
    p.persona_text = j.at("persona_text").get<std::string>();
    p.voice_style_text = j.at("voice_style_text").get<std::string>();
    p.language = language_from_name(get_or<std::string>(j, "language", "en"));
    p.reference_audio_ids =
        get_or(j, "reference_audio_ids", std::vector<std::string>{});
    p.needs_review = get_or(j, "needs_review", false);
    p.validate();
    out[p.role_id] = std::move(p);
  }
  return out;
}

void write_profiles(const std::vector<RoleProfile>& profiles, const std::string& path) {
  std::ofstream out(path);
  OMNI_CHECK(out.good(), "cannot write profiles " + path);
  for (const auto& p : profiles) {
    json j;
    j["role_id"] = p.role_id;
    j["name"] = p.name;
    j["persona_text"] = p.persona_text;
    j["voice_style_text"] = p.voice_style_text;
    j["language"] = language_name(p.language);
    j["reference_audio_ids"] = p.reference_audio_ids;
    j["needs_review"] = p.needs_review;
    out << j.dump() << "\n";
  }
}

AssetResolver dir_resolver(const std::string& audio_dir) {
  return [audio_dir](const std::string& ref) {
    return read_wav(audio_dir + "/" + ref + ".wav", ref);
  };
}

// ---- model construction shared by train/chat/bench ----

Tokenizer build_tokenizer(const json& cfg, const std::vector<DialogueRecord>& corpus,
                          const std::map<std::string, RoleProfile>& profiles) {
  if (cfg.contains("tokenizer") && cfg.at("tokenizer").contains("path"))
    return Tokenizer::load(cfg.at("tokenizer").at("path").get<std::string>());
  std::vector<std::string> texts;
  for (const auto& [id, p] : profiles) {
    texts.push_back(p.persona_text);
    texts.push_back(p.voice_style_text);
  }
  for (const auto& rec : corpus)
    for (const auto& turn : rec.turns)
      if (turn.payload.text) texts.push_back(*turn.payload.text);
  int n_merges = cfg.contains("tokenizer")
                     ? get_or(cfg.at("tokenizer"), "n_merges", 64)
                     : 64;
  return Tokenizer::train(texts, n_merges);
}

std::unique_ptr<OmniModel> load_model_from_checkpoint(const std::string& ckpt_dir) {
  std::ifstream in(ckpt_dir + "/model_config.json");
  OMNI_CHECK(in.good(), "no model_config.json in " + ckpt_dir);
  ModelConfig cfg = model_config_from_json(json::parse(in));
  Tokenizer tok = Tokenizer::load(ckpt_dir + "/tokenizer.json");
  auto model = make_model(cfg, std::move(tok));
  load_checkpoint(*model, ckpt_dir);
  return model;
}

void save_model_bundle(const OmniModel& model, const std::string& dir, int stage,
                       int step) {
  save_checkpoint(model, dir, stage, step);
  model.tokenizer.save(dir + "/tokenizer.json");
  std::ofstream out(dir + "/model_config.json");
  OMNI_CHECK(out.good(), "cannot write model config in " + dir);
  out << model_config_to_json(model.cfg).dump(2) << "\n";
}

Codebook fit_corpus_codebook(const std::vector<DialogueRecord>& corpus,
                             const AssetResolver& assets, int v_speech, uint64_t seed) {
  std::vector<MelSpectrogram> mels;
  for (const auto& rec : corpus)
    for (const auto& turn : rec.turns)
      if (turn.payload.audio_ref) mels.push_back(compute_mel(assets(*turn.payload.audio_ref)));
  OMNI_CHECK(!mels.empty(), "codebook: corpus carries no audio");
  return fit_codebook(mels, v_speech, seed);
}

std::vector<CfmExample> build_cfm_examples(
    const std::vector<DialogueRecord>& corpus,
    const std::map<std::string, RoleProfile>& profiles, OmniModel& model,
    const AssetResolver& assets) {
  OMNI_CHECK(model.codebook.has_value(), "cfm training requires a fitted codebook");
  std::vector<CfmExample> out;
  for (const auto& rec : corpus) {
    const Turn& response = rec.turns.back();
    OMNI_CHECK(response.payload.audio_ref,
               "record " + rec.dialogue_id + ": response carries no audio target");
    AudioAsset audio = assets(*response.payload.audio_ref);
    MelSpectrogram mel = compute_mel(audio);
    const int fpt = model.cfg.cfm.frames_per_token;
    const Eigen::Index n_tokens = mel.values.rows() / fpt;
    OMNI_CHECK(n_tokens >= 1, "record " + rec.dialogue_id + ": audio too short");
    MelSpectrogram down;
    down.frame_hop = mel.frame_hop;
    down.values = Mat(n_tokens, mel.values.cols());
    for (Eigen::Index i = 0; i < n_tokens; ++i) down.values.row(i) = mel.values.row(i * fpt);
    std::vector<int> tokens = tokenize_mel(down, *model.codebook);

    auto pit = profiles.find(rec.profile_refs.front());
    OMNI_CHECK(pit != profiles.end(), "unknown profile for " + rec.dialogue_id);
    DialogueContext context(rec.turns.begin(), rec.turns.end() - 2);
    std::string prompt =
        assemble_prompt(pit->second, context, rec.turns[rec.turns.size() - 2].payload);
    std::vector<int> ids = {Tokenizer::kBos};
    auto enc = model.tokenizer.encode(prompt + *response.payload.text);
    ids.insert(ids.end(), enc.begin(), enc.end());
    std::vector<Mat> segs;
    for (const auto& turn : rec.turns)
      if (turn.payload.audio_ref && &turn != &response) {
        EncodedFrames frames = model.encoder.encode(assets(*turn.payload.audio_ref));
        segs.push_back(
            model.adapter.adapt(group_frames(frames, model.cfg.encoder.group_size)).embeddings);
      }
    auto [logits, states] = model.language.forward(model.language.splice(ids, segs));
    (void)logits;

    CfmExample ex;
    ex.mel.resize(n_tokens * fpt, mel.values.cols());
    ex.mel = mel.values.topRows(n_tokens * fpt);
    ex.cond.token_frames =
        upsample_token_frames(detokenize_tokens(tokens, *model.codebook), fpt);
    ex.cond.speaker = speaker_embedding(audio).vector;
    ex.cond.context_pooled = states.states.colwise().mean();
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- subcommand bodies ----

int run_train(const std::string& stage_name, const std::string& config_path,
              const std::string& corpus_path, const std::string& out_dir,
              const std::string& init_dir) {
  json cfg = load_config(config_path);
  std::vector<DialogueRecord> corpus = read_corpus(corpus_path);
  std::map<std::string, RoleProfile> profiles;
  if (cfg.contains("profiles"))
    profiles = read_profiles(cfg.at("profiles").get<std::string>());
  AssetResolver assets;
  if (cfg.contains("audio_dir")) assets = dir_resolver(cfg.at("audio_dir").get<std::string>());

  std::unique_ptr<OmniModel> model;
  if (!init_dir.empty()) {
    model = load_model_from_checkpoint(init_dir);
  } else {
    Tokenizer tok = build_tokenizer(cfg, corpus, profiles);
    model = make_model(model_config_from_json(cfg), std::move(tok));
  }

  StepLogger log = [](int step, double lr, double loss) {
    std::cout << "step " << step << "  lr " << lr << "  loss " << loss << "\n";
  };

  TrainResult result;
  int stage_tag = 0;
  if (stage_name == "1") {
    TrainConfig tc = train_config_from_json(cfg, 1);
    result = train_stage1(corpus, profiles, *model, tc, assets, log);
    stage_tag = 1;
  } else if (stage_name == "2") {
    TrainConfig tc = train_config_from_json(cfg, 2);
    if (!model->codebook)
      model->codebook =
          fit_corpus_codebook(corpus, assets, model->cfg.v_speech, model->cfg.seed);
    result = train_stage2(corpus, profiles, *model, tc, assets, log);
    stage_tag = 2;
  } else {  // cfm
    TrainConfig tc = train_config_from_json(cfg, 1);
    tc.stage = 1;  // schedule shape only; cfm ignores the stage id
    if (!model->codebook)
      model->codebook =
          fit_corpus_codebook(corpus, assets, model->cfg.v_speech, model->cfg.seed);
    std::vector<CfmExample> examples = build_cfm_examples(corpus, profiles, *model, assets);
    result = train_cfm(examples, *model, tc, log);
    stage_tag = 3;
  }

  save_model_bundle(*model, out_dir, stage_tag, static_cast<int>(result.loss_log.size()));
  if (cfg.contains("profiles"))
    fs::copy_file(cfg.at("profiles").get<std::string>(), out_dir + "/profiles.jsonl",
                  fs::copy_options::overwrite_existing);
  std::cout << "stage " << stage_name << ": loss " << result.initial_loss << " -> "
            << result.final_loss << ", checkpoint in " << out_dir << "\n";
  return 0;
}

int run_chat(const std::string& ckpt_dir, const std::string& profile_id,
             const std::string& profiles_path, const std::string& text,
             const std::string& wav_path, const std::string& emit_audio,
             int max_len) {
  auto model = load_model_from_checkpoint(ckpt_dir);
  std::string ppath = profiles_path.empty() ? ckpt_dir + "/profiles.jsonl" : profiles_path;
  auto profiles = read_profiles(ppath);
  auto pit = profiles.find(profile_id);
  OMNI_CHECK(pit != profiles.end(), "unknown profile " + profile_id + " in " + ppath);

  ModalityPayload input;
  AssetResolver assets;
  if (!wav_path.empty()) {
    AudioAsset wav = read_wav(wav_path, "query");
    input = ModalityPayload::speech("query");
    assets = [wav](const std::string& ref) {
      OMNI_CHECK(ref == "query", "unknown asset " + ref);
      return wav;
    };
  } else {
    input = ModalityPayload::text_only_payload(text);
  }

  RespondConfig rc;
  rc.decode.max_len = max_len;
  rc.chunk_tokens = model->cfg.chunk_tokens;
  rc.cfm_steps = model->cfg.cfm_steps;
  rc.emit_speech = model->codebook.has_value() && !emit_audio.empty();

  respond(*model, pit->second, {}, input, rc, [&](const RespondEvent& ev) {
    switch (ev.kind) {
      case RespondEvent::Kind::text_token:
        std::cout << ev.text_piece << std::flush;
        break;
      case RespondEvent::Kind::audio_chunk:
        std::cerr << "[audio chunk: " << ev.audio.samples.size() << " samples]\n";
        break;
      case RespondEvent::Kind::final_event:
        std::cout << "\n";
        if (!emit_audio.empty() && !ev.full_audio.samples.empty()) {
          write_wav(ev.full_audio, emit_audio);
          std::cout << "wrote " << emit_audio << " (" << ev.full_audio.duration_seconds()
                    << " s)\n";
        }
        if (ev.truncated) std::cerr << "(response hit max length)\n";
        break;
    }
  }, assets);
  return 0;
}

int run_bench(const std::string& ckpt_dir, int trials, const std::string& profile_id,
              const std::string& profiles_path) {
  auto model = load_model_from_checkpoint(ckpt_dir);
  OMNI_CHECK(model->codebook.has_value(),
             "bench-latency: checkpoint carries no codebook, train stage 2 first");
  RoleProfile profile;
  if (!profile_id.empty()) {
    std::string ppath = profiles_path.empty() ? ckpt_dir + "/profiles.jsonl" : profiles_path;
    auto profiles = read_profiles(ppath);
    auto pit = profiles.find(profile_id);
    OMNI_CHECK(pit != profiles.end(), "unknown profile " + profile_id);
    profile = pit->second;
  } else {
    profile.role_id = "bench";
    profile.name = "Bench";
    profile.persona_text = "A fixed persona used only for timing runs.";
    profile.voice_style_text = "neutral";
  }
  ModalityPayload input = ModalityPayload::text_only_payload("Tell me about your day.");
  RespondConfig rc;
  rc.decode.max_len = 16;
  rc.chunk_tokens = model->cfg.chunk_tokens;
  rc.cfm_steps = model->cfg.cfm_steps;

  auto session = [&](const EventSink& sink) {
    respond(*model, profile, {}, input, rc, sink, nullptr);
  };
  LatencyReport report = measure_latency(session, trials, rc.chunk_tokens);
  std::cout << "first-chunk latency over " << report.trials << " trials (chunk "
            << report.chunk_tokens << " tokens): median " << report.median_ms << " ms\n";
  for (double s : report.samples_ms) std::cout << "  " << s << " ms\n";
  return 0;
}

// Seed used when synthesizing record i; verify re-derives the same audio.
uint64_t record_speech_seed(uint64_t base, size_t index) {
  return base + 1000 * static_cast<uint64_t>(index);
}

int run_forge(const std::string& step, const std::string& config_path) {
  json cfg = load_config(config_path);
  OMNI_CHECK(cfg.contains("forge"), "config has no forge section");
  const json& f = cfg.at("forge");
  const std::string profiles_path = f.at("profiles").get<std::string>();
  const uint64_t seed = get_or<uint64_t>(f, "seed", 0);

  if (step == "profiles") {
    StubChatClient stub;
    ReplayChatClient client(get_or<std::string>(f, "fixtures_dir", "fixtures/clients"),
                            &stub);
    std::vector<RoleProfile> profiles;
    for (const auto& s : f.at("seeds")) {
      ProfileSeed ps;
      ps.name = s.at("name").get<std::string>();
      ps.trait_keywords = s.at("traits").get<std::vector<std::string>>();
      ps.language = language_from_name(get_or<std::string>(s, "language", "en"));
      profiles.push_back(create_profile(ps, client));
    }
    write_profiles(profiles, profiles_path);
    std::cout << "wrote " << profiles.size() << " profiles to " << profiles_path << "\n";
    return 0;
  }

  if (step == "dialogues") {
    StubChatClient stub;
    ReplayChatClient client(get_or<std::string>(f, "fixtures_dir", "fixtures/clients"),
                            &stub);
    auto profiles = read_profiles(profiles_path);
    RoleProfile user;
    user.role_id = "user";
    user.name = "User";
    user.persona_text = "A curious visitor who asks short, direct questions.";
    user.voice_style_text = "plain conversational voice";
    // odd budget: the character both opens and closes, so the final turn
    // is a trainable character response
    const int turn_budget = get_or(f, "turn_budget", 7);
    std::vector<DialogueRecord> corpus;
    for (const auto& [id, profile] : profiles) {
      corpus.push_back(
          generate_dialogue(profile, user, client, turn_budget, "dlg_" + id));
      // the built-in interlocutor is not a character; keep only the role
      // profile so stats and training treat user turns as user speech
      corpus.back().profile_refs = {profile.role_id};
    }
    write_corpus(corpus, f.at("corpus").get<std::string>());
    std::cout << "wrote " << corpus.size() << " dialogues to "
              << f.at("corpus").get<std::string>() << "\n";
    return 0;
  }

  if (step == "speech") {
    std::vector<DialogueRecord> corpus = read_corpus(f.at("corpus").get<std::string>());
    const std::string audio_dir = f.at("audio_dir").get<std::string>();
    fs::create_directories(audio_dir);
    StubSpeechStack stack;
    std::vector<DialogueRecord> out;
    size_t n_assets = 0;
    for (size_t i = 0; i < corpus.size(); ++i) {
      SynthesizedDialogue synth =
          synthesize_dialogue_speech(corpus[i], corpus[i].profile_refs.front(), stack.tts(),
                                     stack.tts(), record_speech_seed(seed, i));
      for (const auto& asset : synth.assets) {
        write_wav(asset, audio_dir + "/" + asset.asset_id + ".wav");
        ++n_assets;
      }
      out.push_back(std::move(synth.record));
    }
    write_corpus(out, f.at("speech_corpus").get<std::string>());
    std::cout << "wrote " << n_assets << " clips to " << audio_dir << " and corpus to "
              << f.at("speech_corpus").get<std::string>() << "\n";
    return 0;
  }

  if (step == "verify") {
    std::vector<DialogueRecord> corpus =
        read_corpus(f.at("speech_corpus").get<std::string>());
    // The stub ASR/similarity registry only knows clips synthesized in this
    // process, so verification re-derives each record's audio from its text
    // with the recorded per-record seed instead of re-reading quantized wavs.
    StubSpeechStack stack;
    VerifyConfig vc;
    vc.language = language_from_name(get_or<std::string>(f, "language", "en"));
    // Speaker references are scoped per dialogue: the user voice is redrawn
    // for every record, so a global "user" reference would flag ordinary
    // cross-dialogue voice variation as an inconsistency.
    VerificationReport report;
    report.total = corpus.size();
    for (size_t i = 0; i < corpus.size(); ++i) {
      SynthesizedDialogue synth =
          synthesize_dialogue_speech(corpus[i], corpus[i].profile_refs.front(), stack.tts(),
                                     stack.tts(), record_speech_seed(seed, i));
      std::map<std::string, AudioAsset> by_ref;
      std::map<std::string, AudioAsset> speaker_refs;
      for (size_t t = 0; t < synth.assets.size(); ++t) {
        by_ref[synth.assets[t].asset_id] = synth.assets[t];
        const std::string& speaker = synth.record.turns[t].speaker_id;
        if (!speaker_refs.count(speaker)) speaker_refs[speaker] = synth.assets[t];
      }
      AudioLookup lookup = [&by_ref](const std::string& ref) {
        auto it = by_ref.find(ref);
        OMNI_CHECK(it != by_ref.end(), "verify: unknown audio ref " + ref);
        return it->second;
      };
      VerificationReport one =
          verify_corpus({corpus[i]}, stack.asr(), stack.sim(), speaker_refs, lookup, vc);
      report.counts[reject_reason_name(one.verdicts[0].reason)]++;
      report.verdicts.push_back(std::move(one.verdicts[0]));
    }
    write_report(report, f.at("report").get<std::string>());
    for (const auto& [reason, count] : report.counts)
      std::cout << reason << ": " << count << "\n";
    std::cout << "report written to " << f.at("report").get<std::string>() << "\n";
    return 0;
  }

  throw OmniError("unknown forge step " + step);
}

int run_eval(const std::string& task, const std::string& config_path,
             const std::string& out_dir) {
  json cfg = load_config(config_path);
  OMNI_CHECK(cfg.contains("eval"), "config has no eval section");
  const json& e = cfg.at("eval");
  fs::create_directories(out_dir);
  Language lang = language_from_name(get_or<std::string>(e, "language", "en"));

  if (task == "sim-matrix") {
    const std::string audio_dir = e.at("audio_dir").get<std::string>();
    std::map<std::string, std::vector<SpeakerEmbedding>> by_speaker;
    for (const auto& [speaker, refs] : e.at("clips").items())
      for (const auto& ref : refs)
        by_speaker[speaker].push_back(speaker_embedding(
            read_wav(audio_dir + "/" + ref.get<std::string>() + ".wav")));
    const int n_sets = get_or(e, "n_sets", 3);
    auto matrices = similarity_matrix(by_speaker, n_sets, get_or<uint64_t>(e, "seed", 0));
    for (size_t i = 0; i < matrices.size(); ++i) {
      const std::string stem = out_dir + "/sim_matrix_" + std::to_string(i);
      write_similarity_matrix(matrices[i], stem + ".txt", stem + ".pgm");
    }
    std::cout << "wrote " << matrices.size() << " matrices to " << out_dir << "\n";
    return 0;
  }

  if (task == "voice-match") {
    AudioAsset a = read_wav(e.at("wav_a").get<std::string>(), "a");
    AudioAsset b = read_wav(e.at("wav_b").get<std::string>(), "b");
    double cos = cosine_similarity(speaker_embedding(a), speaker_embedding(b));
    bool match = voice_match(a, b);
    std::cout << "cosine " << cos << " -> " << (match ? "match" : "no match") << "\n";
    return match ? 0 : 1;
  }

  if (task == "stats") {
    std::vector<DialogueRecord> corpus = read_corpus(e.at("corpus").get<std::string>());
    AudioLookup lookup;
    if (e.contains("audio_dir")) {
      std::string audio_dir = e.at("audio_dir").get<std::string>();
      lookup = [audio_dir](const std::string& ref) {
        return read_wav(audio_dir + "/" + ref + ".wav", ref);
      };
    }
    CorpusStats stats = corpus_stats(corpus, lookup);
    json j = {{"characters", stats.n_characters},
              {"samples", stats.n_samples},
              {"avg_turns", stats.avg_turns},
              {"speech_hours_user", stats.speech_hours_user},
              {"speech_hours_character", stats.speech_hours_character}};
    std::ofstream out(out_dir + "/stats.json");
    out << j.dump(2) << "\n";
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  if (task == "asr-wer") {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& p : e.at("pairs"))
      pairs.push_back({p.at("ref").get<std::string>(), p.at("hyp").get<std::string>()});
    double w = eval_asr_wer(pairs, lang);
    std::cout << "corpus WER: " << w << "\n";
    std::ofstream(out_dir + "/asr_wer.txt") << w << "\n";
    return 0;
  }

  if (task == "tts-wer") {
    // Offline stub round-trip: synthesize each text, transcribe it back.
    StubSpeechStack stack;
    std::vector<std::pair<AudioAsset, std::string>> pairs;
    for (const auto& t : e.at("tts_texts")) {
      std::string text = t.get<std::string>();
      pairs.push_back({stack.tts().synthesize(text, "eval"), text});
    }
    double w = eval_tts_wer(pairs, stack.asr(), lang);
    std::cout << "TTS WER: " << w << "\n";
    std::ofstream(out_dir + "/tts_wer.txt") << w << "\n";
    return 0;
  }

  throw OmniError("unknown eval task " + task);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speech-language role-playing toolkit"};
  app.require_subcommand(1);

  std::string stage, config_path, corpus_path, out_dir, init_dir;
  auto* train = app.add_subcommand("train", "run a training stage");
  train->add_option("--stage", stage, "1, 2, or cfm")
      ->required()
      ->check(CLI::IsMember({"1", "2", "cfm"}));
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--corpus", corpus_path, "dialogue corpus (jsonl)")->required();
  train->add_option("--out", out_dir, "checkpoint directory")->required();
  train->add_option("--init", init_dir, "checkpoint to continue from");

  std::string ckpt_dir, profile_id, profiles_path, text, wav_path, emit_audio;
  int max_len = 48;
  auto* chat = app.add_subcommand("chat", "one streamed response as a character");
  chat->add_option("--ckpt-dir", ckpt_dir, "checkpoint directory")->required();
  chat->add_option("--profile", profile_id, "character id")->required();
  chat->add_option("--profiles", profiles_path, "profiles jsonl (default: in ckpt dir)");
  auto* text_opt = chat->add_option("--text", text, "text query");
  chat->add_option("--wav", wav_path, "speech query (wav)")->excludes(text_opt);
  chat->add_option("--emit-audio", emit_audio, "write response audio here");
  chat->add_option("--max-len", max_len, "max response tokens");

  int trials = 5;
  auto* bench = app.add_subcommand("bench-latency", "time to first audio chunk");
  bench->add_option("--ckpt-dir", ckpt_dir, "checkpoint directory")->required();
  bench->add_option("--trials", trials, "timed trials after warm-up")
      ->check(CLI::PositiveNumber);
  bench->add_option("--profile", profile_id, "character id (default: built-in)");
  bench->add_option("--profiles", profiles_path, "profiles jsonl");

  std::string forge_step;
  auto* forge = app.add_subcommand("forge", "dataset construction pipeline");
  forge->add_option("step", forge_step, "profiles | dialogues | speech | verify")
      ->required()
      ->check(CLI::IsMember({"profiles", "dialogues", "speech", "verify"}));
  forge->add_option("--config", config_path, "config file")->required();

  std::string eval_task;
  auto* eval = app.add_subcommand("eval", "evaluation harness");
  eval->add_option("task", eval_task, "sim-matrix | voice-match | stats | asr-wer | tts-wer")
      ->required()
      ->check(CLI::IsMember({"sim-matrix", "voice-match", "stats", "asr-wer", "tts-wer"}));
  eval->add_option("--config", config_path, "config file")->required();
  eval->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return run_train(stage, config_path, corpus_path, out_dir, init_dir);
    if (chat->parsed()) {
      OMNI_CHECK(!text.empty() || !wav_path.empty(), "chat: give --text or --wav");
      return run_chat(ckpt_dir, profile_id, profiles_path, text, wav_path, emit_audio,
                      max_len);
    }
    if (bench->parsed()) return run_bench(ckpt_dir, trials, profile_id, profiles_path);
    if (forge->parsed()) return run_forge(forge_step, config_path);
    if (eval->parsed()) return run_eval(eval_task, config_path, out_dir);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 0;
}

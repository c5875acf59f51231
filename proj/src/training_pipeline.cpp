#include "omni/training_pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace omni {

using ad::Var;
using nlohmann::json;
namespace fs = std::filesystem;

double lr_at_step(const OptimizerConfig& cfg, int step, int max_steps) {
  OMNI_CHECK(max_steps >= 1, "lr schedule: max_steps must be positive");
  const double s = static_cast<double>(std::clamp(step, 0, max_steps));
  const double w = cfg.warmup_ratio * static_cast<double>(max_steps);
  if (w > 0 && s <= w) return cfg.peak_lr * s / w;
  if (s >= max_steps) return 0.0;
  return cfg.peak_lr * (static_cast<double>(max_steps) - s) /
         (static_cast<double>(max_steps) - w);
}

void AdamW::step(const std::vector<ad::ParamStore*>& stores, double lr) {
  double sq = 0;
  for (auto* store : stores)
    for (const auto& name : store->order) {
      auto it = store->grads.find(name);
      if (it != store->grads.end() && it->second.size() > 0) sq += it->second.squaredNorm();
    }
  const double norm = std::sqrt(sq);
  const double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm)
                          ? cfg_.clip_norm / norm
                          : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto* store : stores) {
    for (const auto& name : store->order) {
      auto it = store->grads.find(name);
      if (it == store->grads.end() || it->second.size() == 0) continue;
      Mat g = it->second * clip;
      auto& [m, v] = state_[{store, name}];
      if (m.size() == 0) {
        m = Mat::Zero(g.rows(), g.cols());
        v = Mat::Zero(g.rows(), g.cols());
      }
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      Mat mhat = m / bc1;
      Mat vhat = v / bc2;
      Mat& p = store->values[name];
      p -= lr * (mhat.array() / (vhat.array().sqrt() + cfg_.eps)).matrix();
      p -= lr * cfg_.weight_decay * p;
    }
  }
}

// ---- model bundle ----

namespace {

TransformerConfig language_config(const ModelConfig& cfg, int vocab) {
  TransformerConfig c;
  c.d_model = cfg.d_model;
  c.n_layers = cfg.n_layers;
  c.n_heads = cfg.n_heads;
  c.d_ff = cfg.d_ff;
  c.vocab = vocab;
  c.max_seq = cfg.max_seq;
  return c;
}

TransformerConfig speech_lm_config(const ModelConfig& cfg) {
  TransformerConfig c;
  c.d_model = cfg.d_speechlm;
  c.n_layers = cfg.speech_layers;
  c.n_heads = cfg.speech_heads;
  c.d_ff = cfg.speech_ff;
  c.vocab = cfg.v_speech + 2;  // set again by the decoder
  c.max_seq = cfg.max_seq;
  return c;
}

}  // namespace

OmniModel::OmniModel(ModelConfig c, Tokenizer tok)
    : cfg((c.cfm.d_context = c.d_model, c)),
      tokenizer(std::move(tok)),
      encoder(cfg.encoder),
      adapter(cfg.encoder.group_size * cfg.encoder.d_enc, cfg.adapter_hidden, cfg.d_model,
              cfg.seed + 1),
      language(language_config(cfg, tokenizer.vocab_size()), cfg.seed + 2),
      decoder(cfg.d_model, cfg.v_speech, speech_lm_config(cfg), cfg.seed + 3),
      cfm(cfg.cfm, cfg.seed + 4) {}

std::unique_ptr<OmniModel> make_model(ModelConfig cfg, Tokenizer tok) {
  return std::make_unique<OmniModel>(std::move(cfg), std::move(tok));
}

// ---- parameter blobs ----

void save_params(const ad::ParamStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  OMNI_CHECK(out.good(), "cannot write params: " + path);
  out.write("OMNIPB01", 8);
  uint32_t count = static_cast<uint32_t>(store.order.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& name : store.order) {
    const Mat& m = store.values.at(name);
    uint32_t len = static_cast<uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(name.data(), len);
    int64_t rows = m.rows(), cols = m.cols();
    out.write(reinterpret_cast<const char*>(&rows), 8);
    out.write(reinterpret_cast<const char*>(&cols), 8);
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
}

void load_params(ad::ParamStore& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  OMNI_CHECK(in.good(), "cannot open params: " + path);
  char magic[8];
  in.read(magic, 8);
  OMNI_CHECK(std::string(magic, 8) == "OMNIPB01", path + ": bad param blob magic");
  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  OMNI_CHECK(count == store.order.size(), path + ": parameter count mismatch");
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    std::string name(len, '\0');
    in.read(name.data(), len);
    int64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 8);
    in.read(reinterpret_cast<char*>(&cols), 8);
    Mat& m = store.at(name);
    OMNI_CHECK(m.rows() == rows && m.cols() == cols, path + ": shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
  }
  OMNI_CHECK(in.good(), path + ": truncated param blob");
}

namespace {

const std::vector<std::pair<std::string, const ad::ParamStore*>> module_stores(
    const OmniModel& model) {
  return {{"adapter", &model.adapter.params()},
          {"language", &model.language.model().params()},
          {"projection", &model.decoder.projection_params()},
          {"speech_lm", &model.decoder.speech_lm().params()},
          {"cfm", &model.cfm.params()}};
}

}  // namespace

void save_checkpoint(const OmniModel& model, const std::string& dir, int stage, int step) {
  fs::create_directories(dir);
  json manifest;
  manifest["stage"] = stage;
  manifest["step"] = step;
  for (const auto& [name, store] : module_stores(model)) {
    save_params(*store, dir + "/" + name + ".bin");
    manifest["hashes"][name] = hash_hex(store->content_hash());
  }
  if (model.codebook) {
    save_codebook(*model.codebook, dir + "/codebook.bin");
    manifest["hashes"]["codebook"] = hash_hex(hash_matrix(model.codebook->centroids));
  }
  std::ofstream out(dir + "/manifest.json");
  OMNI_CHECK(out.good(), "cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

CheckpointInfo read_checkpoint_manifest(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  OMNI_CHECK(in.good(), "no checkpoint manifest in " + dir);
  json manifest = json::parse(in);
  CheckpointInfo info;
  info.stage = manifest.at("stage").get<int>();
  info.step = manifest.at("step").get<int>();
  for (const auto& [k, v] : manifest.at("hashes").items())
    info.hashes[k] = v.get<std::string>();
  return info;
}

CheckpointInfo load_checkpoint(OmniModel& model, const std::string& dir) {
  CheckpointInfo info = read_checkpoint_manifest(dir);
  const std::vector<std::pair<std::string, ad::ParamStore*>> stores = {
      {"adapter", &model.adapter.params()},
      {"language", &model.language.model().params()},
      {"projection", &model.decoder.projection_params()},
      {"speech_lm", &model.decoder.speech_lm().params()},
      {"cfm", &model.cfm.params()}};
  for (const auto& [name, store] : stores) {
    load_params(*store, dir + "/" + name + ".bin");
    OMNI_CHECK(hash_hex(store->content_hash()) == info.hashes.at(name),
               dir + ": hash mismatch for module " + name);
  }
  if (info.hashes.count("codebook")) {
    model.codebook = load_codebook(dir + "/codebook.bin");
    OMNI_CHECK(hash_hex(hash_matrix(model.codebook->centroids)) ==
                   info.hashes.at("codebook"),
               dir + ": codebook hash mismatch");
  }
  return info;
}

uint64_t checkpoint_content_hash(const std::string& dir) {
  CheckpointInfo info = read_checkpoint_manifest(dir);
  uint64_t h = 1469598103934665603ULL;
  for (const auto& [k, v] : info.hashes) {
    h = fnv1a(k.data(), k.size(), h);
    h = fnv1a(v.data(), v.size(), h);
  }
  return h;
}

// ---- supervision assembly ----

namespace {

struct Stage1Example {
  std::vector<int> tokens;           // BOS + prompt + response + EOS ids
  std::vector<int> targets;          // next-token alignment
  std::vector<uint8_t> mask;         // response positions
  std::vector<GroupedFrames> speech;  // grouped frames per placeholder
};

struct PromptParts {
  std::string prompt_text;
  std::string response_text;
  DialogueContext context;
  ModalityPayload query;
  std::vector<std::string> audio_refs;  // in placeholder order (context+query)
};

PromptParts split_record(const DialogueRecord& record,
                         const std::map<std::string, RoleProfile>& profiles) {
  record.validate();
  OMNI_CHECK(!record.profile_refs.empty(),
             "record " + record.dialogue_id + " has no profile_refs");
  auto pit = profiles.find(record.profile_refs.front());
  OMNI_CHECK(pit != profiles.end(),
             "unknown profile " + record.profile_refs.front() + " for " + record.dialogue_id);
  const RoleProfile& profile = pit->second;
  OMNI_CHECK(record.turns.size() >= 2,
             "record " + record.dialogue_id + " needs a query and a response");
  const Turn& response = record.turns.back();
  OMNI_CHECK(response.speaker_id == profile.role_id,
             "record " + record.dialogue_id + ": last turn must be the character response");
  OMNI_CHECK(response.payload.text,
             "record " + record.dialogue_id + ": response carries no text target");
  PromptParts parts;
  parts.query = record.turns[record.turns.size() - 2].payload;
  parts.context.assign(record.turns.begin(), record.turns.end() - 2);
  parts.prompt_text = assemble_prompt(profile, parts.context, parts.query);
  parts.response_text = *response.payload.text;
  for (const auto& turn : parts.context)
    if (turn.payload.audio_ref) parts.audio_refs.push_back(*turn.payload.audio_ref);
  if (parts.query.audio_ref) parts.audio_refs.push_back(*parts.query.audio_ref);
  return parts;
}

Stage1Example build_stage1_example(const DialogueRecord& record,
                                   const std::map<std::string, RoleProfile>& profiles,
                                   const OmniModel& model, const AssetResolver& assets) {
  PromptParts parts = split_record(record, profiles);
  Stage1Example ex;
  ex.tokens.push_back(Tokenizer::kBos);
  auto prompt_ids = model.tokenizer.encode(parts.prompt_text);
  ex.tokens.insert(ex.tokens.end(), prompt_ids.begin(), prompt_ids.end());
  const size_t prompt_len = ex.tokens.size();
  auto resp_ids = model.tokenizer.encode(parts.response_text);
  ex.tokens.insert(ex.tokens.end(), resp_ids.begin(), resp_ids.end());
  ex.tokens.push_back(Tokenizer::kEos);
  const size_t L = ex.tokens.size();
  ex.targets.assign(L, 0);
  ex.mask.assign(L, 0);
  for (size_t i = 0; i + 1 < L; ++i) {
    ex.targets[i] = ex.tokens[i + 1];
    ex.mask[i] = i + 1 >= prompt_len ? 1 : 0;
  }
  for (const auto& ref : parts.audio_refs) {
    OMNI_CHECK(assets, "record " + record.dialogue_id +
                           " carries speech but no asset resolver was given");
    AudioAsset audio = assets(ref);
    EncodedFrames frames = model.encoder.encode(audio);
    ex.speech.push_back(group_frames(frames, model.cfg.encoder.group_size));
  }
  return ex;
}

// Mean loss over examples on one tape; backward populates trainable grads.
double stage1_batch_loss(OmniModel& model, const std::vector<Stage1Example>& batch,
                         bool do_backward) {
  ad::Tape tape;
  Var total{nullptr, -1};
  for (const auto& ex : batch) {
    std::vector<Var> segs;
    for (const auto& g : ex.speech)
      segs.push_back(model.adapter.forward(tape, tape.var(g.frames)));
    Var rows = model.language.splice_var(tape, ex.tokens, segs);
    // splice widens each placeholder to its segment's rows; align the
    // supervision, leaving speech rows unsupervised
    std::vector<int> targets;
    std::vector<uint8_t> mask;
    size_t seg = 0;
    for (size_t i = 0; i < ex.tokens.size(); ++i) {
      if (ex.tokens[i] == Tokenizer::kSpeech) {
        const size_t n = static_cast<size_t>(segs[seg++].rows());
        targets.insert(targets.end(), n, 0);
        mask.insert(mask.end(), n, 0);
      } else {
        targets.push_back(ex.targets[i]);
        mask.push_back(ex.mask[i]);
      }
    }
    Var loss = model.language.loss_var(tape, rows, targets, mask);
    total = total.tape ? ad::add(total, loss) : loss;
  }
  Var mean = ad::scale(total, 1.0 / static_cast<double>(batch.size()));
  if (do_backward) tape.backward(mean);
  return mean.val()(0, 0);
}

std::vector<size_t> draw_batch(Rng& rng, size_t n, int batch_size) {
  std::vector<size_t> idx;
  for (int i = 0; i < batch_size; ++i)
    idx.push_back(static_cast<size_t>(rng.index(static_cast<int64_t>(n))));
  return idx;
}

}  // namespace

TrainResult train_stage1(const std::vector<DialogueRecord>& corpus,
                         const std::map<std::string, RoleProfile>& profiles,
                         OmniModel& model, const TrainConfig& cfg,
                         const AssetResolver& assets, const StepLogger& log) {
  cfg.validate();
  OMNI_CHECK(cfg.stage == 1, "train_stage1: cfg.stage must be 1");
  OMNI_CHECK(!corpus.empty(), "train_stage1: empty corpus");
  std::vector<Stage1Example> examples;
  for (const auto& rec : corpus)
    examples.push_back(build_stage1_example(rec, profiles, model, assets));

  std::vector<ad::ParamStore*> trainable = {&model.adapter.params(),
                                            &model.language.model().params()};
  AdamW opt(cfg.optimizer);
  Rng rng(cfg.seed);
  TrainResult result;
  result.initial_loss = stage1_batch_loss(model, examples, false);
  for (int step = 1; step <= cfg.max_steps; ++step) {
    std::vector<Stage1Example> batch;
    for (size_t i : draw_batch(rng, examples.size(), cfg.batch_size))
      batch.push_back(examples[i]);
    for (auto* s : trainable) s->zero_grads();
    double loss = stage1_batch_loss(model, batch, true);
    double lr = lr_at_step(cfg.optimizer, step, cfg.max_steps);
    opt.step(trainable, lr);
    result.loss_log.push_back(loss);
    if (log) log(step, lr, loss);
  }
  result.final_loss = stage1_batch_loss(model, examples, false);
  return result;
}

namespace {

double decoder_batch_loss(OmniModel& model, const std::vector<SpeechTargetExample>& batch,
                          bool do_backward) {
  ad::Tape tape;
  Var total{nullptr, -1};
  for (const auto& ex : batch) {
    Var prefix = model.decoder.project_var(tape, tape.var(ex.context_states));
    Var loss = model.decoder.loss_var(tape, prefix, ex.tokens);
    total = total.tape ? ad::add(total, loss) : loss;
  }
  Var mean = ad::scale(total, 1.0 / static_cast<double>(batch.size()));
  if (do_backward) tape.backward(mean);
  return mean.val()(0, 0);
}

}  // namespace

TrainResult train_speech_decoder(const std::vector<SpeechTargetExample>& examples,
                                 OmniModel& model, const TrainConfig& cfg,
                                 const StepLogger& log) {
  cfg.validate();
  OMNI_CHECK(!examples.empty(), "train_speech_decoder: no examples");
  std::vector<ad::ParamStore*> trainable = {&model.decoder.projection_params(),
                                            &model.decoder.speech_lm().params()};
  AdamW opt(cfg.optimizer);
  Rng rng(cfg.seed);
  TrainResult result;
  result.initial_loss = decoder_batch_loss(model, examples, false);
  for (int step = 1; step <= cfg.max_steps; ++step) {
    std::vector<SpeechTargetExample> batch;
    for (size_t i : draw_batch(rng, examples.size(), cfg.batch_size))
      batch.push_back(examples[i]);
    for (auto* s : trainable) s->zero_grads();
    double loss = decoder_batch_loss(model, batch, true);
    double lr = lr_at_step(cfg.optimizer, step, cfg.max_steps);
    opt.step(trainable, lr);
    result.loss_log.push_back(loss);
    if (log) log(step, lr, loss);
  }
  result.final_loss = decoder_batch_loss(model, examples, false);
  return result;
}

TrainResult train_stage2(const std::vector<DialogueRecord>& corpus,
                         const std::map<std::string, RoleProfile>& profiles,
                         OmniModel& model, const TrainConfig& cfg,
                         const AssetResolver& assets, const StepLogger& log) {
  OMNI_CHECK(cfg.stage == 2, "train_stage2: cfg.stage must be 2");
  OMNI_CHECK(!corpus.empty(), "train_stage2: empty corpus");
  OMNI_CHECK(model.codebook.has_value(), "train_stage2: model has no codebook");
  OMNI_CHECK(assets, "train_stage2: asset resolver required for speech targets");
  std::vector<SpeechTargetExample> examples;
  for (const auto& rec : corpus) {
    Stage1Example s1 = build_stage1_example(rec, profiles, model, assets);
    std::vector<Mat> segs;
    for (const auto& g : s1.speech) segs.push_back(model.adapter.adapt(g).embeddings);
    EmbeddingSequence seq = model.language.splice(s1.tokens, segs);
    auto [logits, states] = model.language.forward(seq);
    (void)logits;
    const Turn& response = rec.turns.back();
    OMNI_CHECK(response.payload.audio_ref,
               "record " + rec.dialogue_id + ": response carries no audio target");
    AudioAsset audio = assets(*response.payload.audio_ref);
    MelSpectrogram mel = compute_mel(audio);
    // one token per frames_per_token mel frames
    const int fpt = model.cfg.cfm.frames_per_token;
    MelSpectrogram down;
    down.values = Mat(mel.values.rows() / fpt, mel.values.cols());
    OMNI_CHECK(down.values.rows() >= 1, "record " + rec.dialogue_id + ": audio too short");
    for (Eigen::Index i = 0; i < down.values.rows(); ++i)
      down.values.row(i) = mel.values.row(i * fpt);
    SpeechTargetExample ex;
    ex.context_states = states.states;
    ex.tokens = tokenize_mel(down, *model.codebook);
    examples.push_back(std::move(ex));
  }
  return train_speech_decoder(examples, model, cfg, log);
}

namespace {

double cfm_batch_loss(OmniModel& model, const std::vector<const CfmExample*>& batch,
                      Rng& rng, bool do_backward) {
  ad::Tape tape;
  Var total{nullptr, -1};
  for (const auto* ex : batch) {
    double t = rng.uniform();
    Mat x0 = rng.normal_matrix(ex->mel.rows(), ex->mel.cols());
    Var loss = model.cfm.loss_var(tape, ex->mel, x0, t, ex->cond);
    total = total.tape ? ad::add(total, loss) : loss;
  }
  Var mean = ad::scale(total, 1.0 / static_cast<double>(batch.size()));
  if (do_backward) tape.backward(mean);
  return mean.val()(0, 0);
}

}  // namespace

TrainResult train_cfm(const std::vector<CfmExample>& examples, OmniModel& model,
                      const TrainConfig& cfg, const StepLogger& log) {
  cfg.validate();
  OMNI_CHECK(!examples.empty(), "train_cfm: no examples");
  std::vector<ad::ParamStore*> trainable = {&model.cfm.params()};
  AdamW opt(cfg.optimizer);
  Rng rng(cfg.seed);
  TrainResult result;
  {
    std::vector<const CfmExample*> all;
    for (const auto& e : examples) all.push_back(&e);
    Rng r0(cfg.seed + 99);
    result.initial_loss = cfm_batch_loss(model, all, r0, false);
  }
  for (int step = 1; step <= cfg.max_steps; ++step) {
    std::vector<const CfmExample*> batch;
    for (size_t i : draw_batch(rng, examples.size(), cfg.batch_size))
      batch.push_back(&examples[i]);
    for (auto* s : trainable) s->zero_grads();
    double loss = cfm_batch_loss(model, batch, rng, true);
    double lr = lr_at_step(cfg.optimizer, step, cfg.max_steps);
    opt.step(trainable, lr);
    result.loss_log.push_back(loss);
    if (log) log(step, lr, loss);
  }
  {
    std::vector<const CfmExample*> all;
    for (const auto& e : examples) all.push_back(&e);
    Rng r0(cfg.seed + 99);
    result.final_loss = cfm_batch_loss(model, all, r0, false);
  }
  return result;
}

// ---- respond ----

void respond(OmniModel& model, const RoleProfile& profile, const DialogueContext& context,
             const ModalityPayload& input, const RespondConfig& cfg, const EventSink& sink,
             const AssetResolver& assets) {
  OMNI_CHECK(sink, "respond: no event sink");
  input.validate();
  std::string prompt_text = assemble_prompt(profile, context, input);
  std::vector<int> tokens;
  tokens.push_back(Tokenizer::kBos);
  auto ids = model.tokenizer.encode(prompt_text);
  tokens.insert(tokens.end(), ids.begin(), ids.end());

  std::vector<Mat> segs;
  auto add_segment = [&](const std::string& ref) {
    OMNI_CHECK(assets, "respond: speech input but no asset resolver");
    EncodedFrames frames = model.encoder.encode(assets(ref));
    segs.push_back(
        model.adapter.adapt(group_frames(frames, model.cfg.encoder.group_size)).embeddings);
  };
  for (const auto& turn : context)
    if (turn.payload.audio_ref) add_segment(*turn.payload.audio_ref);
  if (input.audio_ref) add_segment(*input.audio_ref);

  EmbeddingSequence prompt = model.language.splice(tokens, segs);

  DecodeConfig decode = cfg.decode;
  if (decode.eos_id < 0) decode.eos_id = Tokenizer::kEos;
  std::vector<int> text_tokens;
  auto gen = model.language.generate_text(prompt, decode, [&](int tok, const auto&) {
    RespondEvent ev;
    ev.kind = RespondEvent::Kind::text_token;
    ev.token_id = tok;
    ev.text_piece = model.tokenizer.decode({tok});
    sink(ev);
  });
  text_tokens = gen.tokens;
  const bool truncated = static_cast<int>(text_tokens.size()) >= decode.max_len;

  AudioAsset full_audio;
  full_audio.asset_id = "response";
  full_audio.sample_rate = 16000;
  if (cfg.emit_speech) {
    OMNI_CHECK(model.codebook.has_value(), "respond: speech output requires a codebook");
    ConditioningPrefix prefix = model.decoder.project_context(gen.states);
    Vec pooled = gen.states.states.colwise().mean();
    Vec speaker = Vec::Zero(160);
    if (assets && !profile.reference_audio_ids.empty()) {
      speaker = omni::speaker_embedding(assets(profile.reference_audio_ids.front())).vector;
    }
    std::vector<int> chunk;
    int chunk_index = 0;
    auto flush_chunk = [&]() {
      if (chunk.empty()) return;
      Mat centroid_frames = detokenize_tokens(chunk, *model.codebook);
      CfmConditions cond;
      cond.token_frames =
          upsample_token_frames(centroid_frames, model.cfg.cfm.frames_per_token);
      cond.speaker = speaker;
      cond.context_pooled = pooled;
      MelSpectrogram mel =
          model.cfm.sample_mel(cond, cfg.cfm_steps,
                               cfg.audio_seed + static_cast<uint64_t>(chunk_index));
      AudioAsset audio = vocode(mel, cfg.audio_seed + static_cast<uint64_t>(chunk_index));
      full_audio.samples.insert(full_audio.samples.end(), audio.samples.begin(),
                                audio.samples.end());
      RespondEvent ev;
      ev.kind = RespondEvent::Kind::audio_chunk;
      ev.audio = std::move(audio);
      sink(ev);
      chunk.clear();
      ++chunk_index;
    };
    DecodeConfig sp = decode;
    sp.max_len = cfg.speech_max_len;
    model.decoder.predict_speech_tokens(prefix.rows, sp, [&](int tok) {
      chunk.push_back(tok);
      if (static_cast<int>(chunk.size()) >= cfg.chunk_tokens) flush_chunk();
    });
    flush_chunk();
  }

  RespondEvent fin;
  fin.kind = RespondEvent::Kind::final_event;
  fin.full_text = model.tokenizer.decode(text_tokens);
  fin.full_audio = std::move(full_audio);
  fin.truncated = truncated;
  sink(fin);
}

LatencyReport measure_latency(const std::function<void(const EventSink&)>& session,
                              int trials, int chunk_tokens) {
  OMNI_CHECK(trials >= 1, "measure_latency: trials must be positive");
  using clock = std::chrono::steady_clock;
  auto run_once = [&]() -> double {
    auto start = clock::now();
    double first_audio_ms = -1;
    session([&](const RespondEvent& ev) {
      if (ev.kind == RespondEvent::Kind::audio_chunk && first_audio_ms < 0) {
        first_audio_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
      }
    });
    OMNI_CHECK(first_audio_ms >= 0, "measure_latency: session produced no audio chunk");
    return first_audio_ms;
  };
  run_once();  // warm-up, discarded
  LatencyReport report;
  report.trials = trials;
  report.chunk_tokens = chunk_tokens;
  for (int i = 0; i < trials; ++i) report.samples_ms.push_back(run_once());
  std::vector<double> sorted = report.samples_ms;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  report.median_ms = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return report;
}

}  // namespace omni

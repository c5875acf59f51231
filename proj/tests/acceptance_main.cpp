// Acceptance suite: runs the twelve release criteria in order and prints
// one pass/fail line each. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "omni/evaluation_harness.hpp"
#include "omni/training_pipeline.hpp"
#include "test_util.hpp"

using namespace omni;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  std::string name;
  std::function<bool(std::string&)> run;  // fills a detail string
};

#define REQUIRE_OR(cond, message)            \
  do {                                       \
    if (!(cond)) {                           \
      detail = std::string("failed: ") + (message); \
      return false;                          \
    }                                        \
  } while (0)

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// ---- shared toy fixtures ----

ModelConfig toy_model_config(uint64_t seed) {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 24;
  cfg.max_seq = 512;
  cfg.adapter_hidden = 8;
  cfg.d_speechlm = 12;
  cfg.speech_layers = 2;
  cfg.speech_heads = 2;
  cfg.speech_ff = 16;
  cfg.v_speech = 8;
  cfg.cfm.hidden = 8;
  cfg.cfm.n_blocks = 2;
  cfg.seed = seed;
  return cfg;
}

std::unique_ptr<OmniModel> toy_model(uint64_t seed) {
  return make_model(toy_model_config(seed), Tokenizer::train({"hello world"}, 0));
}

RoleProfile toy_profile() {
  RoleProfile p;
  p.role_id = "mira";
  p.name = "Mira";
  p.persona_text = "A quiet lighthouse keeper who speaks in short weathered sentences.";
  p.voice_style_text = "low and even";
  return p;
}

DialogueRecord text_record(const std::string& id, const std::string& query,
                           const std::string& response) {
  DialogueRecord rec;
  rec.dialogue_id = id;
  rec.participants = {"user", "mira"};
  rec.profile_refs = {"mira"};
  Turn q;
  q.speaker_id = "user";
  q.payload = ModalityPayload::text_only_payload(query);
  q.index = 0;
  Turn r;
  r.speaker_id = "mira";
  r.payload = ModalityPayload::text_only_payload(response);
  r.index = 1;
  rec.turns = {q, r};
  return rec;
}

std::string temp_dir(const std::string& leaf) {
  std::string dir = (fs::temp_directory_path() / leaf).string();
  fs::remove_all(dir);
  return dir;
}

// ---- criteria ----

bool c1_grouping_oracle(std::string& detail) {
  const double start = now_seconds();
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    int n_f = 1 + static_cast<int>(rng.index(40));
    int d_enc = 1 + static_cast<int>(rng.index(16));
    int k = 1 + static_cast<int>(rng.index(n_f));
    EncodedFrames frames;
    frames.frames = rng.normal_matrix(n_f, d_enc);
    GroupedFrames grouped = group_frames(frames, k);
    REQUIRE_OR(grouped.frames.rows() == n_f / k, "row count");
    REQUIRE_OR(grouped.frames.cols() == static_cast<Eigen::Index>(k) * d_enc, "col count");
    for (int i = 0; i < n_f / k; ++i)
      for (int g = 0; g < k; ++g)
        for (int j = 0; j < d_enc; ++j)
          REQUIRE_OR(grouped.frames(i, g * d_enc + j) == frames.frames(k * i + g, j),
                     "entry mismatch at trial " + std::to_string(trial));
  }
  const double elapsed = now_seconds() - start;
  detail = "200 triples in " + std::to_string(elapsed) + " s";
  return elapsed < 5.0;
}

bool c2_loss_identities(std::string& detail) {
  for (int v : {16, 64, 256}) {
    Mat logits = Mat::Zero(4, v);
    std::vector<int> targets = {0, 1, v / 2, v - 1};
    std::vector<uint8_t> mask(4, 1);
    REQUIRE_OR(std::abs(language_loss_value(logits, targets, mask) - std::log(v)) < 1e-6,
               "language ln V, V=" + std::to_string(v));
    REQUIRE_OR(std::abs(speech_loss_value(logits, targets) - std::log(v)) < 1e-6,
               "speech ln V, V=" + std::to_string(v));
  }
  Mat onehot = Mat::Zero(3, 64);
  std::vector<int> targets = {3, 9, 50};
  for (int i = 0; i < 3; ++i) onehot(i, targets[i]) = 100.0;
  std::vector<uint8_t> mask(3, 1);
  REQUIRE_OR(language_loss_value(onehot, targets, mask) < 1e-6, "language one-hot");
  REQUIRE_OR(speech_loss_value(onehot, targets) < 1e-6, "speech one-hot");
  detail = "ln V within 1e-6 for V in {16,64,256}; one-hot < 1e-6";
  return true;
}

bool c3_causality(std::string& detail) {
  auto model = toy_model(7);
  Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    int rows = 3 + static_cast<int>(rng.index(6));
    {
      EmbeddingSequence seq;
      seq.embeddings = rng.normal_matrix(rows, 16);
      seq.modality_mask.assign(static_cast<size_t>(rows), ModalityTag::text);
      auto [base, s0] = model->language.forward(seq);
      int t = static_cast<int>(rng.index(rows - 1));
      EmbeddingSequence perturbed = seq;
      perturbed.embeddings.row(t + 1).array() += 0.5;
      auto [after, s1] = model->language.forward(perturbed);
      (void)s0;
      (void)s1;
      for (int i = 0; i <= t; ++i)
        REQUIRE_OR(base.row(i) == after.row(i), "language LM leaked at trial " +
                                                    std::to_string(trial));
    }
    {
      Mat input = rng.normal_matrix(rows, 12);
      auto [base, h0] = model->decoder.speech_lm().forward_values(input);
      int t = static_cast<int>(rng.index(rows - 1));
      Mat perturbed = input;
      perturbed.row(t + 1).array() += 0.5;
      auto [after, h1] = model->decoder.speech_lm().forward_values(perturbed);
      (void)h0;
      (void)h1;
      for (int i = 0; i <= t; ++i)
        REQUIRE_OR(base.row(i) == after.row(i),
                   "speech LM leaked at trial " + std::to_string(trial));
    }
  }
  detail = "both LMs bit-exact under future perturbation, 50 trials each";
  return true;
}

bool c4_gradient_checks(std::string& detail) {
  const double start = now_seconds();
  double worst = 0;

  {  // language loss through splice over all language-core parameters
    TransformerConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 24;
    cfg.vocab = 16;
    cfg.max_seq = 64;
    LanguageCore core(cfg, 77);
    std::vector<int> tokens = {0, 4, 7, 2, 9};  // avoids the speech placeholder id
    std::vector<int> targets = {4, 7, 2, 9, 1};
    std::vector<uint8_t> mask = {0, 1, 1, 1, 1};
    auto loss = [&]() {
      ad::Tape tape;
      ad::Var rows = core.splice_var(tape, tokens, {});
      return core.loss_var(tape, rows, targets, mask).val()(0, 0);
    };
    core.model().params().zero_grads();
    {
      ad::Tape tape;
      ad::Var rows = core.splice_var(tape, tokens, {});
      tape.backward(core.loss_var(tape, rows, targets, mask));
    }
    auto r = testutil::grad_check(core.model().params(), loss, 1e-4, 4);
    REQUIRE_OR(r.max_rel_err < 1e-4, "language_loss grad: " + r.worst);
    worst = std::max(worst, r.max_rel_err);
  }

  {  // speech loss over projection + speech LM parameters
    TransformerConfig cfg;
    cfg.d_model = 12;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_seq = 64;
    RoleSpeechDecoder dec(10, 4, cfg, 19);
    Mat context = Rng(20).normal_matrix(2, 10);
    std::vector<int> targets = {1, 3, 0};
    auto loss = [&]() {
      ad::Tape tape;
      ad::Var prefix = dec.project_var(tape, tape.var(context));
      return dec.loss_var(tape, prefix, targets).val()(0, 0);
    };
    dec.projection_params().zero_grads();
    dec.speech_lm().params().zero_grads();
    {
      ad::Tape tape;
      ad::Var prefix = dec.project_var(tape, tape.var(context));
      tape.backward(dec.loss_var(tape, prefix, targets));
    }
    auto rp = testutil::grad_check(dec.projection_params(), loss, 1e-4, 4);
    REQUIRE_OR(rp.max_rel_err < 1e-4, "speech_loss phi grad: " + rp.worst);
    auto rl = testutil::grad_check(dec.speech_lm().params(), loss, 1e-4, 2);
    REQUIRE_OR(rl.max_rel_err < 1e-4, "speech_loss LM grad: " + rl.worst);
    worst = std::max({worst, rp.max_rel_err, rl.max_rel_err});
  }

  {  // cfm loss over flow-matcher parameters
    FlowMatcherConfig cfg;
    cfg.n_mels = 5;
    cfg.d_context = 7;
    cfg.hidden = 6;
    cfg.n_blocks = 2;
    FlowMatcher fm(cfg, 3);
    Rng rng(4);
    Mat x1 = rng.normal_matrix(4, 5);
    Mat x0 = rng.normal_matrix(4, 5);
    CfmConditions cond;
    cond.token_frames = rng.normal_matrix(4, 5);
    cond.speaker = rng.normal_matrix(10, 1);
    cond.context_pooled = rng.normal_matrix(7, 1);
    auto loss = [&]() {
      ad::Tape tape;
      return fm.loss_var(tape, x1, x0, 0.4, cond).val()(0, 0);
    };
    fm.params().zero_grads();
    {
      ad::Tape tape;
      tape.backward(fm.loss_var(tape, x1, x0, 0.4, cond));
    }
    auto r = testutil::grad_check(fm.params(), loss, 1e-4, 4);
    REQUIRE_OR(r.max_rel_err < 1e-4, "cfm_loss grad: " + r.worst);
    worst = std::max(worst, r.max_rel_err);
  }

  {  // adapter probe
    SpeechAdapter adapter(6, 8, 5, 17);
    Mat input = Rng(21).normal_matrix(4, 6);
    auto loss = [&]() {
      ad::Tape tape;
      ad::Var out = adapter.forward(tape, tape.var(input));
      ad::Var zero = tape.var(Mat::Zero(out.rows(), out.cols()));
      return ad::mse_mean(out, zero).val()(0, 0);
    };
    adapter.params().zero_grads();
    {
      ad::Tape tape;
      ad::Var out = adapter.forward(tape, tape.var(input));
      ad::Var zero = tape.var(Mat::Zero(out.rows(), out.cols()));
      tape.backward(ad::mse_mean(out, zero));
    }
    auto r = testutil::grad_check(adapter.params(), loss);
    REQUIRE_OR(r.max_rel_err < 1e-4, "adapter grad: " + r.worst);
    worst = std::max(worst, r.max_rel_err);
  }

  const double elapsed = now_seconds() - start;
  detail = "max rel err " + std::to_string(worst) + " in " + std::to_string(elapsed) + " s";
  return elapsed < 120.0;
}

bool c5_otcfm_exactness(std::string& detail) {
  Rng rng(6);
  Mat x0 = rng.normal_matrix(5, 4);
  Mat x1 = rng.normal_matrix(5, 4);
  REQUIRE_OR(ot_path_point(x0, x1, 0.0, 0.0) == x0, "path start not exactly x0");
  REQUIRE_OR(ot_path_point(x0, x1, 1.0, 0.0) == x1, "path end not exactly x1");
  Mat u = ot_target_field(x0, x1, 0.0);
  REQUIRE_OR((u - (x1 - x0)).cwiseAbs().maxCoeff() == 0.0, "oracle field is not x1 - x0");
  FieldFn oracle = [&](const Mat&, double) { return u; };
  for (int steps : {1, 2, 10}) {
    Mat end = integrate_euler(oracle, x0, steps);
    REQUIRE_OR((end - x1).cwiseAbs().maxCoeff() < 1e-6,
               "euler endpoint off at steps=" + std::to_string(steps));
  }
  detail = "analytic field integrates to x1 within 1e-6 at steps {1,2,10}";
  return true;
}

bool c6_freeze_contract(std::string& detail) {
  auto model = toy_model(11);
  std::map<std::string, RoleProfile> profiles = {{"mira", toy_profile()}};
  std::vector<DialogueRecord> corpus1 = {
      text_record("d0", "What then?", "The fog rolls in."),
      text_record("d1", "Go on.", "The lamp holds."),
  };
  TrainConfig s1 = TrainConfig::stage1_defaults();
  s1.max_steps = 10;
  s1.batch_size = 2;
  train_stage1(corpus1, profiles, *model, s1);
  const std::string dir = temp_dir("omni_accept_ckpt");
  save_checkpoint(*model, dir, 1, s1.max_steps);
  CheckpointInfo stage1_info = read_checkpoint_manifest(dir);

  MelSpectrogram mel = compute_mel(testutil::tone(120, 700, 0.8));
  model->codebook = fit_codebook({mel}, 8, 5);
  DialogueRecord rec = text_record("d2", "What then?", "The fog rolls in.");
  rec.turns[1].payload =
      ModalityPayload::speech_and_text_payload("The fog rolls in.", "resp");
  AssetResolver assets = [](const std::string& ref) {
    return testutil::tone(120, 700, 0.8, ref);
  };
  TrainConfig s2 = TrainConfig::stage2_defaults();
  s2.max_steps = 10;
  s2.batch_size = 2;
  train_stage2({rec}, profiles, *model, s2, assets);

  REQUIRE_OR(hash_hex(model->adapter.params().content_hash()) ==
                 stage1_info.hashes.at("adapter"),
             "adapter hash drifted during stage 2");
  REQUIRE_OR(hash_hex(model->language.model().params().content_hash()) ==
                 stage1_info.hashes.at("language"),
             "language hash drifted during stage 2");
  REQUIRE_OR(hash_hex(model->decoder.projection_params().content_hash()) !=
                 stage1_info.hashes.at("projection"),
             "projection did not train in stage 2");
  fs::remove_all(dir);
  detail = "adapter and language bit-identical to the stage-1 checkpoint";
  return true;
}

bool c7_conditioning_efficacy(std::string& detail) {
  auto model = toy_model(11);
  Rng rng(5);
  const int n_examples = 8, seq_len = 8;
  std::vector<SpeechTargetExample> examples;
  for (int i = 0; i < n_examples; ++i) {
    SpeechTargetExample ex;
    ex.context_states = rng.normal_matrix(4, 16);
    for (int j = 0; j < seq_len; ++j) ex.tokens.push_back((i + j) % 8);
    examples.push_back(std::move(ex));
  }
  TrainConfig cfg = TrainConfig::stage2_defaults();
  cfg.optimizer.peak_lr = 5e-3;
  cfg.max_steps = 1200;
  cfg.batch_size = 8;
  train_speech_decoder(examples, *model, cfg);

  DecodeConfig decode;
  decode.max_len = seq_len + 4;
  auto error_rate = [&](const std::vector<int>& pred, const std::vector<int>& target) {
    size_t denom = std::max(pred.size(), target.size());
    size_t errors = 0;
    for (size_t j = 0; j < denom; ++j)
      if (j >= pred.size() || j >= target.size() || pred[j] != target[j]) ++errors;
    return static_cast<double>(errors) / static_cast<double>(denom);
  };
  auto rep1 = [](const std::vector<int>& seq) {
    return seq.size() >= 2 ? repetition_rate(seq, 1) : 1.0;
  };
  double cond_err = 0, zero_err = 0, cond_rep = 0, zero_rep = 0;
  for (const auto& ex : examples) {
    ContextRepresentations states{ex.context_states};
    Mat prefix = model->decoder.project_context(states).rows;
    std::vector<int> cond_pred = model->decoder.predict_speech_tokens(prefix, decode);
    std::vector<int> zero_pred =
        model->decoder.predict_speech_tokens(Mat::Zero(prefix.rows(), prefix.cols()), decode);
    cond_err += error_rate(cond_pred, ex.tokens);
    zero_err += error_rate(zero_pred, ex.tokens);
    cond_rep += rep1(cond_pred);
    zero_rep += rep1(zero_pred);
  }
  cond_err /= n_examples;
  zero_err /= n_examples;
  cond_rep /= n_examples;
  zero_rep /= n_examples;
  detail = "token error " + std::to_string(100 * cond_err) + "% conditioned vs " +
           std::to_string(100 * zero_err) + "% zero-prefix; repetition " +
           std::to_string(cond_rep) + " vs " + std::to_string(zero_rep);
  REQUIRE_OR(cond_err < 0.05, "conditioned error rate too high: " + detail);
  REQUIRE_OR(zero_err > 0.50, "zero-prefix error rate too low: " + detail);
  REQUIRE_OR(cond_rep <= zero_rep + 1e-12, "conditioned outputs more repetitive: " + detail);
  return true;
}

bool c8_convergence(std::string& detail) {
  const double start = now_seconds();
  std::map<std::string, RoleProfile> profiles = {{"mira", toy_profile()}};
  std::vector<DialogueRecord> corpus1 = {
      text_record("d0", "What then?", "The fog rolls in."),
      text_record("d1", "Go on.", "The lamp holds."),
      text_record("d2", "Any ships?", "None tonight."),
      text_record("d3", "And the light?", "Steady as ever."),
  };
  DialogueRecord rec2 = text_record("d4", "What then?", "The fog rolls in.");
  rec2.turns[1].payload =
      ModalityPayload::speech_and_text_payload("The fog rolls in.", "resp");
  AssetResolver assets = [](const std::string& ref) {
    return testutil::tone(120, 700, 0.8, ref);
  };
  MelSpectrogram mel = compute_mel(testutil::tone(120, 700, 0.8));

  auto run_pipeline = [&](const std::string& leaf, double& s1_drop, double& s2_drop) {
    auto model = toy_model(11);
    TrainConfig s1 = TrainConfig::stage1_defaults();
    s1.optimizer.peak_lr = 3e-3;
    s1.max_steps = 250;
    s1.batch_size = 8;
    TrainResult r1 = train_stage1(corpus1, profiles, *model, s1);
    s1_drop = 1.0 - r1.final_loss / r1.initial_loss;
    model->codebook = fit_codebook({mel}, 8, 5);
    TrainConfig s2 = TrainConfig::stage2_defaults();
    s2.optimizer.peak_lr = 3e-3;
    s2.max_steps = 250;
    s2.batch_size = 8;
    TrainResult r2 = train_stage2({rec2}, profiles, *model, s2, assets);
    s2_drop = 1.0 - r2.final_loss / r2.initial_loss;
    const std::string dir = temp_dir(leaf);
    save_checkpoint(*model, dir, 2, s2.max_steps);
    uint64_t h = checkpoint_content_hash(dir);
    fs::remove_all(dir);
    return h;
  };
  double s1_drop_a = 0, s2_drop_a = 0, s1_drop_b = 0, s2_drop_b = 0;
  uint64_t ha = run_pipeline("omni_accept_conv_a", s1_drop_a, s2_drop_a);
  uint64_t hb = run_pipeline("omni_accept_conv_b", s1_drop_b, s2_drop_b);
  const double elapsed = now_seconds() - start;
  detail = "stage1 drop " + std::to_string(100 * s1_drop_a) + "%, stage2 drop " +
           std::to_string(100 * s2_drop_a) + "%, " + std::to_string(elapsed) + " s";
  REQUIRE_OR(s1_drop_a >= 0.5, "stage-1 loss fell under 50%: " + detail);
  REQUIRE_OR(s2_drop_a >= 0.5, "stage-2 loss fell under 50%: " + detail);
  REQUIRE_OR(ha == hb && s1_drop_a == s1_drop_b && s2_drop_a == s2_drop_b,
             "rerun did not reproduce the checkpoint hash");
  return elapsed < 15 * 60;
}

bool c9_filter_oracle(std::string& detail) {
  // five-record fixture: one keeper plus one violation per filter stage
  auto speech_record = [](const std::string& id, const std::string& text) {
    DialogueRecord rec;
    rec.dialogue_id = id;
    rec.participants = {"a", "b"};
    rec.profile_refs = {"a"};
    for (int i = 0; i < 4; ++i) {
      Turn t;
      t.speaker_id = i % 2 ? "b" : "a";
      t.payload =
          ModalityPayload::speech_and_text_payload(text, id + "_t" + std::to_string(i));
      t.index = i;
      rec.turns.push_back(t);
    }
    return rec;
  };
  class EchoAsr : public AsrClient {
   public:
    std::string transcribe(const AudioAsset& audio) override {
      return audio.asset_id.rfind("bad_wer", 0) == 0 ? "entirely different words" : expected;
    }
    std::string expected;
  };
  class FixedSim : public SimilarityClient {
   public:
    explicit FixedSim(double value) : value_(value) {}
    double similarity(const AudioAsset&, const AudioAsset&) override { return value_; }
    double value_;
  };
  std::vector<DialogueRecord> records;
  records.push_back(speech_record("keeper", "all is well tonight"));
  DialogueRecord bad_pattern = speech_record("bad_pattern", "line");
  bad_pattern.turns[1].speaker_id = "a";
  records.push_back(bad_pattern);
  DialogueRecord bad_length = speech_record("bad_length", "line");
  bad_length.turns.resize(3);
  records.push_back(bad_length);
  DialogueRecord bad_style = speech_record("bad_style", "line");
  bad_style.turns[0].payload = ModalityPayload::speech_and_text_payload(
      "I am a helpful AI assistant", "bad_style_t0");
  records.push_back(bad_style);
  records.push_back(speech_record("bad_wer", "alpha beta gamma delta"));

  EchoAsr asr;
  FixedSim sim(1.0);
  std::map<std::string, AudioAsset> refs;
  AudioLookup lookup = [](const std::string& ref) {
    return testutil::tone(120, 700, 0.6, ref);
  };
  const std::vector<std::pair<bool, RejectReason>> expected = {
      {true, RejectReason::none},
      {false, RejectReason::pattern},
      {false, RejectReason::too_short},
      {false, RejectReason::assistant_style},
      {false, RejectReason::wer},
  };
  for (size_t i = 0; i < records.size(); ++i) {
    asr.expected = *records[i].turns[0].payload.text;
    VerificationReport r = verify_corpus({records[i]}, asr, sim, refs, lookup);
    REQUIRE_OR(r.verdicts[0].keep == expected[i].first &&
                   r.verdicts[0].reason == expected[i].second,
               "verdict mismatch for " + records[i].dialogue_id + " (got " +
                   reject_reason_name(r.verdicts[0].reason) + ")");
  }

  {  // boundary: WER exactly 10.0 and similarity exactly 0.8 both keep
    DialogueRecord rec = speech_record("boundary", "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10");
    class OneSubAsr : public AsrClient {
     public:
      std::string transcribe(const AudioAsset&) override {
        return "w1 w2 w3 w4 w5 w6 w7 w8 w9 wX";
      }
    } sub_asr;
    FixedSim boundary_sim(0.8);
    std::map<std::string, AudioAsset> speaker_refs = {
        {"a", testutil::tone(110, 700, 0.6, "ref_a")},
        {"b", testutil::tone(210, 1500, 0.6, "ref_b")}};
    AudioQualityResult aq =
        filter_audio_quality(rec, sub_asr, boundary_sim, speaker_refs, lookup);
    REQUIRE_OR(aq.keep, "boundary WER 10.0 / sim 0.8 must keep");
    FixedSim below(0.7999);
    aq = filter_audio_quality(rec, sub_asr, below, speaker_refs, lookup);
    REQUIRE_OR(!aq.keep && aq.sim_failed, "sim below 0.8 must reject");
  }

  {  // DP equals the exhaustive oracle for all {a,b} pairs, ref len <= 4,
     // hyp len <= 6, plus longer spot checks
    std::vector<std::vector<std::string>> seqs_by_len(7);
    std::function<void(std::vector<std::string>&, size_t)> build =
        [&](std::vector<std::string>& cur, size_t max_len) {
          seqs_by_len[cur.size()].push_back(
              [&cur] {
                std::string joined;
                for (size_t i = 0; i < cur.size(); ++i)
                  joined += (i ? " " : "") + cur[i];
                return joined;
              }());
          if (cur.size() == max_len) return;
          for (const char* w : {"a", "b"}) {
            cur.push_back(w);
            build(cur, max_len);
            cur.pop_back();
          }
        };
    std::vector<std::string> cur;
    build(cur, 6);
    auto words = [](const std::string& text) {
      std::vector<std::string> out;
      std::string w;
      for (char c : text + " ")
        if (c == ' ') {
          if (!w.empty()) out.push_back(w);
          w.clear();
        } else {
          w.push_back(c);
        }
      return out;
    };
    for (int rl = 1; rl <= 4; ++rl)
      for (const auto& ref : seqs_by_len[static_cast<size_t>(rl)])
        for (int hl = 0; hl <= 6; ++hl)
          for (const auto& hyp : seqs_by_len[static_cast<size_t>(hl)]) {
            size_t dp = edit_stats(ref, hyp).edits;
            size_t oracle = testutil::edit_distance_oracle(words(ref), words(hyp));
            REQUIRE_OR(dp == oracle, "DP != oracle for '" + ref + "' vs '" + hyp + "'");
          }
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
      auto draw = [&rng](int len) {
        std::string s;
        for (int i = 0; i < len; ++i)
          s += (i ? " " : "") + std::string(rng.index(2) ? "b" : "a");
        return s;
      };
      std::string ref = draw(6), hyp = draw(6);
      REQUIRE_OR(edit_stats(ref, hyp).edits ==
                     testutil::edit_distance_oracle(words(ref), words(hyp)),
                 "DP != oracle at length 6");
    }
  }
  detail = "5 verdicts exact; boundaries keep; DP matches oracle through length 6";
  return true;
}

bool c10_streaming_latency(std::string& detail) {
  MelSpectrogram mel = compute_mel(testutil::tone(120, 700, 1.0));
  Codebook cb = fit_codebook({mel}, 8, 5);
  RespondConfig cfg;
  cfg.decode.max_len = 2;
  cfg.chunk_tokens = 1;
  cfg.speech_max_len = 3;
  cfg.cfm_steps = 1;
  RoleProfile profile = toy_profile();
  ModalityPayload input = ModalityPayload::text_only_payload("What do you see?");

  std::unique_ptr<OmniModel> speaking;
  for (uint64_t seed = 0; seed < 60 && !speaking; ++seed) {
    auto model = toy_model(seed);
    model->codebook = cb;
    int audio_chunks = 0;
    bool audio_before_final = false, order_ok = true;
    int phase = 0;
    respond(*model, profile, {}, input, cfg, [&](const RespondEvent& ev) {
      switch (ev.kind) {
        case RespondEvent::Kind::text_token:
          if (phase != 0) order_ok = false;
          break;
        case RespondEvent::Kind::audio_chunk:
          if (phase > 1) order_ok = false;
          phase = 1;
          ++audio_chunks;
          break;
        case RespondEvent::Kind::final_event:
          audio_before_final = audio_chunks > 0;
          phase = 2;
          break;
      }
    });
    if (!order_ok) {
      detail = "event order violated";
      return false;
    }
    if (audio_before_final) speaking = std::move(model);
  }
  REQUIRE_OR(speaking != nullptr, "no toy seed produced an audio chunk");

  auto session = [&](const EventSink& sink) {
    respond(*speaking, profile, {}, input, cfg, sink);
  };
  LatencyReport report = measure_latency(session, 5, cfg.chunk_tokens);
  REQUIRE_OR(report.trials >= 5 && report.samples_ms.size() >= 5,
             "median must cover at least 5 trials");
  detail = "first chunk precedes final event; median " + std::to_string(report.median_ms) +
           " ms over " + std::to_string(report.trials) + " trials";
  return report.median_ms < 50.0;
}

bool c11_speaker_discriminability(std::string& detail) {
  const std::vector<std::pair<double, double>> speakers = {
      {110, 700}, {150, 1100}, {210, 1600}, {260, 2100}};
  std::map<std::string, std::vector<SpeakerEmbedding>> by_speaker;
  std::vector<std::vector<SpeakerEmbedding>> clips;
  for (size_t i = 0; i < speakers.size(); ++i) {
    auto [f0, formant] = speakers[i];
    clips.push_back({speaker_embedding(testutil::tone(f0, formant, 0.8)),
                     speaker_embedding(testutil::tone(f0, formant, 1.1))});
    by_speaker["spk" + std::to_string(i)] = clips.back();
  }
  double min_intra = 1.0, max_inter = -1.0;
  for (size_t i = 0; i < clips.size(); ++i) {
    min_intra = std::min(min_intra, cosine_similarity(clips[i][0], clips[i][1]));
    for (size_t j = i + 1; j < clips.size(); ++j)
      for (const auto& a : clips[i])
        for (const auto& b : clips[j])
          max_inter = std::max(max_inter, cosine_similarity(a, b));
  }
  detail = "min intra " + std::to_string(min_intra) + ", max inter " +
           std::to_string(max_inter);
  REQUIRE_OR(min_intra > max_inter + 0.05, "margin under 0.05: " + detail);
  auto sets = similarity_matrix(by_speaker, 2, 3);
  for (const auto& m : sets) {
    REQUIRE_OR(m.values == m.values.transpose().eval(), "matrix not symmetric");
    for (Eigen::Index i = 0; i < m.values.rows(); ++i)
      REQUIRE_OR(m.values(i, i) == 1.0, "diagonal not unit");
  }
  return true;
}

bool c12_voice_match_threshold(std::string& detail) {
  AudioAsset same = testutil::tone(120, 800, 0.8);
  REQUIRE_OR(voice_match(same, same), "identical clips must match");
  SpeakerEmbedding u, v;
  u.vector = Vec::Zero(160);
  u.vector(0) = 1.0;
  v.vector = Vec::Zero(160);
  v.vector(0) = 0.9;
  v.vector(1) = std::sqrt(1.0 - 0.81);
  double c = cosine_similarity(u, v);
  REQUIRE_OR(std::abs(c - 0.9) < 1e-12, "constructed pair not at 0.9");
  REQUIRE_OR(!(c > 0.9), "cosine exactly 0.9 must not match");
  detail = "identical matches; cosine exactly 0.9 does not";
  return true;
}

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {"frame grouping matches the brute-force oracle", c1_grouping_oracle},
      {"loss identities (ln V, one-hot)", c2_loss_identities},
      {"causality for both language models", c3_causality},
      {"gradient checks vs finite differences", c4_gradient_checks},
      {"OT flow-matching exactness", c5_otcfm_exactness},
      {"two-stage freeze contract", c6_freeze_contract},
      {"context-conditioning efficacy", c7_conditioning_efficacy},
      {"two-stage convergence and determinism", c8_convergence},
      {"dataset filter oracle and boundaries", c9_filter_oracle},
      {"streaming order and first-chunk latency", c10_streaming_latency},
      {"speaker discriminability margin", c11_speaker_discriminability},
      {"voice-match threshold semantics", c12_voice_match_threshold},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    std::string detail;
    bool ok = false;
    try {
      ok = criteria[i].run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %zu. %s%s%s\n", ok ? "PASS" : "FAIL", i + 1, criteria[i].name.c_str(),
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}

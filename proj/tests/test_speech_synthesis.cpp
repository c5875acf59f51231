#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "omni/speech_synthesis.hpp"
#include "test_util.hpp"

using namespace omni;
namespace fs = std::filesystem;

namespace {

FlowMatcherConfig toy_cfm_config() {
  FlowMatcherConfig cfg;
  cfg.n_mels = 5;
  cfg.d_context = 7;
  cfg.hidden = 6;
  cfg.n_blocks = 2;
  cfg.frames_per_token = 2;
  return cfg;
}

CfmConditions toy_conditions(Eigen::Index frames, uint64_t seed) {
  CfmConditions cond;
  Rng rng(seed);
  cond.token_frames = rng.normal_matrix(frames, 5);
  cond.speaker = rng.normal_matrix(10, 1);
  cond.context_pooled = rng.normal_matrix(7, 1);
  return cond;
}

double flat_correlation(const Mat& a, const Mat& b) {
  Eigen::Map<const Vec> va(a.data(), a.size());
  Eigen::Map<const Vec> vb(b.data(), b.size());
  Vec ca = va.array() - va.mean();
  Vec cb = vb.array() - vb.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

}  // namespace

// ---- speaker embedding ----

TEST_CASE("speaker_embedding: unit norm and determinism") {
  AudioAsset audio = testutil::tone(130, 800, 0.8);
  SpeakerEmbedding e = speaker_embedding(audio);
  CHECK(e.vector.size() == 160);
  CHECK(e.vector.norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(speaker_embedding(audio).vector == e.vector);
}

TEST_CASE("speaker_embedding rejects audio under half a second") {
  AudioAsset audio = testutil::tone(130, 800, 0.4);
  CHECK_THROWS_AS(speaker_embedding(audio), OmniError);
}

TEST_CASE("speaker_embedding separates synthetic speakers by >= 0.05 margin") {
  AudioAsset a1 = testutil::tone(110, 700, 1.0, "a1");
  AudioAsset a2 = testutil::tone(110, 700, 1.3, "a2");
  AudioAsset b = testutil::tone(250, 1900, 1.0, "b");
  double intra = cosine_similarity(speaker_embedding(a1), speaker_embedding(a2));
  double inter = cosine_similarity(speaker_embedding(a1), speaker_embedding(b));
  CHECK(intra > inter + 0.05);
}

TEST_CASE("speaker_embedding is insensitive to DC offset") {
  AudioAsset audio = testutil::tone(130, 800, 0.8);
  AudioAsset shifted = audio;
  for (double& s : shifted.samples) s += 0.05;
  Vec a = speaker_embedding(audio).vector;
  Vec b = speaker_embedding(shifted).vector;
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-3);
}

// ---- codebook ----

TEST_CASE("fit_codebook: exactly V distinct frames become a permutation of themselves") {
  MelSpectrogram mel;
  mel.values = Mat(4, 80);
  for (int i = 0; i < 4; ++i) mel.values.row(i) = Vec::Constant(80, 10.0 * i).transpose();
  Codebook cb = fit_codebook({mel}, 4, 0);
  REQUIRE(cb.size() == 4);
  // every input frame has an exactly matching centroid
  for (int i = 0; i < 4; ++i) {
    bool found = false;
    for (int c = 0; c < 4; ++c)
      if ((cb.centroids.row(c) - mel.values.row(i)).norm() < 1e-12) found = true;
    CHECK(found);
  }
}

TEST_CASE("fit_codebook: same seed gives an identical codebook") {
  Rng rng(44);
  MelSpectrogram mel;
  mel.values = rng.normal_matrix(60, 80);
  Codebook a = fit_codebook({mel}, 8, 9);
  Codebook b = fit_codebook({mel}, 8, 9);
  CHECK(a.centroids == b.centroids);
}

TEST_CASE("fit_codebook rejects too few frames") {
  MelSpectrogram mel;
  mel.values = Mat::Zero(3, 80);
  CHECK_THROWS_AS(fit_codebook({mel}, 8, 0), OmniError);
}

TEST_CASE("fitted codebook beats a random codebook on held-out frames") {
  Rng rng(45);
  MelSpectrogram train;
  train.values = rng.normal_matrix(200, 80);
  // clustered structure: four shifted blobs
  for (int i = 0; i < 200; ++i) train.values.row(i).array() += 8.0 * (i % 4);
  MelSpectrogram held;
  held.values = rng.normal_matrix(50, 80);
  for (int i = 0; i < 50; ++i) held.values.row(i).array() += 8.0 * (i % 4);
  Codebook fitted = fit_codebook({train}, 8, 3);
  Codebook random;
  random.centroids = Rng(77).normal_matrix(8, 80);
  CHECK(quantization_distortion(held, fitted) <= quantization_distortion(held, random));
}

TEST_CASE("codebook round-trip distortion holds its pinned level") {
  MelSpectrogram mel = compute_mel(testutil::tone(120, 700, 1.0));
  Codebook cb = fit_codebook({mel}, 8, 5);
  // measured 0.0082104 on this frozen fixture; 5% slack
  CHECK(quantization_distortion(mel, cb) <= 0.0086209);
}

TEST_CASE("tokenize_mel: centroid rows map to their own ids; round trip is identity") {
  Rng rng(46);
  Codebook cb;
  cb.centroids = rng.normal_matrix(6, 80);
  MelSpectrogram mel;
  mel.values = cb.centroids;
  std::vector<int> ids = tokenize_mel(mel, cb);
  for (int i = 0; i < 6; ++i) CHECK(ids[static_cast<size_t>(i)] == i);
  // tokenize(detokenize(ids)) = ids for arbitrary id sequences
  std::vector<int> arbitrary = {5, 0, 3, 3, 1};
  MelSpectrogram frames;
  frames.values = detokenize_tokens(arbitrary, cb);
  CHECK(tokenize_mel(frames, cb) == arbitrary);
}

TEST_CASE("tokenize_mel: equidistant frame ties to the lowest centroid index") {
  Codebook cb;
  cb.centroids = Mat::Zero(10, 80);
  cb.centroids.row(3) = Vec::Constant(80, 1.0).transpose();
  cb.centroids.row(9) = Vec::Constant(80, 3.0).transpose();
  // push other rows far away
  for (int i = 0; i < 10; ++i)
    if (i != 3 && i != 9) cb.centroids.row(i) = Vec::Constant(80, 100.0 + i).transpose();
  MelSpectrogram mel;
  mel.values = Mat::Constant(1, 80, 2.0);  // exactly between rows 3 and 9
  CHECK(tokenize_mel(mel, cb) == std::vector<int>{3});
}

TEST_CASE("detokenize rejects out-of-vocabulary ids") {
  Codebook cb;
  cb.centroids = Mat::Zero(4, 80);
  CHECK_THROWS_AS(detokenize_tokens({4}, cb), OmniError);
  CHECK_THROWS_AS(detokenize_tokens({-1}, cb), OmniError);
}

TEST_CASE("codebook save/load round trip") {
  Codebook cb;
  cb.centroids = Rng(48).normal_matrix(5, 80);
  cb.trained_on_hash = 1234;
  const std::string path = (fs::temp_directory_path() / "omni_cb.bin").string();
  save_codebook(cb, path);
  Codebook back = load_codebook(path);
  CHECK(back.centroids == cb.centroids);
  CHECK(back.trained_on_hash == cb.trained_on_hash);
  fs::remove(path);
}

// ---- OT conditional flow matching ----

TEST_CASE("OT path endpoints are exact") {
  Rng rng(50);
  Mat x0 = rng.normal_matrix(4, 5);
  Mat x1 = rng.normal_matrix(4, 5);
  CHECK(ot_path_point(x0, x1, 0.0, 0.0) == x0);
  CHECK(ot_path_point(x0, x1, 1.0, 0.0) == x1);
  // with sigma > 0 the end point keeps a sigma-weighted x0 residue
  CHECK((ot_path_point(x0, x1, 1.0, 1e-4) - (x1 + 1e-4 * x0)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("oracle field x1 - x0 has zero regression loss at sigma_min = 0") {
  Rng rng(51);
  Mat x0 = rng.normal_matrix(3, 5);
  Mat x1 = rng.normal_matrix(3, 5);
  Mat target = ot_target_field(x0, x1, 0.0);
  CHECK((target - (x1 - x0)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("Euler integration of the constant oracle field recovers x1 for any step count") {
  Rng rng(52);
  Mat x0 = rng.normal_matrix(6, 5);
  Mat x1 = rng.normal_matrix(6, 5);
  auto oracle = [&](const Mat&, double) { return x1 - x0; };
  for (int steps : {1, 2, 10}) {
    Mat out = integrate_euler(oracle, x0, steps);
    CHECK((out - x1).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("integrate_euler reports the failing step on a non-finite field") {
  Mat x0 = Mat::Zero(2, 3);
  auto bad = [](const Mat& x, double t) {
    return t > 0.4 ? Mat::Constant(x.rows(), x.cols(), std::nan("")) : Mat::Zero(2, 3);
  };
  CHECK_THROWS_WITH_AS(integrate_euler(bad, x0, 10), doctest::Contains("step"), OmniError);
}

TEST_CASE("FlowMatcher: field shape and loss finiteness") {
  FlowMatcher fm(toy_cfm_config(), 61);
  CfmConditions cond = toy_conditions(4, 62);
  Mat x_t = Rng(63).normal_matrix(4, 5);
  Mat u = fm.field(x_t, 0.3, cond);
  CHECK(u.rows() == 4);
  CHECK(u.cols() == 5);
  Mat x1 = Rng(64).normal_matrix(4, 5);
  Mat x0 = Rng(65).normal_matrix(4, 5);
  double loss = fm.cfm_loss(x1, x0, 0.3, cond);
  CHECK(std::isfinite(loss));
  CHECK(loss >= 0);
}

TEST_CASE("FlowMatcher rejects mismatched conditioning shapes") {
  FlowMatcher fm(toy_cfm_config(), 61);
  CfmConditions cond = toy_conditions(4, 62);
  cond.speaker = Vec::Zero(9);  // must be 2 * n_mels
  CHECK_THROWS_AS(fm.field(Mat::Zero(4, 5), 0.5, cond), OmniError);
}

TEST_CASE("sample_mel is deterministic per seed and sized by token count") {
  FlowMatcher fm(toy_cfm_config(), 61);
  CfmConditions cond = toy_conditions(8, 66);  // 4 tokens * 2 frames
  MelSpectrogram a = fm.sample_mel(cond, 5, 9);
  MelSpectrogram b = fm.sample_mel(cond, 5, 9);
  CHECK(a.values == b.values);
  CHECK(a.values.rows() == 8);
  MelSpectrogram c = fm.sample_mel(cond, 5, 10);
  CHECK(a.values != c.values);
}

TEST_CASE("cfm loss gradient matches central finite differences") {
  FlowMatcher fm(toy_cfm_config(), 67);
  CfmConditions cond = toy_conditions(3, 68);
  Mat x1 = Rng(69).normal_matrix(3, 5);
  Mat x0 = Rng(70).normal_matrix(3, 5);
  auto loss = [&]() { return fm.cfm_loss(x1, x0, 0.37, cond); };
  fm.params().zero_grads();
  {
    ad::Tape tape;
    tape.backward(fm.loss_var(tape, x1, x0, 0.37, cond));
  }
  auto result = testutil::grad_check(fm.params(), loss, 1e-4, 6);
  INFO(result.worst);
  CHECK(result.max_rel_err < 1e-4);
}

TEST_CASE("upsample_token_frames repeats each row frames_per_token times") {
  Mat frames = Rng(71).normal_matrix(3, 5);
  Mat up = upsample_token_frames(frames, 2);
  REQUIRE(up.rows() == 6);
  for (int i = 0; i < 6; ++i) CHECK(up.row(i) == frames.row(i / 2));
}

// ---- vocoder ----

TEST_CASE("vocode: waveform length is F * hop") {
  MelSpectrogram mel;
  mel.values = Mat::Constant(10, 80, -2.0);
  AudioAsset audio = vocode(mel, 1);
  CHECK(audio.samples.size() == 10u * 256u);
  CHECK(audio.sample_rate == 16000);
}

TEST_CASE("vocode: silence mel produces near-silent audio") {
  MelSpectrogram mel;
  mel.values = Mat::Constant(12, 80, std::log(1e-5));
  AudioAsset audio = vocode(mel, 1);
  double rms = 0;
  for (double s : audio.samples) rms += s * s;
  rms = std::sqrt(rms / static_cast<double>(audio.samples.size()));
  CHECK(rms < 1e-3);
}

TEST_CASE("vocode: harmonic fixture survives a mel round trip") {
  AudioAsset input = testutil::tone(180, 900, 0.6);
  MelSpectrogram mel = compute_mel(input);
  AudioAsset out = vocode(mel, 2);
  MelSpectrogram back = compute_mel(out);
  Eigen::Index f = std::min(mel.values.rows(), back.values.rows());
  CHECK(flat_correlation(mel.values.topRows(f), back.values.topRows(f)) > 0.8);
}

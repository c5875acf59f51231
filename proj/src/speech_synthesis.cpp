#include "omni/speech_synthesis.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace omni {

using ad::Var;

dsp::MelConfig synthesis_mel_config() {
  dsp::MelConfig cfg;
  cfg.stft.n_fft = 512;
  cfg.stft.win_length = 512;
  cfg.stft.hop = 256;
  cfg.n_mels = 80;
  cfg.log_floor = 1e-5;
  return cfg;
}

MelSpectrogram compute_mel(const AudioAsset& audio) {
  audio.validate();
  MelSpectrogram mel;
  mel.values = dsp::log_mel(audio.samples, synthesis_mel_config());
  mel.frame_hop = 256;
  return mel;
}

SpeakerEmbedding speaker_embedding(const AudioAsset& audio) {
  audio.validate();
  OMNI_CHECK(audio.duration_seconds() >= 0.5, "speaker_embedding: audio shorter than 0.5 s");
  Mat mel = dsp::log_mel(audio.samples, synthesis_mel_config());
  const Eigen::Index n_mels = mel.cols();
  Vec v(2 * n_mels);
  for (Eigen::Index b = 0; b < n_mels; ++b) {
    double mean = mel.col(b).mean();
    double var = (mel.col(b).array() - mean).square().mean();
    v(b) = mean;
    v(n_mels + b) = std::sqrt(var);
  }
  double norm = v.norm();
  OMNI_CHECK(norm > 0, "speaker_embedding: zero norm");
  return {v / norm};
}

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  return a.vector.dot(b.vector) / (a.vector.norm() * b.vector.norm());
}

// ---- codebook ----

namespace {

int nearest_centroid(const Eigen::RowVectorXd& frame, const Mat& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    double d = (frame - centroids.row(c)).squaredNorm();
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

Codebook fit_codebook(const std::vector<MelSpectrogram>& mels, int v_speech,
                      uint64_t seed) {
  OMNI_CHECK(v_speech >= 2, "fit_codebook: v_speech must be at least 2");
  Eigen::Index total = 0;
  for (const auto& m : mels) {
    m.validate();
    total += m.values.rows();
  }
  OMNI_CHECK(total >= v_speech, "fit_codebook: fewer frames than codebook entries");
  const Eigen::Index dim = mels[0].values.cols();
  Mat frames(total, dim);
  Eigen::Index r = 0;
  uint64_t data_hash = 1469598103934665603ULL;
  for (const auto& m : mels) {
    frames.middleRows(r, m.values.rows()) = m.values;
    data_hash = hash_matrix(m.values, data_hash);
    r += m.values.rows();
  }

  Rng rng(seed);
  Mat centroids(v_speech, dim);
  std::set<Eigen::Index> chosen;
  for (int c = 0; c < v_speech;) {
    Eigen::Index pick = rng.index(total);
    if (chosen.count(pick)) continue;
    // skip frames identical to an already chosen one
    bool dup = false;
    for (int j = 0; j < c; ++j)
      if ((frames.row(pick) - centroids.row(j)).squaredNorm() == 0.0) dup = true;
    chosen.insert(pick);
    if (dup && chosen.size() < static_cast<size_t>(total)) continue;
    centroids.row(c++) = frames.row(pick);
  }

  std::vector<int> assign(total, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < total; ++i) {
      int c = nearest_centroid(frames.row(i), centroids);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Mat sums = Mat::Zero(v_speech, dim);
    std::vector<Eigen::Index> counts(v_speech, 0);
    for (Eigen::Index i = 0; i < total; ++i) {
      sums.row(assign[i]) += frames.row(i);
      counts[assign[i]]++;
    }
    for (int c = 0; c < v_speech; ++c) {
      if (counts[c] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[c]);
      } else {
        // re-seed an empty cluster at the worst-quantized frame
        double worst = -1;
        Eigen::Index worst_i = 0;
        for (Eigen::Index i = 0; i < total; ++i) {
          double d = (frames.row(i) - centroids.row(assign[i])).squaredNorm();
          if (d > worst) {
            worst = d;
            worst_i = i;
          }
        }
        centroids.row(c) = frames.row(worst_i);
        changed = true;
      }
    }
    if (!changed) break;
  }
  Codebook cb{std::move(centroids), data_hash};
  return cb;
}

std::vector<int> tokenize_mel(const MelSpectrogram& mel, const Codebook& codebook) {
  mel.validate();
  OMNI_CHECK(codebook.size() >= 2, "tokenize_mel: codebook not fitted");
  std::vector<int> tokens(static_cast<size_t>(mel.values.rows()));
  for (Eigen::Index i = 0; i < mel.values.rows(); ++i)
    tokens[static_cast<size_t>(i)] = nearest_centroid(mel.values.row(i), codebook.centroids);
  return tokens;
}

Mat detokenize_tokens(const std::vector<int>& tokens, const Codebook& codebook) {
  OMNI_CHECK(!tokens.empty(), "detokenize: empty token sequence");
  Mat out(static_cast<Eigen::Index>(tokens.size()), codebook.centroids.cols());
  for (size_t i = 0; i < tokens.size(); ++i) {
    OMNI_CHECK(tokens[i] >= 0 && tokens[i] < codebook.size(),
               "detokenize: token id " + std::to_string(tokens[i]) + " >= " +
                   std::to_string(codebook.size()));
    out.row(static_cast<Eigen::Index>(i)) = codebook.centroids.row(tokens[i]);
  }
  return out;
}

double quantization_distortion(const MelSpectrogram& mel, const Codebook& codebook) {
  auto tokens = tokenize_mel(mel, codebook);
  Mat rec = detokenize_tokens(tokens, codebook);
  return (mel.values - rec).squaredNorm() / static_cast<double>(mel.values.size());
}

void save_codebook(const Codebook& codebook, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  OMNI_CHECK(out.good(), "cannot write codebook: " + path);
  const char magic[8] = {'O', 'M', 'N', 'I', 'C', 'B', '0', '1'};
  out.write(magic, 8);
  int64_t v = codebook.centroids.rows(), dim = codebook.centroids.cols();
  uint64_t content = hash_matrix(codebook.centroids);
  out.write(reinterpret_cast<const char*>(&v), 8);
  out.write(reinterpret_cast<const char*>(&dim), 8);
  out.write(reinterpret_cast<const char*>(&codebook.trained_on_hash), 8);
  out.write(reinterpret_cast<const char*>(&content), 8);
  out.write(reinterpret_cast<const char*>(codebook.centroids.data()),
            static_cast<std::streamsize>(sizeof(double) * v * dim));
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  OMNI_CHECK(in.good(), "cannot open codebook: " + path);
  char magic[8];
  in.read(magic, 8);
  OMNI_CHECK(std::string(magic, 8) == "OMNICB01", path + ": bad codebook magic");
  int64_t v = 0, dim = 0;
  uint64_t trained = 0, content = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  in.read(reinterpret_cast<char*>(&dim), 8);
  in.read(reinterpret_cast<char*>(&trained), 8);
  in.read(reinterpret_cast<char*>(&content), 8);
  Codebook cb;
  cb.centroids.resize(v, dim);
  cb.trained_on_hash = trained;
  in.read(reinterpret_cast<char*>(cb.centroids.data()),
          static_cast<std::streamsize>(sizeof(double) * v * dim));
  OMNI_CHECK(in.good(), path + ": truncated codebook");
  OMNI_CHECK(hash_matrix(cb.centroids) == content, path + ": codebook hash mismatch");
  return cb;
}

// ---- OT-CFM ----

Mat integrate_euler(const FieldFn& field, const Mat& x0, int steps) {
  OMNI_CHECK(steps >= 1, "integrate_euler: steps must be positive");
  Mat x = x0;
  const double dt = 1.0 / static_cast<double>(steps);
  for (int k = 0; k < steps; ++k) {
    double t = static_cast<double>(k) * dt;
    Mat u = field(x, t);
    OMNI_CHECK(all_finite(u),
               "non-finite field output at integration step " + std::to_string(k));
    x += dt * u;
  }
  return x;
}

Mat ot_path_point(const Mat& x0, const Mat& x1, double t, double sigma_min) {
  OMNI_CHECK(x0.rows() == x1.rows() && x0.cols() == x1.cols(), "ot path: shape mismatch");
  OMNI_CHECK(t >= 0.0 && t <= 1.0, "ot path: t outside [0,1]");
  return (1.0 - (1.0 - sigma_min) * t) * x0 + t * x1;
}

Mat ot_target_field(const Mat& x0, const Mat& x1, double sigma_min) {
  OMNI_CHECK(x0.rows() == x1.rows() && x0.cols() == x1.cols(), "ot target: shape mismatch");
  return x1 - (1.0 - sigma_min) * x0;
}

FlowMatcher::FlowMatcher(FlowMatcherConfig cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  const int cin0 = 2 * cfg_.n_mels;  // x_t concat token frames
  const int d_cond = 2 * cfg_.n_mels + cfg_.d_context + 1;  // v + pooled H + t
  int cin = cin0;
  for (int b = 0; b < cfg_.n_blocks; ++b) {
    const std::string p = "cfm.block" + std::to_string(b) + ".";
    params_.create(p + "conv.w", 3 * cin, cfg_.hidden, rng,
                   1.0 / std::sqrt(3.0 * cin));
    params_.create_zero(p + "conv.b", 1, cfg_.hidden);
    params_.create(p + "film.w", d_cond, 2 * cfg_.hidden, rng,
                   0.1 / std::sqrt(static_cast<double>(d_cond)));
    params_.create_zero(p + "film.b", 1, 2 * cfg_.hidden);
    cin = cfg_.hidden;
  }
  params_.create("cfm.out.w", 3 * cfg_.hidden, cfg_.n_mels, rng,
                 1.0 / std::sqrt(3.0 * cfg_.hidden));
  params_.create_zero("cfm.out.b", 1, cfg_.n_mels);
}

Var FlowMatcher::field_var(ad::Tape& tape, Var x_t, double t,
                           const CfmConditions& cond) const {
  OMNI_CHECK(x_t.cols() == cfg_.n_mels, "cfm: x_t width != n_mels");
  OMNI_CHECK(cond.token_frames.rows() == x_t.rows() &&
                 cond.token_frames.cols() == cfg_.n_mels,
             "cfm: token frame conditioning shape mismatch");
  OMNI_CHECK(cond.speaker.size() == 2 * cfg_.n_mels, "cfm: speaker embedding size");
  OMNI_CHECK(cond.context_pooled.size() == cfg_.d_context,
             "cfm: pooled context size mismatch");
  Mat cvec(1, 2 * cfg_.n_mels + cfg_.d_context + 1);
  cvec << cond.speaker.transpose(), cond.context_pooled.transpose(), t;
  Var c = tape.var(cvec);
  Var tok = tape.var(cond.token_frames);
  Var x = ad::concat_cols({x_t, tok});
  for (int b = 0; b < cfg_.n_blocks; ++b) {
    const std::string p = "cfm.block" + std::to_string(b) + ".";
    Var h = ad::gelu(ad::conv1d_same(x, tape.param(params_, p + "conv.w"),
                                     tape.param(params_, p + "conv.b"), 3));
    Var film = ad::linear(c, tape.param(params_, p + "film.w"),
                          tape.param(params_, p + "film.b"));
    Var gamma = ad::slice_cols(film, 0, cfg_.hidden);
    Var beta = ad::slice_cols(film, cfg_.hidden, cfg_.hidden);
    Var ones = tape.var(Mat::Ones(1, cfg_.hidden));
    x = ad::add_rowvec(ad::mul_rowvec(h, ad::add(ones, gamma)), beta);
  }
  return ad::conv1d_same(x, tape.param(params_, "cfm.out.w"),
                         tape.param(params_, "cfm.out.b"), 3);
}

Mat FlowMatcher::field(const Mat& x_t, double t, const CfmConditions& cond) const {
  ad::Tape tape;
  return field_var(tape, tape.var(x_t), t, cond).val();
}

Var FlowMatcher::loss_var(ad::Tape& tape, const Mat& x1, const Mat& x0, double t,
                          const CfmConditions& cond) const {
  Mat xt = ot_path_point(x0, x1, t, cfg_.sigma_min);
  Mat target = ot_target_field(x0, x1, cfg_.sigma_min);
  Var pred = field_var(tape, tape.var(xt), t, cond);
  return ad::mse_mean(pred, tape.var(target));
}

double FlowMatcher::cfm_loss(const Mat& x1, const Mat& x0, double t,
                             const CfmConditions& cond) const {
  ad::Tape tape;
  return loss_var(tape, x1, x0, t, cond).val()(0, 0);
}

MelSpectrogram FlowMatcher::sample_mel(const CfmConditions& cond, int steps,
                                       uint64_t seed) const {
  OMNI_CHECK(steps >= 1, "sample_mel: steps must be positive");
  const Eigen::Index F = cond.token_frames.rows();
  Rng rng(seed);
  Mat x0 = rng.normal_matrix(F, cfg_.n_mels);
  Mat x = integrate_euler(
      [&](const Mat& xt, double t) { return field(xt, t, cond); }, x0, steps);
  MelSpectrogram mel;
  mel.values = std::move(x);
  return mel;
}

Mat upsample_token_frames(const Mat& token_frames, int frames_per_token) {
  OMNI_CHECK(frames_per_token >= 1, "upsample: ratio must be positive");
  Mat out(token_frames.rows() * frames_per_token, token_frames.cols());
  for (Eigen::Index i = 0; i < token_frames.rows(); ++i)
    for (int j = 0; j < frames_per_token; ++j)
      out.row(i * frames_per_token + j) = token_frames.row(i);
  return out;
}

// ---- Griffin-Lim vocoder ----

AudioAsset vocode(const MelSpectrogram& mel, uint64_t seed, int iterations) {
  mel.validate();
  const auto cfg = synthesis_mel_config();
  OMNI_CHECK(mel.values.cols() == cfg.n_mels, "vocode: mel bin count mismatch");
  Mat fb = dsp::mel_filterbank(cfg);  // n_mels x bins
  // approximate linear-magnitude inversion via regularized pseudo-inverse
  Mat gram = fb * fb.transpose();
  gram.diagonal().array() += 1e-8;
  Mat pinv = fb.transpose() * gram.inverse();  // bins x n_mels
  Mat amp = mel.values.array().exp().matrix();           // F x n_mels
  Mat mag = (amp * pinv.transpose()).cwiseMax(0.0);      // F x bins, clamped

  const Eigen::Index F = mag.rows();
  const int bins = cfg.stft.n_fft / 2 + 1;
  Rng rng(seed);
  std::vector<std::vector<dsp::Cplx>> spec(static_cast<size_t>(F),
                                           std::vector<dsp::Cplx>(bins));
  for (Eigen::Index f = 0; f < F; ++f)
    for (int b = 0; b < bins; ++b) {
      double phase = rng.uniform() * 2.0 * M_PI;
      spec[static_cast<size_t>(f)][b] = std::polar(mag(f, b), phase);
    }
  std::vector<double> wave;
  for (int it = 0; it < iterations; ++it) {
    wave = dsp::istft(spec, cfg.stft);
    auto re = dsp::stft(wave, cfg.stft);
    for (size_t f = 0; f < re.size() && f < spec.size(); ++f)
      for (int b = 0; b < bins; ++b) {
        double ph = std::arg(re[f][b]);
        spec[f][b] = std::polar(mag(static_cast<Eigen::Index>(f), b), ph);
      }
  }
  wave = dsp::istft(spec, cfg.stft);
  const size_t want = static_cast<size_t>(F) * static_cast<size_t>(mel.frame_hop);
  wave.resize(want, 0.0);
  double peak = 0;
  for (double s : wave) peak = std::max(peak, std::abs(s));
  if (peak > 1.0)
    for (double& s : wave) s /= peak;
  AudioAsset audio;
  audio.asset_id = "vocoded";
  audio.sample_rate = 16000;
  audio.samples = std::move(wave);
  return audio;
}

}  // namespace omni

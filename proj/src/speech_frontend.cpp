#include "omni/speech_frontend.hpp"

#include <cmath>

namespace omni {

namespace {

Mat softmax_rows(Mat scores) {
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::ArrayXd row = scores.row(i).array();
    row -= row.maxCoeff();
    Eigen::ArrayXd e = row.exp();
    scores.row(i) = (e / e.sum()).matrix();
  }
  return scores;
}

}  // namespace

SpeechEncoder::SpeechEncoder(EncoderConfig cfg) : cfg_(cfg) {
  Rng rng(cfg_.seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg_.n_mels));
  conv_w_ = rng.normal_matrix(3 * cfg_.n_mels, cfg_.d_enc, s);
  conv_b_ = Mat::Zero(1, cfg_.d_enc);
  const double se = 1.0 / std::sqrt(static_cast<double>(cfg_.d_enc));
  for (int b = 0; b < 2; ++b) {
    Block blk;
    blk.wq = rng.normal_matrix(cfg_.d_enc, cfg_.d_enc, se);
    blk.wk = rng.normal_matrix(cfg_.d_enc, cfg_.d_enc, se);
    blk.wv = rng.normal_matrix(cfg_.d_enc, cfg_.d_enc, se);
    blk.wo = rng.normal_matrix(cfg_.d_enc, cfg_.d_enc, se);
    blk.w1 = rng.normal_matrix(cfg_.d_enc, 2 * cfg_.d_enc, se);
    blk.b1 = Mat::Zero(1, 2 * cfg_.d_enc);
    blk.w2 = rng.normal_matrix(2 * cfg_.d_enc, cfg_.d_enc, se * 0.5);
    blk.b2 = Mat::Zero(1, cfg_.d_enc);
    blocks_.push_back(std::move(blk));
  }
}

EncodedFrames SpeechEncoder::encode(const AudioAsset& audio) const {
  audio.validate();
  dsp::MelConfig mel_cfg;
  mel_cfg.stft.win_length = cfg_.win_length;
  mel_cfg.stft.hop = cfg_.hop;
  mel_cfg.n_mels = cfg_.n_mels;
  Mat mel = dsp::log_mel(audio.samples, mel_cfg);  // T x n_mels
  const Eigen::Index T = mel.rows();

  // Stride-2 conv, kernel 3, padding 1: output length ceil(T/2).
  const Eigen::Index out_len = (T + 1) / 2;
  Mat conv = conv_b_.replicate(out_len, 1);
  for (Eigen::Index o = 0; o < out_len; ++o) {
    for (int d = 0; d < 3; ++d) {
      Eigen::Index src = 2 * o + d - 1;
      if (src < 0 || src >= T) continue;
      conv.row(o) += mel.row(src) * conv_w_.middleRows(d * cfg_.n_mels, cfg_.n_mels);
    }
  }
  Mat x = conv.array().tanh().matrix();

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.d_enc));
  for (const auto& blk : blocks_) {
    Mat q = x * blk.wq, k = x * blk.wk, v = x * blk.wv;
    Mat probs = softmax_rows(q * k.transpose() * inv_sqrt_d);
    x = x + probs * v * blk.wo;
    Mat h = ((x * blk.w1).rowwise() + blk.b1.row(0)).array().tanh().matrix();
    x = x + ((h * blk.w2).rowwise() + blk.b2.row(0));
  }
  OMNI_CHECK(all_finite(x), "encoder produced non-finite frames");
  return {std::move(x), cfg_.frame_rate()};
}

GroupedFrames group_frames(const EncodedFrames& frames, int k) {
  OMNI_CHECK(k >= 1, "group_frames: k must be positive");
  const Eigen::Index nf = frames.frames.rows();
  OMNI_CHECK(nf >= k, "group_frames: fewer frames than group size");
  const Eigen::Index d = frames.frames.cols();
  const Eigen::Index groups = nf / k;
  Mat out(groups, k * d);
  for (Eigen::Index g = 0; g < groups; ++g)
    for (int j = 0; j < k; ++j)
      out.block(g, static_cast<Eigen::Index>(j) * d, 1, d) =
          frames.frames.row(g * k + j);
  return {std::move(out), k};
}

SpeechAdapter::SpeechAdapter(int d_in, int d_hidden, int d_model, uint64_t seed)
    : d_in_(d_in), d_hidden_(d_hidden), d_model_(d_model) {
  Rng rng(seed);
  params_.create("adapter.w1", d_in, d_hidden, rng, 1.0 / std::sqrt(static_cast<double>(d_in)));
  params_.create_zero("adapter.b1", 1, d_hidden);
  params_.create("adapter.w2", d_hidden, d_model, rng,
                 1.0 / std::sqrt(static_cast<double>(d_hidden)));
  params_.create_zero("adapter.b2", 1, d_model);
}

ad::Var SpeechAdapter::forward(ad::Tape& tape, ad::Var grouped) const {
  OMNI_CHECK(grouped.cols() == d_in_,
             "adapter: input dim " + std::to_string(grouped.cols()) + ", expected " +
                 std::to_string(d_in_));
  ad::Var h = ad::gelu(ad::linear(grouped, tape.param(params_, "adapter.w1"),
                                  tape.param(params_, "adapter.b1")));
  return ad::linear(h, tape.param(params_, "adapter.w2"),
                    tape.param(params_, "adapter.b2"));
}

SpeechEmbeddingSequence SpeechAdapter::adapt(const GroupedFrames& grouped) const {
  ad::Tape tape;
  ad::Var out = forward(tape, tape.var(grouped.frames));
  return {out.val()};
}

}  // namespace omni

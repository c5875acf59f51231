#include "omni/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace omni::dsp {

void fft(std::vector<Cplx>& a, bool inverse) {
  const size_t n = a.size();
  OMNI_CHECK(n >= 1 && (n & (n - 1)) == 0, "fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    Cplx wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      Cplx w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        Cplx u = a[i + k];
        Cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

namespace {

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / static_cast<double>(n));
  return w;
}

}  // namespace

std::vector<std::vector<Cplx>> stft(const std::vector<double>& samples,
                                    const StftConfig& cfg) {
  OMNI_CHECK(cfg.win_length <= cfg.n_fft, "stft: win_length > n_fft");
  OMNI_CHECK(cfg.hop > 0, "stft: hop must be positive");
  const int n_frames = static_cast<int>(samples.size()) / cfg.hop;
  OMNI_CHECK(n_frames >= 1, "stft: input shorter than one hop");
  const auto window = hann_window(cfg.win_length);
  const int bins = cfg.n_fft / 2 + 1;
  std::vector<std::vector<Cplx>> out(n_frames);
  std::vector<Cplx> buf(cfg.n_fft);
  for (int f = 0; f < n_frames; ++f) {
    std::fill(buf.begin(), buf.end(), Cplx(0, 0));
    const size_t start = static_cast<size_t>(f) * cfg.hop;
    for (int i = 0; i < cfg.win_length; ++i) {
      size_t idx = start + i;
      double s = idx < samples.size() ? samples[idx] : 0.0;
      buf[i] = s * window[i];
    }
    fft(buf, false);
    out[f].assign(buf.begin(), buf.begin() + bins);
  }
  return out;
}

Mat stft_magnitude(const std::vector<double>& samples, const StftConfig& cfg) {
  auto frames = stft(samples, cfg);
  const int bins = cfg.n_fft / 2 + 1;
  Mat mag(static_cast<Eigen::Index>(frames.size()), bins);
  for (size_t f = 0; f < frames.size(); ++f)
    for (int b = 0; b < bins; ++b) mag(static_cast<Eigen::Index>(f), b) = std::abs(frames[f][b]);
  return mag;
}

std::vector<double> istft(const std::vector<std::vector<Cplx>>& frames,
                          const StftConfig& cfg) {
  OMNI_CHECK(!frames.empty(), "istft: no frames");
  const int bins = cfg.n_fft / 2 + 1;
  const auto window = hann_window(cfg.win_length);
  const size_t out_len = frames.size() * cfg.hop;
  std::vector<double> acc(out_len + cfg.n_fft, 0.0);
  std::vector<double> norm(out_len + cfg.n_fft, 0.0);
  std::vector<Cplx> buf(cfg.n_fft);
  for (size_t f = 0; f < frames.size(); ++f) {
    OMNI_CHECK(static_cast<int>(frames[f].size()) == bins, "istft: bad frame width");
    for (int b = 0; b < bins; ++b) buf[b] = frames[f][b];
    for (int b = bins; b < cfg.n_fft; ++b) buf[b] = std::conj(frames[f][cfg.n_fft - b]);
    fft(buf, true);
    const size_t start = f * cfg.hop;
    for (int i = 0; i < cfg.win_length; ++i) {
      acc[start + i] += buf[i].real() * window[i];
      norm[start + i] += window[i] * window[i];
    }
  }
  std::vector<double> out(out_len);
  for (size_t i = 0; i < out_len; ++i)
    out[i] = norm[i] > 1e-10 ? acc[i] / norm[i] : 0.0;
  return out;
}

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

Mat mel_filterbank(const MelConfig& cfg) {
  const int bins = cfg.stft.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> centers(cfg.n_mels + 2);
  for (int m = 0; m < cfg.n_mels + 2; ++m)
    centers[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1));
  Mat fb = Mat::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int b = 0; b < bins; ++b) {
      double hz = static_cast<double>(b) * cfg.stft.sample_rate / cfg.stft.n_fft;
      if (hz <= lo || hz >= hi) continue;
      fb(m, b) = hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
    }
  }
  return fb;
}

Mat log_mel(const std::vector<double>& samples, const MelConfig& cfg) {
  OMNI_CHECK(!samples.empty(), "log_mel: empty input");
  std::vector<double> x = samples;
  if (cfg.remove_dc) {
    double mean = 0;
    for (double s : x) mean += s;
    mean /= static_cast<double>(x.size());
    for (double& s : x) s -= mean;
  }
  Mat mag = stft_magnitude(x, cfg.stft);
  Mat fb = mel_filterbank(cfg);
  Mat mel = mag * fb.transpose();  // frames x n_mels
  return mel.array().max(cfg.log_floor).log().matrix();
}

}  // namespace omni::dsp

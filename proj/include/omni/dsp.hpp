#ifndef OMNI_DSP_HPP
#define OMNI_DSP_HPP

#include <complex>
#include <vector>

#include "omni/common.hpp"

namespace omni::dsp {

using Cplx = std::complex<double>;

// In-place iterative radix-2 FFT. Size must be a power of two.
void fft(std::vector<Cplx>& a, bool inverse);

struct StftConfig {
  int n_fft = 512;       // power of two
  int win_length = 400;  // <= n_fft, zero-padded to n_fft
  int hop = 160;
  int sample_rate = 16000;
};

// Frame f covers samples [f*hop, f*hop + win_length), zero-padded past the
// end; frame count is floor(len / hop). Hann window.
// Output: frames x (n_fft/2 + 1).
std::vector<std::vector<Cplx>> stft(const std::vector<double>& samples,
                                    const StftConfig& cfg);

Mat stft_magnitude(const std::vector<double>& samples, const StftConfig& cfg);

// Overlap-add inverse with window-square normalization. Returns
// frames*hop samples.
std::vector<double> istft(const std::vector<std::vector<Cplx>>& frames,
                          const StftConfig& cfg);

struct MelConfig {
  StftConfig stft;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;
  bool remove_dc = true;  // subtract the sample mean before analysis
};

// Triangular HTK-mel filterbank, n_mels x (n_fft/2 + 1).
Mat mel_filterbank(const MelConfig& cfg);

// log(max(mel_amplitude, log_floor)), frames x n_mels.
Mat log_mel(const std::vector<double>& samples, const MelConfig& cfg);

}  // namespace omni::dsp

#endif  // OMNI_DSP_HPP

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "stft.hpp"
#include "waveform.hpp"

namespace voiceguard {

struct MelParams {
  std::size_t n_mels = 80;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 means sample_rate / 2
  int sample_rate = kCanonicalRate;
  double log_floor = 1e-10;

  double upper() const noexcept { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
  bool operator==(const MelParams&) const = default;
};

/// Log-compressed mel energies, frames x n_mels.
struct MelSpectrogram {
  Matrix bins;
  MelParams params;
};

struct MfccSequence {
  Matrix coeffs;  // frames x K, c0 excluded
};

// Slaney mel scale: linear below 1 kHz, logarithmic above.
inline double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

inline double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

/// Triangular filters with unit peaks on mel-spaced centres. The first and
/// last filters hold their peak out to fmin / fmax, so the rows form a
/// partition of unity over every FFT bin.
inline Matrix mel_filterbank(const FftParams& fft, const MelParams& mel) {
  require(mel.n_mels >= 2, ErrorKind::InvalidArgument, "need at least two mel bands");
  require(mel.fmin >= 0.0 && mel.fmin < mel.upper() && mel.upper() <= mel.sample_rate / 2.0,
          ErrorKind::InvalidArgument, "mel band edges must satisfy 0 <= fmin < fmax <= sr/2");
  const std::size_t bins = fft.bins();
  const double lo = hz_to_mel(mel.fmin), hi = hz_to_mel(mel.upper());
  std::vector<double> edges(mel.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (mel.n_mels + 1));

  Matrix fb(mel.n_mels, bins);
  for (std::size_t m = 0; m < mel.n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * mel.sample_rate / static_cast<double>(fft.n_fft);
      double w = std::max(0.0, std::min((f - left) / (centre - left), (right - f) / (right - centre)));
      if (m == 0 && f <= centre && f >= mel.fmin) w = 1.0;
      if (m + 1 == mel.n_mels && f >= centre && f <= mel.upper()) w = 1.0;
      fb(m, k) = w;
    }
  }
  return fb;
}

/// Everything the mel gradient needs from the forward pass.
struct MelTrace {
  ComplexSpectrogram spectrum;
  Matrix mel_power;  // filterbank . |X|^2 before flooring
};

/// Mel front end with its filterbank built once.
class MelFrontEnd {
 public:
  MelFrontEnd() : MelFrontEnd(FftParams{}, MelParams{}) {}
  MelFrontEnd(const FftParams& fft, const MelParams& mel)
      : fft_(fft), mel_(mel), fb_(mel_filterbank(fft, mel)) {
    validate(fft_);
    for (std::size_t m = 0; m < fb_.rows; ++m) {
      const auto r = fb_.row(m);
      std::size_t lo = 0, hi = r.size();
      while (lo < hi && r[lo] == 0.0) ++lo;
      while (hi > lo && r[hi - 1] == 0.0) --hi;
      support_.emplace_back(lo, hi);
    }
  }

  const FftParams& fft() const noexcept { return fft_; }
  const MelParams& mel() const noexcept { return mel_; }
  const Matrix& filterbank() const noexcept { return fb_; }

  /// Filterbank applied to a power spectrogram, then floored and logged.
  MelSpectrogram from_power(const Matrix& power, Matrix* mel_power_out = nullptr) const {
    require(power.cols == fb_.cols, ErrorKind::ShapeMismatch, "power spectrum width mismatch");
    MelSpectrogram out{Matrix(power.rows, mel_.n_mels), mel_};
    Matrix mp(power.rows, mel_.n_mels);
    for (std::size_t t = 0; t < power.rows; ++t) {
      const auto prow = power.row(t);
      for (std::size_t m = 0; m < mel_.n_mels; ++m) {
        const auto frow = fb_.row(m);
        double acc = 0.0;
        for (std::size_t k = support_[m].first; k < support_[m].second; ++k) acc += frow[k] * prow[k];
        mp(t, m) = acc;
        out.bins(t, m) = std::log(std::max(acc, mel_.log_floor));
      }
    }
    if (mel_power_out) *mel_power_out = std::move(mp);
    return out;
  }

  MelSpectrogram compute(std::span<const double> x, MelTrace* trace = nullptr) const {
    ComplexSpectrogram s = stft(x, fft_);
    Matrix power(s.frames, s.bins);
    for (std::size_t i = 0; i < s.data.size(); ++i) power.data[i] = std::norm(s.data[i]);
    Matrix mp;
    MelSpectrogram out = from_power(power, &mp);
    if (trace) *trace = MelTrace{std::move(s), std::move(mp)};
    return out;
  }

  MelSpectrogram compute(const Waveform& w, MelTrace* trace = nullptr) const {
    return compute(w.view(), trace);
  }

  /// Adds the gradient on the complex bins of `spectrum` to `g`, given
  /// dL/d(log-mel) and the unfloored mel power of the forward pass.
  void accumulate_spectrum_vjp(const ComplexSpectrogram& spectrum, const Matrix& mel_power,
                               const Matrix& g_mel, ComplexSpectrogram& g) const {
    require(g_mel.rows == mel_power.rows && g_mel.cols == mel_.n_mels && g.frames == spectrum.frames &&
                g.bins == spectrum.bins,
            ErrorKind::ShapeMismatch, "mel gradient shape does not match forward output");
    std::vector<double> g_pow(fb_.cols);
    for (std::size_t t = 0; t < g_mel.rows; ++t) {
      std::fill(g_pow.begin(), g_pow.end(), 0.0);
      for (std::size_t m = 0; m < mel_.n_mels; ++m) {
        const double mp = mel_power(t, m);
        if (mp <= mel_.log_floor) continue;  // floored: no gradient
        const double gm = g_mel(t, m) / mp;
        if (gm == 0.0) continue;
        const auto frow = fb_.row(m);
        for (std::size_t k = support_[m].first; k < support_[m].second; ++k) g_pow[k] += gm * frow[k];
      }
      for (std::size_t k = 0; k < fb_.cols; ++k) g.at(t, k) += 2.0 * g_pow[k] * spectrum.at(t, k);
    }
  }

  /// Gradient with respect to the complex bins, for callers that continue
  /// the chain themselves.
  ComplexSpectrogram spectrum_vjp(const MelTrace& trace, const Matrix& g_mel) const {
    ComplexSpectrogram g = trace.spectrum;
    std::fill(g.data.begin(), g.data.end(), cplx{});
    accumulate_spectrum_vjp(trace.spectrum, trace.mel_power, g_mel, g);
    return g;
  }

  /// dL/dx from dL/d(log-mel).
  std::vector<double> vjp(const MelTrace& trace, const Matrix& g_mel) const {
    return stft_adjoint(spectrum_vjp(trace, g_mel));
  }

 private:
  FftParams fft_;
  MelParams mel_;
  Matrix fb_;
  std::vector<std::pair<std::size_t, std::size_t>> support_;  // nonzero bin range per filter
};

inline MelSpectrogram mel_spectrogram(std::span<const double> x, const FftParams& fft = {},
                                      const MelParams& mel = {}) {
  return MelFrontEnd(fft, mel).compute(x);
}

inline MelSpectrogram mel_spectrogram(const Waveform& w, const FftParams& fft = {},
                                      MelParams mel = {}) {
  mel.sample_rate = w.sample_rate;
  return MelFrontEnd(fft, mel).compute(w.view());
}

/// Orthonormal DCT-II basis rows k = first..first+count-1 for inputs of size n.
inline Matrix dct_basis(std::size_t n, std::size_t first, std::size_t count) {
  Matrix d(count, n);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t k = first + r;
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < n; ++i)
      d(r, i) = scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                                 (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
  }
  return d;
}

inline constexpr std::size_t kMfccCount = 13;

/// Cepstra 1..K of each log-mel frame (c0 dropped).
inline MfccSequence mfcc_from_mel(const Matrix& log_mel, std::size_t count = kMfccCount) {
  require(log_mel.rows >= 1, ErrorKind::TooShort, "mfcc needs at least one frame");
  require(count < log_mel.cols, ErrorKind::InvalidArgument, "too many cepstral coefficients");
  const Matrix d = dct_basis(log_mel.cols, 1, count);
  MfccSequence out{Matrix(log_mel.rows, count)};
  for (std::size_t t = 0; t < log_mel.rows; ++t) {
    const auto in = log_mel.row(t);
    for (std::size_t k = 0; k < count; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in.size(); ++i) acc += d(k, i) * in[i];
      out.coeffs(t, k) = acc;
    }
  }
  return out;
}

inline MfccSequence mfcc(const Waveform& w) { return mfcc_from_mel(mel_spectrogram(w).bins); }

}  // namespace voiceguard

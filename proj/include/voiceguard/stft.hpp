#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "fft.hpp"
#include "matrix.hpp"
#include "waveform.hpp"

namespace voiceguard {

enum class Window { Hann, Rect };

struct FftParams {
  std::size_t n_fft = 1024;
  std::size_t hop = 256;
  std::size_t win = 1024;
  Window window = Window::Hann;

  std::size_t bins() const noexcept { return n_fft / 2 + 1; }
  bool operator==(const FftParams&) const = default;
};

inline void validate(const FftParams& p) {
  require(is_pow2(p.n_fft), ErrorKind::InvalidArgument, "n_fft must be a power of two");
  require(p.hop >= 1 && p.hop <= p.win && p.win <= p.n_fft, ErrorKind::InvalidArgument,
          "fft params require 1 <= hop <= win <= n_fft");
  // Periodic Hann is COLA when the hop divides the window at least twice;
  // the rectangular window only needs the hop to divide it.
  const std::size_t min_overlap = p.window == Window::Hann ? 2 : 1;
  require(p.win % p.hop == 0 && p.win / p.hop >= min_overlap, ErrorKind::InvalidArgument,
          "hop does not satisfy constant overlap-add for the window");
}

/// Window of length `win` (periodic Hann or all ones), zero-padded and
/// centred in an n_fft frame.
inline std::vector<double> analysis_window(const FftParams& p) {
  std::vector<double> w(p.n_fft, 0.0);
  const std::size_t off = (p.n_fft - p.win) / 2;
  for (std::size_t i = 0; i < p.win; ++i)
    w[off + i] = p.window == Window::Rect
                     ? 1.0
                     : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                            static_cast<double>(p.win));
  return w;
}

inline std::size_t frame_count(std::size_t length, const FftParams& p) {
  return 1 + length / p.hop;
}

struct ComplexSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<cplx> data;
  FftParams params;
  std::size_t signal_length = 0;

  cplx& at(std::size_t t, std::size_t k) { return data[t * bins + k]; }
  const cplx& at(std::size_t t, std::size_t k) const { return data[t * bins + k]; }
};

struct Spectrogram {
  Matrix bins;  // frames x (n_fft/2 + 1), nonnegative
  FftParams params;
};

namespace detail {

inline std::size_t reflect_index(std::ptrdiff_t j, std::size_t n) {
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  if (j < 0) j = -j;
  if (j > last) j = 2 * last - j;
  return static_cast<std::size_t>(j);
}

inline void check_length(std::size_t n, const FftParams& p) {
  require(n >= p.win && n > p.n_fft / 2, ErrorKind::TooShort,
          "signal of " + std::to_string(n) + " samples is shorter than one analysis window (" +
              std::to_string(std::max(p.win, p.n_fft / 2 + 1)) + ")");
}

}  // namespace detail

/// Centre-padded (reflection) short-time Fourier transform of a real signal.
inline ComplexSpectrogram stft(std::span<const double> x, const FftParams& p = {}) {
  validate(p);
  detail::check_length(x.size(), p);
  const std::size_t n = x.size();
  const auto pad = static_cast<std::ptrdiff_t>(p.n_fft / 2);
  const auto win = analysis_window(p);

  ComplexSpectrogram out;
  out.frames = frame_count(n, p);
  out.bins = p.bins();
  out.params = p;
  out.signal_length = n;
  out.data.resize(out.frames * out.bins);

  std::vector<double> buf(p.n_fft);
  for (std::size_t t = 0; t < out.frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * p.hop) - pad;
    if (start >= 0 && static_cast<std::size_t>(start) + p.n_fft <= n) {
      const double* src = x.data() + start;
      for (std::size_t i = 0; i < p.n_fft; ++i) buf[i] = win[i] * src[i];
    } else {
      for (std::size_t i = 0; i < p.n_fft; ++i)
        buf[i] = win[i] * x[detail::reflect_index(start + static_cast<std::ptrdiff_t>(i), n)];
    }
    rfft(buf, std::span<cplx>(out.data).subspan(t * out.bins, out.bins));
  }
  return out;
}

inline ComplexSpectrogram stft(const Waveform& w, const FftParams& p = {}) {
  return stft(w.view(), p);
}

inline Spectrogram magnitude(const ComplexSpectrogram& s) {
  Spectrogram out{Matrix(s.frames, s.bins), s.params};
  for (std::size_t i = 0; i < s.data.size(); ++i) out.bins.data[i] = cabs_fast(s.data[i]);
  return out;
}

/// Adjoint of `stft` (including the reflection padding). `grad` holds
/// dL/dRe + i dL/dIm per bin; the result is dL/dx.
inline std::vector<double> stft_adjoint(const ComplexSpectrogram& grad) {
  const FftParams& p = grad.params;
  const std::size_t n = grad.signal_length;
  const auto pad = static_cast<std::ptrdiff_t>(p.n_fft / 2);
  const auto win = analysis_window(p);
  std::vector<double> gx(n, 0.0);
  // Re(sum_k G_k e^{+}) over bins 0..n/2 is the Hermitian inverse of the
  // half spectrum with interior bins halved and the end bins made real.
  std::vector<cplx> half(grad.bins), work;
  std::vector<double> buf(p.n_fft);
  for (std::size_t t = 0; t < grad.frames; ++t) {
    for (std::size_t k = 0; k < grad.bins; ++k) half[k] = 0.5 * grad.at(t, k);
    half.front() = grad.at(t, 0).real();
    half.back() = grad.at(t, grad.bins - 1).real();
    irfft(half, buf, work);
    const auto start = static_cast<std::ptrdiff_t>(t * p.hop) - pad;
    if (start >= 0 && static_cast<std::size_t>(start) + p.n_fft <= n) {
      double* dst = gx.data() + start;
      for (std::size_t i = 0; i < p.n_fft; ++i) dst[i] += win[i] * buf[i];
    } else {
      for (std::size_t i = 0; i < p.n_fft; ++i)
        gx[detail::reflect_index(start + static_cast<std::ptrdiff_t>(i), n)] += win[i] * buf[i];
    }
  }
  return gx;
}

/// Pulls a gradient on |X| back to the complex bins. Zero-magnitude bins get
/// a zero subgradient.
inline ComplexSpectrogram magnitude_vjp(const ComplexSpectrogram& s, const Matrix& g_mag) {
  require(g_mag.rows == s.frames && g_mag.cols == s.bins, ErrorKind::ShapeMismatch,
          "magnitude gradient shape does not match spectrogram");
  ComplexSpectrogram out = s;
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    const double m = cabs_fast(s.data[i]);
    out.data[i] = m > 0.0 ? g_mag.data[i] * s.data[i] / m : cplx{};
  }
  return out;
}

struct OverlapAdd {
  std::vector<double> signal;       // windowed frames summed, padded time axis
  std::vector<double> window_power; // sum of squared windows on the same axis
};

/// Unnormalised synthesis: inverse DFT per frame, windowed and summed.
inline OverlapAdd overlap_add(const ComplexSpectrogram& s, const FftParams& p) {
  require(s.params == p, ErrorKind::ParamMismatch, "istft params differ from the forward transform");
  require(s.frames >= 1 && s.bins == p.bins(), ErrorKind::ShapeMismatch,
          "istft needs at least one frame of n_fft/2+1 bins");
  const auto win = analysis_window(p);
  const std::size_t padded = p.n_fft + (s.frames - 1) * p.hop;
  OverlapAdd out{std::vector<double>(padded, 0.0), std::vector<double>(padded, 0.0)};
  std::vector<double> buf(p.n_fft);
  std::vector<cplx> work;
  for (std::size_t t = 0; t < s.frames; ++t) {
    irfft(std::span<const cplx>(s.data).subspan(t * s.bins, s.bins), buf, work);
    for (std::size_t i = 0; i < p.n_fft; ++i) {
      out.signal[t * p.hop + i] += win[i] * buf[i] / static_cast<double>(p.n_fft);
      out.window_power[t * p.hop + i] += win[i] * win[i];
    }
  }
  return out;
}

/// Overlap-add inverse with window-square normalisation. Output length is the
/// forward transform's signal length.
inline std::vector<double> istft(const ComplexSpectrogram& s, const FftParams& p) {
  const OverlapAdd ola = overlap_add(s, p);
  const std::size_t pad = p.n_fft / 2;
  const std::size_t len = s.signal_length > 0 ? s.signal_length : (s.frames - 1) * p.hop;
  std::vector<double> out(len, 0.0);
  for (std::size_t i = 0; i < len && i + pad < ola.signal.size(); ++i) {
    const double ws = ola.window_power[i + pad];
    out[i] = ws > 1e-11 ? ola.signal[i + pad] / ws : 0.0;
  }
  return out;
}

}  // namespace voiceguard

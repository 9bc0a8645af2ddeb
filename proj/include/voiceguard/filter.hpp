#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "error.hpp"
#include "waveform.hpp"

namespace voiceguard {

/// Normalised second-order section (a0 = 1).
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  bool stable() const {
    // Jury conditions for z^2 + a1 z + a2.
    return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
  }
};

inline Biquad lowpass_biquad(double cutoff_hz, double rate_hz, double q = std::numbers::sqrt2 / 2) {
  require(cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0, ErrorKind::InvalidArgument,
          "lowpass cutoff must lie strictly between 0 and Nyquist");
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / rate_hz;
  const double c = std::cos(w0), alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  return {(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0, -2.0 * c / a0,
          (1.0 - alpha) / a0};
}

/// Band-pass with 0 dB gain at the geometric centre of [lo_hz, hi_hz].
inline Biquad bandpass_biquad(double lo_hz, double hi_hz, double rate_hz) {
  require(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < rate_hz / 2.0, ErrorKind::InvalidArgument,
          "band edges must satisfy 0 < lo < hi < Nyquist");
  const double f0 = std::sqrt(lo_hz * hi_hz);
  const double bw = std::log2(hi_hz / lo_hz);
  const double w0 = 2.0 * std::numbers::pi * f0 / rate_hz;
  const double s = std::sin(w0), c = std::cos(w0);
  const double alpha = s * std::sinh(std::numbers::ln2 / 2.0 * bw * w0 / s);
  const double a0 = 1.0 + alpha;
  return {alpha / a0, 0.0, -alpha / a0, -2.0 * c / a0, (1.0 - alpha) / a0};
}

inline std::vector<double> apply_biquad(const Biquad& f, std::span<const double> x) {
  std::vector<double> y(x.size());
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double v = f.b0 * x[n] + f.b1 * x1 + f.b2 * x2 - f.a1 * y1 - f.a2 * y2;
    x2 = x1;
    x1 = x[n];
    y2 = y1;
    y1 = v;
    y[n] = v;
  }
  return y;
}

inline Waveform lowpass(const Waveform& x, double cutoff_hz) {
  return {apply_biquad(lowpass_biquad(cutoff_hz, x.sample_rate), x.samples), x.sample_rate, x.id};
}

inline Waveform bandpass(const Waveform& x, double lo_hz, double hi_hz) {
  return {apply_biquad(bandpass_biquad(lo_hz, hi_hz, x.sample_rate), x.samples), x.sample_rate,
          x.id};
}

}  // namespace voiceguard
